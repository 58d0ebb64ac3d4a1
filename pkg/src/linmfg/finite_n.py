"""Finite-population checks: exact joint MDPs for small N, Monte Carlo for large N."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from itertools import product

import numpy as np
from scipy.stats import norm

from .errors import StateSpaceTooLarge
from .mdp import Mdp, optimal_value, policy_evaluation, policy_iteration
from .model import MfgModel, as_distribution, as_policy, mean_field_reduction
from .transport import w1, w1_two_point

DEFAULT_CAP = 4096
CI_LEVEL = 0.99


def default_horizon(model: MfgModel, trunc: float = 1e-4) -> int:
    """Smallest T with beta^T cbar_max / (1 - beta) <= trunc."""
    beta, cmax = model.beta, model.cbar_max
    if cmax <= 0:
        return 1
    return max(1, math.ceil(math.log(trunc * (1 - beta) / cmax) / math.log(beta)))


@dataclass(frozen=True)
class SimConfig:
    N: int
    horizon: int
    reps: int = 200
    seed: int = 0
    antithetic: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.N < 1 or self.horizon < 0 or self.reps < 1 or self.workers < 1:
            raise ValueError("N, reps and workers must be positive and horizon nonnegative")

    def as_dict(self) -> dict:
        return asdict(self)


# -- exact joint MDP ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class JointMdp:
    """Agent 1's MDP when the other N-1 agents play a fixed policy.

    Joint states are tuples ``(x_1, ..., x_N)`` in lexicographic order, agent 1
    most significant; ``states[k]`` is the tuple of joint index ``k``.
    """

    mdp: Mdp
    N: int
    n_local: int
    states: np.ndarray

    def index(self, tup) -> int:
        k = 0
        for x in tup:
            k = k * self.n_local + int(x)
        return k


def _check_cap(n_states: int, N: int, cap: int):
    if n_states ** N > cap:
        raise StateSpaceTooLarge(f"|X|^N = {n_states}^{N} exceeds the cap {cap}")


def build_joint_mdp(model: MfgModel, pi_star, N: int, cap: int = DEFAULT_CAP) -> JointMdp:
    nX, nA = model.n_states, model.n_actions
    _check_cap(nX, N, cap)
    pi_star = as_policy(pi_star, nX, nA)
    states = np.array(list(product(range(nX), repeat=N)), dtype=int).reshape(-1, N)
    S = states.shape[0]
    P = np.empty((S, nA, S))
    c = np.empty((S, nA))
    for k, xs in enumerate(states):
        e = np.bincount(xs, minlength=nX) / N
        p_e = np.einsum("xazy,z->xay", model.kernel, e)  # p(y | x, a, e)
        opp = np.ones(1)
        for x in xs[1:]:
            opp = np.kron(opp, pi_star[x] @ p_e[x])
        for a in range(nA):
            P[k, a] = np.kron(p_e[xs[0], a], opp)
        c[k] = model.cost[xs[0]] @ e
    rowsum = P.sum(axis=-1)
    if np.max(np.abs(rowsum - 1.0)) > 1e-12:
        raise ArithmeticError("joint kernel rows are not stochastic")
    return JointMdp(Mdp(P=P, c=c, beta=model.beta), N, nX, states)


def product_init(mu, N: int) -> np.ndarray:
    out = np.ones(1)
    for _ in range(N):
        out = np.kron(out, mu)
    return out


def exact_epsilon_N(model: MfgModel, mu_star, pi_star, N: int, cap: int = DEFAULT_CAP) -> dict:
    """Exact unilateral-deviation gain of agent 1 against (pi*, ..., pi*), started from mu*^N."""
    mu_star = as_distribution(mu_star, model.n_states)
    joint = build_joint_mdp(model, pi_star, N, cap)
    init = product_init(mu_star, N)
    pi = np.asarray(pi_star, dtype=float)
    pi_joint = pi[joint.states[:, 0]]
    V_eq, J_eq = policy_evaluation(joint.mdp, pi_joint, init)
    V_best, _ = policy_iteration(joint.mdp, pi_joint)
    J_best = float(init @ V_best)
    return {
        "N": N,
        "J_equilibrium": J_eq,
        "J_best_response": J_best,
        "eps_N": J_eq - J_best,
    }


def check_symmetry_and_lipschitz(joint: JointMdp, space, K1N: float, K2N: float, V=None, tol: float = 1e-9) -> dict:
    """Exhaustive check of the permutation symmetry and the Lipschitz bound of the joint V*."""
    from .transport import w1_empirical

    V = optimal_value(joint.mdp) if V is None else np.asarray(V)
    states = joint.states
    canon = np.array([joint.index((s[0], *sorted(s[1:]))) for s in states])
    sym = float(np.max(np.abs(V - V[canon])))
    d = space.dist
    cache = {}
    tails = [tuple(sorted(s[1:])) for s in states]
    worst = -np.inf
    violations = 0
    S = len(states)
    for i in range(S):
        for j in range(S):
            key = (tails[i], tails[j])
            if key not in cache:
                cache[key] = w1_empirical(tails[i], tails[j], space) if joint.N > 1 else 0.0
            bound = K1N * d[states[i, 0], states[j, 0]] + K2N * cache[key]
            gap = abs(V[i] - V[j]) - bound
            worst = max(worst, gap)
            violations += gap > tol
    return {
        "symmetry_residual": sym,
        "symmetric": bool(sym <= tol),
        "lipschitz_worst_excess": float(worst),
        "lipschitz_violations": int(violations),
        "pairs": S * S,
        "lipschitz_holds": bool(violations == 0),
    }


# -- Monte Carlo ----------------------------------------------------------------------

def _rep_rng(seed: int, rep: int, antithetic: bool):
    """Independent stream per repetition; antithetic pairs share a stream."""
    key = rep // 2 if antithetic else rep
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(key,))), antithetic and rep % 2 == 1


def _sample_index(cdf, u):
    """Inverse-CDF draw; ``cdf`` rows are cumulative distributions."""
    idx = (u[:, None] > cdf).sum(axis=1)
    return np.minimum(idx, cdf.shape[1] - 1)


def _distance_to(mu_ref, space):
    if space.size == 2:
        return lambda e: w1_two_point(e, mu_ref, space.dist[0, 1])
    return lambda e: w1(e, mu_ref, space)


def _one_rep(args):
    model, pi, init, cfg, rep, mu_ref = args
    rng, flip = _rep_rng(cfg.seed, rep, cfg.antithetic)
    N, T, beta = cfg.N, cfg.horizon, model.beta
    nX = model.n_states

    def uniforms(k):
        u = rng.random(k)
        return 1.0 - u if flip else u

    pi_cdf = np.cumsum(pi, axis=1)
    ker_cdf = np.cumsum(model.kernel, axis=-1)
    dist = _distance_to(mu_ref, model.states)
    x = _sample_index(np.broadcast_to(np.cumsum(init), (N, nX)), uniforms(N))
    w1_path = np.empty(T + 1)
    cost_all = 0.0
    cost_one = 0.0
    for t in range(T + 1):
        e = np.bincount(x, minlength=nX) / N
        w1_path[t] = dist(e)
        if t == T:
            break
        # z_i is the state of a uniformly chosen agent, so z_i ~ e
        zi = x[np.minimum((uniforms(N) * N).astype(int), N - 1)]
        a = _sample_index(pi_cdf[x], uniforms(N))
        c = model.cost[x, a, zi]
        disc = beta ** t
        cost_all += disc * c.mean()
        cost_one += disc * c[0]
        x = _sample_index(ker_cdf[x, a, zi], uniforms(N))
    return w1_path, cost_all, cost_one


def simulate_population(model: MfgModel, pi, init, cfg: SimConfig, mu_ref=None) -> dict:
    """Simulate N agents sharing ``pi``; per-t W1(e_t, mu_ref) and discounted-cost estimates.

    ``mu_ref`` defaults to ``init``. Results depend only on ``cfg.seed`` and
    the repetition index, not on the number of workers.
    """
    pi = as_policy(pi, model.n_states, model.n_actions)
    init = as_distribution(init, model.n_states)
    mu_ref = init if mu_ref is None else as_distribution(mu_ref, model.n_states)
    jobs = [(model, pi, init, cfg, r, mu_ref) for r in range(cfg.reps)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
            out = list(ex.map(_one_rep, jobs))
    else:
        out = [_one_rep(j) for j in jobs]
    W = np.array([o[0] for o in out])
    costs = np.array([o[1] for o in out])
    costs_one = np.array([o[2] for o in out])
    z = norm.ppf(0.5 + CI_LEVEL / 2)
    mean = W.mean(axis=0)
    half = z * W.std(axis=0, ddof=1) / np.sqrt(cfg.reps) if cfg.reps > 1 else np.zeros_like(mean)
    return {
        "t": np.arange(cfg.horizon + 1),
        "mean_w1": mean,
        "ci_low": mean - half,
        "ci_high": mean + half,
        "w1": W,
        "cost": costs,
        "cost_agent1": costs_one,
        "config": cfg.as_dict(),
    }


def estimate_cost_gap(model: MfgModel, mu_star, pi_star, cfg: SimConfig, sim: dict | None = None) -> dict:
    """Monte-Carlo |J_N - J(mu*; pi*)| with all agents on pi* started from mu*^N.

    The finite-N cost is averaged over agents, which is unbiased for agent 1 by
    exchangeability. The truncation bound is reported separately and added to
    the confidence half-width. A matching ``sim`` from
    :func:`simulate_population` may be passed to avoid a second run.
    """
    if sim is None:
        sim = simulate_population(model, pi_star, mu_star, cfg, mu_star)
    _, J = policy_evaluation(mean_field_reduction(model, mu_star), pi_star, mu_star)
    est = float(sim["cost"].mean())
    se = float(sim["cost"].std(ddof=1) / np.sqrt(cfg.reps)) if cfg.reps > 1 else 0.0
    trunc = model.beta ** cfg.horizon * model.cbar_max / (1 - model.beta)
    half = norm.ppf(0.5 + CI_LEVEL / 2) * se + trunc
    return {
        "J_mean_field": J,
        "J_N_estimate": est,
        "gap_estimate": abs(est - J),
        "ci": [float(est - J - half), float(est - J + half)],
        "ci_half_width": float(half),
        "truncation_bound": trunc,
        "config": cfg.as_dict(),
    }


def variance_bound_check(model: MfgModel, pi, y_vec, reps: int, seed: int = 0, test_functions=None) -> dict:
    """Compare E|<g, e[x]> - <g, one-step mean>| with its variance bound, one g at a time.

    Given ``y``, each agent samples a peer state z_i ~ e[y] and moves with the
    policy-averaged kernel. Default test functions are the 1-Lipschitz distances
    to each state and the zero function.
    """
    pi = as_policy(pi, model.n_states, model.n_actions)
    y = np.asarray(y_vec, dtype=int)
    N = y.size
    nX = model.n_states
    e = np.bincount(y, minlength=nX) / N
    kpi = np.einsum("ya,yazx->yzx", pi, model.kernel)  # policy-averaged kernel [y, z, x]
    marg = np.einsum("yzx,z->yx", kpi, e)  # law of x_i given y_i
    if test_functions is None:
        test_functions = [model.states.dist[:, k] for k in range(nX)] + [np.zeros(nX)]
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    z_all = rng.choice(nX, size=(reps, N), p=e)
    cdf = np.cumsum(kpi[y[None, :], z_all], axis=-1)
    u = rng.random((reps, N))
    x_all = np.minimum((u[..., None] > cdf).sum(axis=-1), nX - 1)
    # one fresh draw per (rep, agent); counts of each state per rep
    counts = np.stack([(x_all == s).sum(axis=1) for s in range(nX)], axis=1) / N
    out = []
    for g in test_functions:
        g = np.asarray(g, dtype=float)
        target = float(e @ marg @ g)
        dev = np.abs(counts @ g - target)
        var = marg @ g ** 2 - (marg @ g) ** 2
        bound = math.sqrt(max(float(var[y].sum()), 0.0)) / N
        est = float(dev.mean())
        se = float(dev.std(ddof=1) / math.sqrt(reps)) if reps > 1 else 0.0
        out.append({"estimate": est, "bound": bound, "stderr": se, "holds": est <= bound + 3 * se})
    return {"N": N, "reps": reps, "checks": out, "all_hold": all(c["holds"] for c in out)}


def w1_csv(sim: dict) -> str:
    lines = ["t,mean_w1,ci_low,ci_high"]
    for t, m, lo, hi in zip(sim["t"], sim["mean_w1"], sim["ci_low"], sim["ci_high"]):
        lines.append(f"{int(t)},{float(m)!r},{float(lo)!r},{float(hi)!r}")
    return "\n".join(lines) + "\n"
