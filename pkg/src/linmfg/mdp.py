"""Finite discounted MDPs: the oracle layer used to check GNEP solutions."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import NoConvergence, SingularSystem
from .model import MfgModel, as_distribution, as_policy, mean_field_reduction

TIE_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class Mdp:
    """``P[x, a, y]`` transition probabilities, ``c[x, a]`` stage costs, discount ``beta``."""

    P: np.ndarray
    c: np.ndarray
    beta: float

    def __post_init__(self):
        for attr in ("P", "c"):
            arr = np.array(getattr(self, attr), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, attr, arr)
        if self.P.ndim != 3 or self.c.shape != self.P.shape[:2] or self.P.shape[0] != self.P.shape[2]:
            raise ValueError(f"inconsistent MDP shapes P{self.P.shape} c{self.c.shape}")

    @property
    def n_states(self) -> int:
        return self.P.shape[0]

    @property
    def n_actions(self) -> int:
        return self.P.shape[1]


def q_values(mdp: Mdp, V) -> np.ndarray:
    return mdp.c + mdp.beta * mdp.P @ np.asarray(V, dtype=float)


@dataclass
class ValueIterationResult:
    V: np.ndarray
    Q: np.ndarray
    iterations: int
    residuals: list = field(default_factory=list)

    def __iter__(self):
        # allows ``V, Q = value_iteration(...)``
        return iter((self.V, self.Q))


def value_iteration(mdp: Mdp, tol: float = 1e-10, max_iter: int = 1_000_000) -> ValueIterationResult:
    """Iterate the Bellman operator until ``||V - V*||_inf <= tol`` is guaranteed.

    The stopping residual is ``tol (1 - beta) / (2 beta)``. Successive
    sup-norm differences are kept in ``residuals``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    beta = mdp.beta
    target = tol * (1 - beta) / (2 * beta) if beta > 0 else np.inf
    V = np.zeros(mdp.n_states)
    residuals = []
    for it in range(1, max_iter + 1):
        V_new = q_values(mdp, V).min(axis=1)
        r = float(np.max(np.abs(V_new - V))) if V.size else 0.0
        residuals.append(r)
        V = V_new
        if r <= target:
            break
    else:
        raise NoConvergence(f"value iteration residual {r:g} after {max_iter} iterations")
    return ValueIterationResult(V, q_values(mdp, V), it, residuals)


def greedy_policy(Q, tie_tol: float = TIE_TOL) -> np.ndarray:
    """Deterministic argmin policy; actions within ``tie_tol`` of the minimum go to the lowest index."""
    Q = np.asarray(Q, dtype=float)
    best = Q.min(axis=1, keepdims=True)
    choice = np.argmax(Q <= best + tie_tol, axis=1)
    pi = np.zeros_like(Q)
    pi[np.arange(Q.shape[0]), choice] = 1.0
    return pi


def closed_loop(mdp: Mdp, pi) -> tuple[np.ndarray, np.ndarray]:
    """State kernel and cost vector under a stationary policy."""
    pi = as_policy(pi, mdp.n_states, mdp.n_actions)
    return np.einsum("xa,xay->xy", pi, mdp.P), np.einsum("xa,xa->x", pi, mdp.c)


def _solve(A, b):
    try:
        out = np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    if not np.all(np.isfinite(out)):
        raise SingularSystem("non-finite solution")
    return out


def policy_evaluation(mdp: Mdp, pi, init) -> tuple[np.ndarray, float]:
    """Direct solve of ``(I - beta P_pi) V = c_pi``; returns ``(V, <init, V>)``."""
    P_pi, c_pi = closed_loop(mdp, pi)
    init = as_distribution(init, mdp.n_states)
    V = _solve(np.eye(mdp.n_states) - mdp.beta * P_pi, c_pi)
    return V, float(init @ V)


def policy_iteration(mdp: Mdp, pi0=None, tie_tol: float = 1e-12, max_iter: int = 10_000):
    """Howard's policy iteration with exact evaluation. Returns ``(V*, pi*)``."""
    nX = mdp.n_states
    if pi0 is None:
        pi0 = greedy_policy(mdp.c)
    pi = np.asarray(pi0, dtype=float)
    uniform = np.full(nX, 1.0 / nX)
    for _ in range(max_iter):
        V, _ = policy_evaluation(mdp, pi, uniform)
        Q = q_values(mdp, V)
        # only switch where the improvement is real, which guarantees termination
        current = np.einsum("xa,xa->x", pi, Q)
        improve = Q.min(axis=1) < current - tie_tol * (1 + np.abs(current))
        if not improve.any():
            return V, pi
        new = greedy_policy(Q, 0.0)
        pi = np.where(improve[:, None], new, pi)
    raise NoConvergence("policy iteration did not terminate")


def optimal_value(mdp: Mdp) -> np.ndarray:
    """V* to machine precision: value iteration warm start, then exact policy iteration."""
    vi = value_iteration(mdp, tol=1e-8)
    V, _ = policy_iteration(mdp, greedy_policy(vi.Q))
    return V


def occupation_measure(mdp: Mdp, pi, init) -> np.ndarray:
    """Discount-normalized occupation measure, flattened over (x, a) with index x * |A| + a."""
    P_pi, _ = closed_loop(mdp, pi)
    init = as_distribution(init, mdp.n_states)
    beta = mdp.beta
    marginal = _solve((np.eye(mdp.n_states) - beta * P_pi).T, (1 - beta) * init)
    return (np.asarray(pi, dtype=float) * marginal[:, None]).ravel()


def stationary_distribution(kernel, tol: float = 1e-9) -> np.ndarray:
    """A solution of ``mu = mu P``, ``sum(mu) = 1`` by least squares.

    For reducible chains this is the minimum-norm member of the invariant set,
    so the output is a deterministic function of the kernel.
    """
    P = np.asarray(kernel, dtype=float)
    n = P.shape[0]
    A = np.vstack([P.T - np.eye(n), np.ones((1, n))])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    mu = np.linalg.lstsq(A, b, rcond=None)[0]
    mu = np.where(np.abs(mu) < 1e-15, 0.0, mu)
    resid = max(float(np.max(np.abs(mu @ P - mu))), abs(mu.sum() - 1.0))
    if resid > tol or (mu < -tol).any():
        raise NoConvergence(f"stationary solve residual {resid:g}")
    mu = np.clip(mu, 0.0, None)
    return mu / mu.sum()


def recurrent_class_count(kernel, tol: float = 0.0) -> int:
    """Number of closed communicating classes; more than one means several invariant laws."""
    P = np.asarray(kernel, dtype=float)
    adj = P > tol
    n_comp, labels = connected_components(adj, directed=True, connection="strong")
    closed = 0
    for k in range(n_comp):
        members = labels == k
        if not adj[np.ix_(members, ~members)].any():
            closed += 1
    return closed


def exploitability(model: MfgModel, mu, pi) -> float:
    """J(mu; pi) - min_pi' J(mu; pi') in the MDP frozen at ``mu``, started from ``mu``."""
    mdp = mean_field_reduction(model, mu)
    _, J = policy_evaluation(mdp, pi, mu)
    V_star = optimal_value(mdp)
    return J - float(np.asarray(mu) @ V_star)


@dataclass(frozen=True)
class MfeReport:
    bellman_residual: float
    invariance_residual: float
    passed: bool
    recurrent_classes: int
    tol: float

    def as_dict(self) -> dict:
        return {
            "bellman_residual": self.bellman_residual,
            "invariance_residual": self.invariance_residual,
            "pass": self.passed,
            "recurrent_classes": self.recurrent_classes,
            "tol": self.tol,
        }


def verify_mfe(model: MfgModel, mu, pi, tol: float = 0.02) -> MfeReport:
    mu = as_distribution(mu, model.n_states)
    pi = as_policy(pi, model.n_states, model.n_actions)
    bellman = exploitability(model, mu, pi)
    P_pi, _ = closed_loop(mean_field_reduction(model, mu), pi)
    inv = float(np.max(np.abs(mu - mu @ P_pi)))
    ok = bellman <= tol and inv <= tol
    return MfeReport(bellman, inv, bool(ok), recurrent_class_count(P_pi), tol)
