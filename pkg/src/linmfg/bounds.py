"""Closed-form Lipschitz constants, LLN rates and finite-N error bounds.

All quantities are plain arithmetic on a :class:`LipschitzProfile`. Covering
numbers are handled in log-space and become ``math.inf`` once they exceed
``exp(700)``; every downstream formula propagates the infinity.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from itertools import combinations
from typing import Callable

import numpy as np

from .errors import AssumptionFViolation, AssumptionViolation, ContractionViolation, NTooSmall
from .model import MfgModel
from .transport import w1

LOG_OVERFLOW = 700.0
INF = math.inf


def sufficient_L(density_params: dict, beta: float) -> Callable:
    """Generic (L1, L2) map built from density-kernel regularity constants.

    Keys: ``L1g, L2g, K1g, K2g, C2inf, grad_mass, dist_mass``; missing keys default to 0.
    """
    p = {k: float(density_params.get(k, 0.0)) for k in ("L1g", "L2g", "K1g", "K2g", "C2inf", "grad_mass", "dist_mass")}
    if any(v < 0 for v in p.values()):
        raise ValueError("density parameters must be nonnegative")

    def Lfun(R1, R2, R3):
        L1 = p["L1g"] + beta * (R3 * p["grad_mass"] + p["K1g"] * R1 * p["dist_mass"])
        L2 = p["L2g"] * p["C2inf"] + beta * (R2 * p["grad_mass"] + p["K2g"] * p["C2inf"] * R1 * p["dist_mass"])
        return L1, L2

    return Lfun


UNIT_DENSITY = dict(L1g=1.0, L2g=1.0, K1g=1.0, K2g=1.0, C2inf=1.0, grad_mass=1.0, dist_mass=1.0)


@dataclass
class LipschitzProfile:
    L1: float
    L2: float
    L3: float
    K1: float
    K2: float
    K3: float
    rho: float
    diam: float
    ddim: float
    cbar_max: float
    Kclass: float
    Lfun: Callable = field(repr=False, default=None)

    def __post_init__(self):
        vals = [self.L1, self.L2, self.L3, self.K1, self.K2, self.K3, self.diam, self.ddim, self.cbar_max]
        if any(v < 0 for v in vals) or self.rho <= 0:
            raise ValueError("Lipschitz constants must be nonnegative and rho positive")
        if self.Kclass < max(self.cbar_max, self.diam) - 1e-12:
            raise ValueError("Kclass must be at least max(cbar_max, diam)")

    def as_dict(self) -> dict:
        d = asdict(self)
        d.pop("Lfun")
        return d


def doubling_dimension(space) -> float:
    """log2 of a greedy upper bound on the doubling constant of a finite metric space."""
    d = space.dist
    n = space.size
    if n <= 1:
        return 0.0
    radii = np.unique(d[d > 0])
    worst = 1
    for x in range(n):
        for r in radii:
            ball = list(np.flatnonzero(d[x] <= r))
            count = 0
            while ball:
                # greedy: the centre covering most remaining points at radius r/2
                cover = [np.flatnonzero(d[c, ball] <= r / 2) for c in ball]
                k = int(np.argmax([len(cv) for cv in cover]))
                remove = set(np.asarray(ball)[cover[k]].tolist())
                ball = [b for b in ball if b not in remove]
                count += 1
            worst = max(worst, count)
    return math.log2(worst)


def _max_slope(values, dist, axis_pairs):
    best = 0.0
    for i, j in axis_pairs:
        if dist[i, j] > 0:
            best = max(best, float(np.max(values(i, j))) / dist[i, j])
    return best


def estimate_lipschitz(model: MfgModel, action_metric=None, rho: float = 1.0, Lfun: Callable | None = None,
                       ddim: float | None = None) -> LipschitzProfile:
    """Exact Lipschitz constants of the cost and kernel by enumeration over pairs.

    Actions carry the discrete unit metric unless ``action_metric`` is given.
    ``Lfun`` defaults to :func:`sufficient_L` with unit density constants.
    """
    nX, nA = model.n_states, model.n_actions
    dX = model.states.dist
    dA = 1.0 - np.eye(nA) if action_metric is None else np.asarray(action_metric, dtype=float)
    c, P = model.cost, model.kernel
    sp = model.states
    xs = list(combinations(range(nX), 2))
    acts = list(combinations(range(nA), 2))

    L1 = _max_slope(lambda i, j: np.abs(c[i] - c[j]), dX, xs)
    L2 = _max_slope(lambda i, j: np.abs(c[:, i] - c[:, j]), dA, acts)
    L3 = _max_slope(lambda i, j: np.abs(c[:, :, i] - c[:, :, j]), dX, xs)

    def kernel_w1(rows_a, rows_b):
        return np.array([w1(p, q, sp) for p, q in zip(rows_a.reshape(-1, nX), rows_b.reshape(-1, nX))])

    K1 = _max_slope(lambda i, j: kernel_w1(P[i], P[j]), dX, xs)
    K2 = _max_slope(lambda i, j: kernel_w1(P[:, i], P[:, j]), dA, acts)
    K3 = _max_slope(lambda i, j: kernel_w1(P[:, :, i], P[:, :, j]), dX, xs)
    diam = sp.diam
    L1, L2, L3, K1, K2, K3 = (float(v) for v in (L1, L2, L3, K1, K2, K3))
    return LipschitzProfile(
        L1=L1, L2=L2, L3=L3, K1=K1, K2=K2, K3=K3, rho=rho, diam=diam,
        ddim=doubling_dimension(sp) if ddim is None else ddim,
        cbar_max=model.cbar_max, Kclass=max(model.cbar_max, diam),
        Lfun=Lfun if Lfun is not None else sufficient_L(UNIT_DENSITY, model.beta),
    )


def empirical_policy_lipschitz(pi, space, action_metric=None) -> float:
    """Smallest L with W1(pi(x), pi(y)) <= L d(x, y), mixed actions compared in W1 over the action metric."""
    from .model import FiniteMetricSpace

    pi = np.asarray(pi, dtype=float)
    nA = pi.shape[1]
    dA = 1.0 - np.eye(nA) if action_metric is None else np.asarray(action_metric, dtype=float)
    aspace = FiniteMetricSpace([str(a) for a in range(nA)], dA)
    best = 0.0
    for i, j in combinations(range(pi.shape[0]), 2):
        if space.dist[i, j] > 0:
            best = max(best, w1(pi[i], pi[j], aspace) / space.dist[i, j])
    return best


def policy_lipschitz(profile: LipschitzProfile, beta: float) -> float:
    """L* = 2 L1fun(L1 / (1 - beta K1), 0, 0) / rho."""
    if beta * profile.K1 >= 1:
        raise ContractionViolation(f"beta K1 = {beta * profile.K1:g} >= 1")
    LF = profile.Lfun(profile.L1 / (1 - beta * profile.K1), 0.0, 0.0)[0]
    return 2.0 * LF / profile.rho


def _kn_coefficients(pr: LipschitzProfile, beta: float, N: float, Lstar: float):
    a1 = pr.L1 + pr.L3 / N
    b1 = beta * (pr.K1 + pr.K3 / N)
    c1 = beta * pr.K3 / N
    a2 = pr.L3
    b2 = beta * pr.K3
    c2 = beta * (pr.K1 + pr.K2 * Lstar + pr.K3)
    return a1, b1, c1, a2, b2, c2


def value_lipschitz_N(profile: LipschitzProfile, beta: float, N, Lstar: float):
    """(K1*N, K2*N) for the joint best-response value function."""
    a1, b1, c1, a2, b2, c2 = _kn_coefficients(profile, beta, N, Lstar)
    den1 = (1 - b1) * (1 - c2) - c1 * a2 * b2
    den2 = (1 - b1) * (1 - c2) - c1 * a1 * b2
    if not (b1 < 1 and den1 > 0 and den2 > 0):
        raise AssumptionFViolation(f"b1N = {b1:g}, denominators {den1:g}, {den2:g}")
    return a1 * (1 - c2) / den1, a2 * (1 - b1) / den2


def best_response_constants(profile: LipschitzProfile, beta: float, N, Lstar: float, K1N: float, K2N: float):
    """(R1N, R2N, R3N, L1*N, L2*N)."""
    if N < 2:
        raise NTooSmall("best-response constants need N >= 2")
    pr = profile
    drift = pr.K1 + pr.K2 * Lstar
    R1 = K1N
    R2 = K2N * pr.K3 + K2N * drift * N / (N - 1)
    R3 = K2N * drift / (N - 1)
    L1f, L2f = pr.Lfun(R1, R2, R3)
    return R1, R2, R3, 2.0 * L1f / pr.rho, 2.0 * L2f / pr.rho


def limit_constants(profile: LipschitzProfile, beta: float, Lstar: float) -> dict:
    """N -> infinity limits: R1, R2, L2*, and the limits of K1*N and K2*N."""
    pr = profile
    k1 = pr.K1 + pr.K2 * Lstar + pr.K3
    R1 = pr.L1 / (1 - beta * pr.K1)
    R2 = pr.L3 * k1 / (1 - beta * k1)
    L2s = 2.0 * pr.Lfun(R1, R2, 0.0)[1] / pr.rho
    return {"R1": R1, "R2": R2, "L2star": L2s, "K1starN": R1, "K2starN": pr.L3 / (1 - beta * k1)}


def check_assumptions(profile: LipschitzProfile, beta: float, N, Lstar: float | None = None) -> dict:
    pr = profile
    details = {}
    try:
        Ls = policy_lipschitz(pr, beta) if Lstar is None else Lstar
    except ContractionViolation:
        return {"e": False, "f": False, "g": False, "details": {"beta_K1": float(beta * pr.K1)}}
    details["Lstar"] = Ls
    kappa1 = pr.K1 + pr.K2 * Ls + pr.K3
    details["e_lhs_1"] = beta * kappa1
    e_ok = beta * kappa1 < 1
    if e_ok:
        L2s = limit_constants(pr, beta, Ls)["L2star"]
        details["L2star"] = L2s
        details["e_lhs_2"] = beta * (pr.K1 + pr.K2 * L2s)
        e_ok = details["e_lhs_2"] < 1
    a1, b1, c1, a2, b2, c2 = _kn_coefficients(pr, beta, N, Ls)
    details["f_b1N"] = b1
    details["f_lhs_1"] = (1 - b1) * (1 - c2) - c1 * a2 * b2
    details["f_lhs_2"] = (1 - b1) * (1 - c2) - c1 * a1 * b2
    f_ok = b1 < 1 and details["f_lhs_1"] > 0 and details["f_lhs_2"] > 0
    g_ok = False
    if f_ok and N >= 2:
        K1N, K2N = value_lipschitz_N(pr, beta, N, Ls)
        *_, L1N, L2N = best_response_constants(pr, beta, N, Ls, K1N, K2N)
        details["g_lhs"] = beta * (pr.K1 + pr.K2 * L2N)
        g_ok = details["g_lhs"] < 1
    details = {k: float(v) for k, v in details.items()}
    return {"e": bool(e_ok), "f": bool(f_ok), "g": bool(g_ok), "details": details}


def log_covering_number_bound(eps: float, Kclass: float, diam: float, ddim: float) -> float:
    if eps <= 0:
        raise ValueError("eps must be positive")
    return (16 * Kclass * diam / eps) ** ddim * math.log(8 * Kclass / eps)


def covering_number_bound(eps: float, Kclass: float, diam: float, ddim: float) -> float:
    """(8K/eps)^((16 K diam / eps)^ddim), or ``inf`` when its log exceeds 700."""
    lg = log_covering_number_bound(eps, Kclass, diam, ddim)
    return INF if lg > LOG_OVERFLOW else math.exp(lg)


def alpha_N(N, q: float, moment_q: float, dimX: float, C: float = 1.0) -> float:
    """LLN rate for E W1(e[x(0)], mu*); ``dimX`` selects the case (< 2, = 2, > 2)."""
    if q <= 1 or N < 1 or C <= 0:
        raise ValueError("need q > 1, N >= 1, C > 0")
    tail = N ** (1.0 / q) / N
    if dimX < 2:
        head = 1.0 / math.sqrt(N)
    elif dimX == 2:
        head = math.log(1 + N) / math.sqrt(N)
    else:
        head = N ** (-1.0 / dimX)
    return C * moment_q ** (1.0 / q) * (head + tail)


def _geom(k: float, t: int) -> float:
    return float(t) if k == 1 else (1 - k ** t) / (1 - k)


def _mul(a: float, b: float) -> float:
    # 0 * inf counts as 0: an absent term stays absent
    return 0.0 if a == 0 or b == 0 else a * b


def alpha_t(N, eps: float, t: int, kappa1: float, kappa2: float, alphaN: float) -> float:
    """kappa1^t alphaN + (kappa2 sqrt(2/N) + 2 eps) sum_{i<t} kappa1^i."""
    if t < 0:
        raise ValueError("t must be >= 0")
    drive = _mul(kappa2, math.sqrt(2.0 / N)) + 2 * eps
    return kappa1 ** t * alphaN + _mul(drive, _geom(kappa1, t))


def alpha_tilde_t(N, eps: float, t: int, kappa1: float, kappa2N: float, alphaN: float) -> float:
    if t < 0:
        raise ValueError("t must be >= 0")
    if N < 2:
        raise NTooSmall("alpha_tilde needs N >= 2")
    drive = _mul(kappa2N, math.sqrt(2.0 / (N - 1))) + 2 * eps
    return kappa1 ** t * alphaN + _mul(drive, _geom(kappa1, t))


def alpha_t_recursive(N, eps, t, kappa1, kappa2, alphaN, tilde: bool = False) -> float:
    a = alphaN
    root = math.sqrt(2.0 / (N - 1)) if tilde else math.sqrt(2.0 / N)
    for _ in range(t):
        a = kappa1 * a + _mul(kappa2, root) + 2 * eps
    return a


@dataclass
class BoundReport:
    Lstar: float
    L2star: float
    kappa1: float
    kappa2: float
    kappa2N: float
    K1starN: float
    K2starN: float
    R1N: float
    R2N: float
    R3N: float
    L1starN: float
    L2starN: float
    hat_kappa1N: float
    hat_kappa2N: float
    alphaN: float
    theta1: float
    theta2: float
    epsN: float
    assumption_e: bool
    assumption_f: bool
    assumption_g: bool
    N: float = 0
    eps: float = 0.0

    def as_dict(self) -> dict:
        return {k: (v if not isinstance(v, float) or math.isfinite(v) else "inf") for k, v in asdict(self).items()}


def derived_constants(profile: LipschitzProfile, beta: float, N, eps: float, alphaN: float,
                      Lstar: float | None = None) -> dict:
    """Every intermediate constant; raises :class:`AssumptionViolation` if (e), (f) or (g) fails."""
    chk = check_assumptions(profile, beta, N, Lstar)
    if not (chk["e"] and chk["f"] and chk["g"]):
        raise AssumptionViolation(f"assumptions e={chk['e']} f={chk['f']} g={chk['g']}: {chk['details']}")
    pr = profile
    Ls = chk["details"]["Lstar"]
    K1N, K2N = value_lipschitz_N(pr, beta, N, Ls)
    R1N, R2N, R3N, L1N, L2N = best_response_constants(pr, beta, N, Ls, K1N, K2N)
    cover = covering_number_bound(eps, pr.Kclass, pr.diam, pr.ddim)
    return {
        "Lstar": Ls,
        "L2star": chk["details"]["L2star"],
        "kappa1": pr.K1 + pr.K2 * Ls + pr.K3,
        "kappa2": _mul(pr.diam, cover),
        "kappa2N": _mul(pr.diam, cover + math.sqrt(8.0 / (N - 1))),
        "K1starN": K1N, "K2starN": K2N,
        "R1N": R1N, "R2N": R2N, "R3N": R3N,
        "L1starN": L1N, "L2starN": L2N,
        "hat_kappa1N": pr.K3 + pr.K2 * L1N,
        "hat_kappa2N": pr.K1 + pr.K2 * L2N,
        "alphaN": alphaN,
        "assumptions": chk,
    }


def _tail_factor(alphaN, beta, kappa1, drive):
    return alphaN / (1 - beta * kappa1) + _mul(beta, _mul(drive, 1.0 / ((1 - beta * kappa1) * (1 - beta))))


def theta1(N, eps, profile: LipschitzProfile, beta, derived: dict | None = None, alphaN: float | None = None) -> float:
    d = derived if derived is not None else derived_constants(profile, beta, N, eps, alphaN)
    pr = profile
    drive = _mul(d["kappa2"], math.sqrt(2.0 / N)) + 2 * eps
    lead = pr.L1 + pr.L2 * d["Lstar"] + pr.L3
    return _mul(lead, _tail_factor(d["alphaN"], beta, d["kappa1"], drive))


def theta2(N, eps, profile: LipschitzProfile, beta, derived: dict | None = None, alphaN: float | None = None) -> float:
    d = derived if derived is not None else derived_constants(profile, beta, N, eps, alphaN)
    pr = profile
    drive = _mul(d["kappa2N"], math.sqrt(2.0 / (N - 1))) + 2 * eps
    lead = (pr.L2 * d["L1starN"] + pr.L3
            + (pr.L1 + pr.L2 * d["L2starN"]) * d["hat_kappa1N"] * beta / (1 - beta * d["hat_kappa2N"]))
    return _mul(lead, _tail_factor(d["alphaN"], beta, d["kappa1"], drive))


def bound_report(profile: LipschitzProfile, beta: float, N, eps: float, alphaN: float,
                 Lstar: float | None = None) -> BoundReport:
    d = derived_constants(profile, beta, N, eps, alphaN, Lstar)
    t1 = theta1(N, eps, profile, beta, d)
    t2 = theta2(N, eps, profile, beta, d)
    chk = d.pop("assumptions")
    return BoundReport(
        **d, theta1=t1, theta2=t2, epsN=t1 + t2,
        assumption_e=chk["e"], assumption_f=chk["f"], assumption_g=chk["g"], N=N, eps=eps,
    )
