"""Potential-reduction interior-point method for H(z) = 0 over Z_I."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.linalg import lapack, lu_factor, lu_solve

from .errors import InitializationFailed, MassViolation, NotInterior, SingularJacobian
from .gnep import (
    GnepDims,
    PlayerTwoCost,
    default_K,
    default_player_two_cost,
    eval_H,
    eval_h,
    grad_p,
    in_interior,
    jacobian_H,
    potential,
)
from .model import MfgModel

CONVERGED = "Converged"
MAX_ITER = "MaxIter"
SINGULAR = "SingularJacobian"
LINE_SEARCH_FAILED = "LineSearchFailed"

RCOND_MIN = 1e-13
PIVOT_MIN = 1e-14
MAX_STEP_EXPONENT = 60


class LineSearchFailed(Exception):
    def __init__(self, message, l):
        super().__init__(message)
        self.l = l


@dataclass(frozen=True)
class SolverConfig:
    sigma: float = 0.4
    kappa: float = 0.001
    Kparam: float | None = None  # None means 2m
    # coefficient 1 (the literal sufficient-decrease rule) and a unit margin
    # both stall on the malware instance; see README
    armijo_coeff: float = 1e-4
    tol_H: float = 1e-8
    max_iter: int = 10000
    eta: float = 0.0
    init_margin: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.sigma < 1.0:
            raise ValueError("sigma must lie in [0, 1)")
        if not 0.0 < self.kappa < 1.0:
            raise ValueError("kappa must lie in (0, 1)")
        if not 0.0 < self.armijo_coeff <= 1.0:
            raise ValueError("armijo_coeff must lie in (0, 1]")
        if self.tol_H <= 0 or self.max_iter < 0 or self.eta < 0 or self.init_margin <= 0:
            raise ValueError("invalid tolerance, iteration cap, eta or margin")

    def K_for(self, dims: GnepDims) -> float:
        K = default_K(dims) if self.Kparam is None else float(self.Kparam)
        if K <= dims.m:
            raise ValueError(f"Kparam must exceed m = {dims.m}")
        return K

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class TraceRecord:
    iter: int
    norm_H: float
    norm_F: float
    psi: float
    step_l: int
    step_t: float
    min_slack: float
    rcond: float
    block_max: dict = field(default_factory=dict)


TRACE_COLUMNS = ["iter", "norm_H", "norm_F", "psi", "step_l", "step_t", "min_slack", "rcond"]


@dataclass
class SolverTrace:
    config: dict
    records: list = field(default_factory=list)

    def append(self, rec: TraceRecord):
        self.records.append(rec)

    def __len__(self):
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("# " + json.dumps(self.config, sort_keys=True) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for r in self.records:
            w.writerow([r.iter, repr(r.norm_H), repr(r.norm_F), repr(r.psi), r.step_l,
                        repr(r.step_t), repr(r.min_slack), repr(r.rcond)])
        return buf.getvalue()


@dataclass
class SolveResult:
    z: np.ndarray
    status: str
    trace: SolverTrace
    message: str = ""

    @property
    def iterations(self) -> int:
        return len(self.trace)


def initialize(model: MfgModel, g: PlayerTwoCost | None = None, cfg: SolverConfig | None = None) -> np.ndarray:
    """Uniform zeta and mu, unit multipliers, slacks pushed ``init_margin`` past ``-h``."""
    cfg = cfg or SolverConfig()
    g = g or default_player_two_cost(model)
    dims = GnepDims.of(model)
    s = dims.slices()
    z = np.zeros(dims.size)
    z[s["zeta"]] = 1.0 / dims.nXA
    z[s["mu"]] = 1.0 / dims.nX
    z[s["mult"]] = 1.0
    h = eval_h(model, z)
    z[s["slack"]] = np.maximum(cfg.init_margin, -h + cfg.init_margin)
    if not in_interior(z, dims, eval_H(model, g, z)):
        raise InitializationFailed("initial point is not in Z_I")
    return z


def _a_vector(dims: GnepDims) -> np.ndarray:
    a = np.zeros(dims.size)
    a[dims.n:] = 1.0
    return a / np.sqrt(2 * dims.m)


def newton_direction(model: MfgModel, g: PlayerTwoCost, z, sigma: float, Hval=None, J=None):
    """Solve ``grad H(z) d = sigma <a, H> a - H``; returns ``(d, rcond)``.

    Raises :class:`SingularJacobian` when a pivot or the reciprocal condition
    number (1-norm estimate) falls below threshold.
    """
    dims = GnepDims.of(model)
    Hval = eval_H(model, g, z) if Hval is None else Hval
    J = jacobian_H(model, g, z) if J is None else J
    a = _a_vector(dims)
    rhs = sigma * (a @ Hval) * a - Hval
    lu, piv = lu_factor(J, check_finite=True)
    anorm = np.abs(J).sum(axis=0).max()
    rcond, info = lapack.dgecon(lu, anorm, norm="1")
    pivots = np.abs(np.diag(lu))
    if pivots.min() < PIVOT_MIN * max(1.0, anorm) or rcond < RCOND_MIN:
        raise SingularJacobian(f"rcond {rcond:.3e}, min pivot {pivots.min():.3e}")
    d = lu_solve((lu, piv), rhs)
    r = J @ d - rhs
    scale = np.linalg.norm(rhs)
    if np.linalg.norm(r) > 1e-10 * scale and scale > 0:
        d = d - lu_solve((lu, piv), r)  # one refinement sweep
    return d, float(rcond)


def line_search(model: MfgModel, g: PlayerTwoCost, z, d, cfg: SolverConfig,
                psi0: float | None = None, slope: float | None = None):
    """Smallest ``l`` with ``z + kappa^l d`` in Z_I and an Armijo decrease of psi.

    Returns ``(t, l, z_new, H_new, psi_new)``.
    """
    dims = GnepDims.of(model)
    K = cfg.K_for(dims)
    if psi0 is None or slope is None:
        H0 = eval_H(model, g, z)
        psi0 = potential(H0, dims, K)
        slope = float((jacobian_H(model, g, z).T @ grad_p(H0, dims, K)) @ d)
    for l in range(MAX_STEP_EXPONENT + 1):
        t = cfg.kappa ** l
        zt = z + t * d
        if np.any(zt[dims.n:] <= 0):
            continue
        Ht = eval_H(model, g, zt)
        if np.any(Ht[dims.n:] <= 0):
            continue
        pt = potential(Ht, dims, K)
        if pt <= psi0 + cfg.armijo_coeff * t * slope:
            return t, l, zt, Ht, pt
    raise LineSearchFailed(f"no acceptable step up to kappa^{MAX_STEP_EXPONENT}", MAX_STEP_EXPONENT)


def _record(it, dims, Hval, psi_val, l, t, z, rcond) -> TraceRecord:
    b = dims.H_blocks()
    blocks = {k: float(np.max(np.abs(Hval[v]))) for k, v in b.items()}
    return TraceRecord(
        iter=it,
        norm_H=float(np.linalg.norm(Hval)),
        norm_F=float(np.max(np.abs(Hval[:dims.n]))),
        psi=psi_val,
        step_l=l,
        step_t=t,
        min_slack=float(z[dims.n + dims.m:].min()),
        rcond=rcond,
        block_max=blocks,
    )


def solve(model: MfgModel, g: PlayerTwoCost | None = None, cfg: SolverConfig | None = None,
          z0=None) -> SolveResult:
    """Damped Newton iterations on H until ``||H||_2 <= tol_H``.

    No randomness is involved; identical inputs give identical traces.
    """
    cfg = cfg or SolverConfig()
    g = g or default_player_two_cost(model)
    dims = GnepDims.of(model)
    K = cfg.K_for(dims)
    header = dict(cfg.as_dict(), Kparam=K, player_two_cost=g.name,
                  armijo_literal=cfg.armijo_coeff == 1.0)
    trace = SolverTrace(header)
    z = initialize(model, g, cfg) if z0 is None else np.array(z0, dtype=float)
    Hval = eval_H(model, g, z)
    if np.linalg.norm(Hval) <= cfg.tol_H:
        return SolveResult(z, CONVERGED, trace)
    if not in_interior(z, dims, Hval):
        raise NotInterior("starting point outside Z_I")
    psi_val = potential(Hval, dims, K)
    for it in range(1, cfg.max_iter + 1):
        J = jacobian_H(model, g, z)
        try:
            d, rcond = newton_direction(model, g, z, cfg.sigma, Hval, J)
        except SingularJacobian as exc:
            return SolveResult(z, SINGULAR, trace, str(exc))
        slope = float((J.T @ grad_p(Hval, dims, K)) @ d)
        try:
            t, l, z, Hval, psi_val = line_search(model, g, z, d, cfg, psi_val, slope)
        except LineSearchFailed as exc:
            return SolveResult(z, LINE_SEARCH_FAILED, trace, f"{exc} (slope {slope:.3e})")
        trace.append(_record(it, dims, Hval, psi_val, l, t, z, rcond))
        if np.linalg.norm(Hval) <= cfg.tol_H:
            return SolveResult(z, CONVERGED, trace)
    return SolveResult(z, MAX_ITER, trace, f"||H|| = {np.linalg.norm(Hval):.3e}")


@dataclass
class Equilibrium:
    mu: np.ndarray
    pi: np.ndarray
    zeta: np.ndarray
    uniform_rows: list

    def as_dict(self) -> dict:
        return {
            "mu": self.mu.tolist(),
            "pi": self.pi.tolist(),
            "zeta": self.zeta.tolist(),
            "uniform_rows": list(self.uniform_rows),
        }


def extract_equilibrium(model: MfgModel, z_final, tol_mass: float = 1e-6) -> Equilibrium:
    """Read (mu, pi, zeta) from a root of H; pi is zeta disintegrated along its state marginal."""
    dims = GnepDims.of(model)
    s = dims.slices()
    z = np.asarray(z_final, dtype=float)
    zeta = z[s["zeta"]].copy()
    mu = z[s["mu"]].copy()
    if abs(mu.sum() - 1.0) > tol_mass or abs(zeta.sum() - 1.0) > tol_mass:
        raise MassViolation(f"mass of mu {mu.sum():.12g}, of zeta {zeta.sum():.12g}")
    # roots may carry tiny negative entries of order tol_H
    zeta = np.clip(zeta, 0.0, None)
    mu = np.clip(mu, 0.0, None)
    mu = mu / mu.sum()
    Z = zeta.reshape(dims.nX, dims.nA)
    zhat = Z.sum(axis=1)
    pi = np.full((dims.nX, dims.nA), 1.0 / dims.nA)
    ok = zhat > tol_mass
    pi[ok] = Z[ok] / zhat[ok, None]
    if np.max(np.abs(zhat - mu)) > 10 * tol_mass:
        raise MassViolation(f"state marginal of zeta differs from mu by {np.max(np.abs(zhat - mu)):.3e}")
    return Equilibrium(mu, pi, zeta, [int(x) for x in np.flatnonzero(~ok)])


def result_record(model: MfgModel, g: PlayerTwoCost, res: SolveResult, eq: Equilibrium | None) -> dict:
    out = {
        "status": res.status,
        "iterations": res.iterations,
        "norm_H": float(np.linalg.norm(eval_H(model, g, res.z))),
        "message": res.message,
        "config": res.trace.config,
    }
    if eq is not None:
        out.update(eq.as_dict())
    return out
