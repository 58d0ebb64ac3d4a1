"""Two-player GNEP for stationary equilibria and its stacked KKT map H(z).

Player 1 picks an occupation measure ``zeta`` over X x A, player 2 picks the
population distribution ``mu``. Flat vector layout of an iterate::

    zeta[nXA] mu[nX] | lambda1[nXA] lambda2[nX] gamma1[nX] gamma2[1] gamma3[nX]
                     | slack_lambda[nXA + nX] slack_gamma[2 nX + 1]

Multiplier ``i`` of ``(lambda1, lambda2, gamma1, gamma2, gamma3)`` is paired
with slack ``i``. Constraint blocks are ``h1 = (-zeta; -zeta_hat + (1-beta) mu
+ beta zeta p_mu)`` and ``h2 = (-mu; 1 - <mu, 1>; -mu + zeta p_mu)``, all ``<= 0``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DimensionMismatch, NotInterior
from .model import MfgModel


@dataclass(frozen=True)
class GnepDims:
    nX: int
    nA: int

    @property
    def nXA(self) -> int:
        return self.nX * self.nA

    @property
    def n(self) -> int:
        return self.nXA + self.nX

    @property
    def m(self) -> int:
        return self.nXA + 3 * self.nX + 1

    @property
    def size(self) -> int:
        return self.n + 2 * self.m

    @classmethod
    def of(cls, model: MfgModel) -> "GnepDims":
        return cls(model.n_states, model.n_actions)

    def slices(self) -> dict:
        """Named slices of the flat iterate."""
        nXA, nX = self.nXA, self.nX
        sizes = [
            ("zeta", nXA), ("mu", nX), ("lambda1", nXA), ("lambda2", nX),
            ("gamma1", nX), ("gamma2", 1), ("gamma3", nX),
            ("slack_lambda", nXA + nX), ("slack_gamma", 2 * nX + 1),
        ]
        out, start = {}, 0
        for name, k in sizes:
            out[name] = slice(start, start + k)
            start += k
        out["mult"] = slice(self.n, self.n + self.m)
        out["slack"] = slice(self.n + self.m, self.size)
        return out

    def H_blocks(self) -> dict:
        """Row groups of H: player-1 stationarity, player-2 stationarity, slacked constraints, complementarity."""
        n1 = self.nXA
        return {
            "F1": slice(0, n1),
            "F2": slice(n1, self.n),
            "h_lambda": slice(self.n, self.n + self.nXA + self.nX),
            "h_gamma": slice(self.n + self.nXA + self.nX, self.n + self.m),
            "comp": slice(self.n + self.m, self.size),
        }

    def block_sizes(self) -> list:
        """Sizes in the grouping (F, lambda-constraints, gamma-constraints, lambda-products, gamma-products)."""
        return [self.n, self.nXA + self.nX, 2 * self.nX + 1, self.nXA + self.nX, 2 * self.nX + 1]


@dataclass
class KktPoint:
    zeta: np.ndarray
    mu: np.ndarray
    lambda1: np.ndarray
    lambda2: np.ndarray
    gamma1: np.ndarray
    gamma2: float
    gamma3: np.ndarray
    slack_lambda: np.ndarray
    slack_gamma: np.ndarray

    @classmethod
    def from_vector(cls, dims: GnepDims, z) -> "KktPoint":
        z = np.asarray(z, dtype=float)
        if z.shape != (dims.size,):
            raise DimensionMismatch(f"iterate length {z.shape} != {dims.size}")
        s = dims.slices()
        return cls(
            zeta=z[s["zeta"]].copy(), mu=z[s["mu"]].copy(),
            lambda1=z[s["lambda1"]].copy(), lambda2=z[s["lambda2"]].copy(),
            gamma1=z[s["gamma1"]].copy(), gamma2=float(z[s["gamma2"]][0]),
            gamma3=z[s["gamma3"]].copy(),
            slack_lambda=z[s["slack_lambda"]].copy(), slack_gamma=z[s["slack_gamma"]].copy(),
        )

    def to_vector(self) -> np.ndarray:
        return np.concatenate([
            self.zeta, self.mu, self.lambda1, self.lambda2, self.gamma1,
            [self.gamma2], self.gamma3, self.slack_lambda, self.slack_gamma,
        ]).astype(float)


@dataclass(frozen=True)
class PlayerTwoCost:
    """Player 2's objective g(zeta, mu) and the derivatives used by H and its Jacobian.

    ``cross(zeta, mu)[x, k]`` is the derivative of ``grad_mu(zeta, mu)[x]`` with
    respect to ``zeta[k]``.
    """

    value: Callable
    grad_mu: Callable
    hess_mu: Callable
    cross: Callable
    name: str = "custom"


def default_player_two_cost(model: MfgModel) -> PlayerTwoCost:
    """g(zeta, mu) = <zeta, c_mu>, the same cost as the generic agent."""
    C = model.cost.reshape(-1, model.n_states)  # [(x,a), z]
    nX = model.n_states
    return PlayerTwoCost(
        value=lambda zeta, mu: float(np.asarray(zeta) @ C @ np.asarray(mu)),
        grad_mu=lambda zeta, mu: C.T @ np.asarray(zeta, dtype=float),
        hess_mu=lambda zeta, mu: np.zeros((nX, nX)),
        cross=lambda zeta, mu: C.T.copy(),
        name="default",
    )


def zero_sum_player_two_cost(model: MfgModel) -> PlayerTwoCost:
    """g = -<zeta, c_mu>; linear in mu, so convexity in mu holds trivially."""
    C = model.cost.reshape(-1, model.n_states)
    nX = model.n_states
    return PlayerTwoCost(
        value=lambda zeta, mu: -float(np.asarray(zeta) @ C @ np.asarray(mu)),
        grad_mu=lambda zeta, mu: -(C.T @ np.asarray(zeta, dtype=float)),
        hess_mu=lambda zeta, mu: np.zeros((nX, nX)),
        cross=lambda zeta, mu: -C.T,
        name="zero_sum",
    )


# -- evaluation ---------------------------------------------------------------

class _Parts:
    """Tensors shared by F, h, H and the Jacobian at one iterate."""

    def __init__(self, model: MfgModel, z):
        self.dims = dims = GnepDims.of(model)
        z = np.asarray(z, dtype=float)
        if z.shape != (dims.size,):
            raise DimensionMismatch(f"iterate length {z.shape} != {dims.size}")
        s = dims.slices()
        self.z = z
        self.s = s
        self.zeta = z[s["zeta"]]
        self.mu = z[s["mu"]]
        self.lambda1 = z[s["lambda1"]]
        self.lambda2 = z[s["lambda2"]]
        self.gamma1 = z[s["gamma1"]]
        self.gamma2 = z[s["gamma2"]][0]
        self.gamma3 = z[s["gamma3"]]
        self.kernel = model.kernel.reshape(dims.nXA, dims.nX, dims.nX)  # [(x,a), z, y]
        self.cbar = model.cost.reshape(dims.nXA, dims.nX)  # [(x,a), z]
        self.Pmu = np.einsum("kzy,z->ky", self.kernel, self.mu)  # p_mu(y | x,a)
        self.Pzeta = np.einsum("kzy,k->zy", self.kernel, self.zeta)  # p_zeta(y | z)
        self.E = np.kron(np.eye(dims.nX), np.ones((1, dims.nA)))  # zeta_hat = E zeta
        self.beta = model.beta


def eval_F(model: MfgModel, g: PlayerTwoCost, z) -> np.ndarray:
    P = _Parts(model, z)
    F1 = P.cbar @ P.mu - P.lambda1 - P.E.T @ P.lambda2 + P.beta * P.Pmu @ P.lambda2
    F2 = (
        np.asarray(g.grad_mu(P.zeta, P.mu), dtype=float)
        - P.gamma1 - P.gamma2 - P.gamma3 + P.Pzeta @ P.gamma3
    )
    return np.concatenate([F1, F2])


def _h(P: _Parts) -> np.ndarray:
    flow = P.zeta @ P.Pmu  # zeta p_mu
    return np.concatenate([
        -P.zeta,
        -P.E @ P.zeta + (1 - P.beta) * P.mu + P.beta * flow,
        -P.mu,
        [1.0 - P.mu.sum()],
        -P.mu + flow,
    ])


def eval_h(model: MfgModel, z) -> np.ndarray:
    return _h(_Parts(model, z))


def eval_H(model: MfgModel, g: PlayerTwoCost, z) -> np.ndarray:
    P = _Parts(model, z)
    mult = P.z[P.s["mult"]]
    slack = P.z[P.s["slack"]]
    return np.concatenate([eval_F(model, g, P.z), _h(P) + slack, mult * slack])


def jacobian_H(model: MfgModel, g: PlayerTwoCost, z) -> np.ndarray:
    P = _Parts(model, z)
    d, s = P.dims, P.s
    nXA, nX, n, m = d.nXA, d.nX, d.n, d.m
    beta = P.beta
    J = np.zeros((d.size, d.size))
    rF1 = slice(0, nXA)
    rF2 = slice(nXA, n)

    J[rF1, s["mu"]] = P.cbar + beta * np.einsum("kzy,y->kz", P.kernel, P.lambda2)
    J[rF1, s["lambda1"]] = -np.eye(nXA)
    J[rF1, s["lambda2"]] = -P.E.T + beta * P.Pmu

    J[rF2, s["zeta"]] = np.asarray(g.cross(P.zeta, P.mu)) + np.einsum("kxy,y->xk", P.kernel, P.gamma3)
    J[rF2, s["mu"]] = np.asarray(g.hess_mu(P.zeta, P.mu))
    J[rF2, s["gamma1"]] = -np.eye(nX)
    J[rF2, s["gamma2"]] = -1.0
    J[rF2, s["gamma3"]] = -np.eye(nX) + P.Pzeta

    # constraint rows h + slack
    r0 = n
    J[r0:r0 + nXA, s["zeta"]] = -np.eye(nXA)
    r1 = r0 + nXA
    J[r1:r1 + nX, s["zeta"]] = -P.E + beta * P.Pmu.T
    J[r1:r1 + nX, s["mu"]] = (1 - beta) * np.eye(nX) + beta * P.Pzeta.T
    r2 = r1 + nX
    J[r2:r2 + nX, s["mu"]] = -np.eye(nX)
    r3 = r2 + nX
    J[r3, s["mu"]] = -1.0
    r4 = r3 + 1
    J[r4:r4 + nX, s["zeta"]] = P.Pmu.T
    J[r4:r4 + nX, s["mu"]] = -np.eye(nX) + P.Pzeta.T
    J[n:n + m, s["slack"]] = np.eye(m)

    # complementarity rows mult_i * slack_i
    idx = np.arange(m)
    mult = P.z[s["mult"]]
    slack = P.z[s["slack"]]
    J[n + m + idx, n + idx] = slack
    J[n + m + idx, n + m + idx] = mult
    return J


# -- potential ----------------------------------------------------------------

def default_K(dims: GnepDims) -> float:
    return 2.0 * dims.m


def potential(Hval, dims: GnepDims, Kparam: float | None = None) -> float:
    """p(u, v) = K log(|u|^2 + |v|^2) - sum_i log v_i with u the first n entries of H."""
    K = default_K(dims) if Kparam is None else Kparam
    Hval = np.asarray(Hval, dtype=float)
    v = Hval[dims.n:]
    if np.any(v <= 0):
        raise NotInterior("H-image has a nonpositive barrier component")
    return float(K * np.log(Hval @ Hval) - np.sum(np.log(v)))


def grad_p(Hval, dims: GnepDims, Kparam: float | None = None) -> np.ndarray:
    K = default_K(dims) if Kparam is None else Kparam
    Hval = np.asarray(Hval, dtype=float)
    v = Hval[dims.n:]
    if np.any(v <= 0):
        raise NotInterior("H-image has a nonpositive barrier component")
    out = 2.0 * K * Hval / (Hval @ Hval)
    out[dims.n:] -= 1.0 / v
    return out


def in_interior(z, dims: GnepDims, Hval=None) -> bool:
    """Membership in Z_I: multipliers, slacks and the barrier block of H all strictly positive."""
    z = np.asarray(z)
    if np.any(z[dims.n:] <= 0):
        return False
    return Hval is None or bool(np.all(np.asarray(Hval)[dims.n:] > 0))


def psi(model: MfgModel, g: PlayerTwoCost, z, Kparam: float | None = None) -> float:
    dims = GnepDims.of(model)
    Hval = eval_H(model, g, z)
    if not in_interior(z, dims, Hval):
        raise NotInterior("iterate outside Z_I")
    return potential(Hval, dims, Kparam)


def grad_potential(model: MfgModel, g: PlayerTwoCost, z, Kparam: float | None = None) -> np.ndarray:
    """Gradient of psi = p o H by the chain rule."""
    dims = GnepDims.of(model)
    Hval = eval_H(model, g, z)
    if not in_interior(z, dims, Hval):
        raise NotInterior("iterate outside Z_I")
    return jacobian_H(model, g, z).T @ grad_p(Hval, dims, Kparam)


# -- KKT point from an equilibrium ------------------------------------------------

def kkt_point_from_equilibrium(model: MfgModel, g: PlayerTwoCost, mu, pi) -> np.ndarray:
    """Multipliers certifying a known equilibrium (mu, pi).

    ``lambda2 = V*``, ``lambda1 = Q* - V*``; player-2 multipliers solve the
    stationarity rows in least squares with ``gamma3`` shifted to be nonnegative.
    Slacks are ``max(-h, 0)``. At an exact equilibrium the result is a root of H.
    """
    from .mdp import occupation_measure, optimal_value, q_values
    from .model import mean_field_reduction

    dims = GnepDims.of(model)
    mu = np.asarray(mu, dtype=float)
    mdp = mean_field_reduction(model, mu)
    zeta = occupation_measure(mdp, pi, mu)
    V = optimal_value(mdp)
    Q = q_values(mdp, V)
    lambda1 = np.clip((Q - V[:, None]).ravel(), 0.0, None)
    nX = dims.nX

    zero = np.zeros(dims.size)
    zero[dims.slices()["zeta"]] = zeta
    zero[dims.slices()["mu"]] = mu
    P = _Parts(model, zero)
    grad = np.asarray(g.grad_mu(zeta, mu), dtype=float)
    # grad - gamma1 - gamma2 1 + (Pzeta - I) gamma3 = 0 with gamma1 = 0 where mu > 0
    A = np.hstack([np.ones((nX, 1)), np.eye(nX) - P.Pzeta])
    sol = np.linalg.lstsq(A, grad, rcond=None)[0]
    gamma2, gamma3 = sol[0], sol[1:]
    shift = -min(gamma3.min(), 0.0)
    gamma3 = gamma3 + shift  # (Pzeta - I) 1 = 0 when zeta has unit mass
    gamma1 = np.clip(grad - gamma2 - gamma3 + P.Pzeta @ gamma3, 0.0, None)

    s = dims.slices()
    z = zero
    z[s["lambda1"]] = lambda1
    z[s["lambda2"]] = V
    z[s["gamma1"]] = gamma1
    z[s["gamma2"]] = gamma2
    z[s["gamma3"]] = gamma3
    z[s["slack"]] = np.clip(-_h(_Parts(model, z)), 0.0, None)
    return z
