"""Exact Wasserstein-1 distances on finite metric spaces."""
from __future__ import annotations

from itertools import product
from typing import NamedTuple

import numpy as np
from scipy.optimize import linprog

from .errors import DimensionMismatch, LengthMismatch
from .model import FiniteMetricSpace

_SUPPORT_TOL = 1e-15


class DualResult(NamedTuple):
    value: float
    witness: np.ndarray
    in_class_F: bool


def _check_pair(mu, nu, space: FiniteMetricSpace):
    mu = np.asarray(mu, dtype=float)
    nu = np.asarray(nu, dtype=float)
    n = space.size
    if mu.shape != (n,) or nu.shape != (n,):
        raise DimensionMismatch(f"measures of shape {mu.shape}, {nu.shape} on a {n}-point space")
    return mu, nu


def _transport_lp(mu, nu, dist):
    """Solve the transportation LP restricted to supp(mu) x supp(nu)."""
    src = np.flatnonzero(mu > _SUPPORT_TOL)
    dst = np.flatnonzero(nu > _SUPPORT_TOL)
    a, b = mu[src], nu[dst]
    # tiny mass mismatch from rounding would make the LP infeasible
    b = b * (a.sum() / b.sum())
    cost = dist[np.ix_(src, dst)]
    ns, nd = len(src), len(dst)
    A = np.zeros((ns + nd, ns * nd))
    for i in range(ns):
        A[i, i * nd:(i + 1) * nd] = 1.0
    for j in range(nd):
        A[ns + j, j::nd] = 1.0
    res = linprog(cost.ravel(), A_eq=A, b_eq=np.concatenate([a, b]), bounds=(0, None), method="highs")
    if res.status != 0:
        raise ArithmeticError(f"transportation LP failed: {res.message}")
    duals = res.eqlin.marginals
    return float(res.fun), src, dst, duals[:ns], duals[ns:]


def w1(mu, nu, space: FiniteMetricSpace) -> float:
    mu, nu = _check_pair(mu, nu, space)
    if np.array_equal(mu, nu):
        return 0.0
    return max(_transport_lp(mu, nu, space.dist)[0], 0.0)


def w1_dual(mu, nu, space: FiniteMetricSpace) -> DualResult:
    """W1 together with a 1-Lipschitz witness g attaining ``|∫g dmu - ∫g dnu|``.

    The LP column potentials are c-transformed into a 1-Lipschitz function,
    shifted so that g(0) = 0 and reflected when that makes it nonnegative.
    When state 0 is neither a minimizer nor a maximizer of the witness no
    reflection helps; the shifted witness is returned with ``in_class_F``
    set to False.
    """
    mu, nu = _check_pair(mu, nu, space)
    d = space.dist
    if np.array_equal(mu, nu):
        return DualResult(0.0, np.zeros(space.size), True)
    value, _, dst, _, v = _transport_lp(mu, nu, d)
    # f(x) = min_j d(x, j) - v_j is 1-Lipschitz and dominates the row potentials
    g = np.min(d[:, dst] - v[None, :], axis=1)
    if g @ mu - g @ nu < 0:
        g = -g
    tol = 1e-12 * max(1.0, np.abs(g).max())
    g = g - g[0]
    in_F = True
    if g.min() < -tol:
        if g.max() <= tol:
            g = -g
        else:
            in_F = False
    if in_F:
        g = np.maximum(g, 0.0)
    return DualResult(max(value, 0.0), g, in_F)


def hungarian(cost) -> np.ndarray:
    """Min-cost perfect assignment of a square matrix; returns ``col`` with row i -> col[i].

    Shortest augmenting path with dual potentials, O(M^3).
    """
    C = np.asarray(cost, dtype=float)
    n = C.shape[0]
    if C.shape != (n, n):
        raise DimensionMismatch(f"cost matrix must be square, got {C.shape}")
    INF = np.inf
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    match = np.zeros(n + 1, dtype=int)  # match[j] = row assigned to column j (1-based, 0 = free)
    way = np.zeros(n + 1, dtype=int)
    for i in range(1, n + 1):
        match[0] = i
        j0 = 0
        minv = np.full(n + 1, INF)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = match[j0]
            free = ~used[1:]
            cols = np.flatnonzero(free) + 1
            cur = C[i0 - 1, cols - 1] - u[i0] - v[cols]
            better = cur < minv[cols]
            minv[cols[better]] = cur[better]
            way[cols[better]] = j0
            j1 = cols[np.argmin(minv[cols])]
            delta = minv[j1]
            u[match[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            j0 = j1
            if match[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            match[j0] = match[j1]
            j0 = j1
    col = np.empty(n, dtype=int)
    for j in range(1, n + 1):
        col[match[j] - 1] = j - 1
    return col


def w1_empirical(x_vec, z_vec, space: FiniteMetricSpace) -> float:
    """Min over permutations of the average matched distance between two state vectors."""
    x = np.asarray(x_vec, dtype=int).ravel()
    z = np.asarray(z_vec, dtype=int).ravel()
    if x.size != z.size:
        raise LengthMismatch(f"lengths {x.size} and {z.size} differ")
    if x.size == 0:
        raise LengthMismatch("empty state vectors")
    cost = space.dist[np.ix_(x, z)]
    col = hungarian(cost)
    return float(cost[np.arange(x.size), col].sum() / x.size)


def w1_two_point(mu, nu, d01: float) -> float:
    """Closed form on a two-point space."""
    return abs(float(mu[0]) - float(nu[0])) * d01


def product_space(space: FiniteMetricSpace, M: int) -> FiniteMetricSpace:
    """X^M with the averaged metric (1/M) sum_i d(x_i, y_i); points in lexicographic order."""
    pts = list(product(range(space.size), repeat=M))
    P = np.array(pts)
    dist = space.dist[P[:, None, :], P[None, :, :]].mean(axis=-1)
    return FiniteMetricSpace([",".join(map(str, p)) for p in pts], dist)


def product_measure(marginals) -> np.ndarray:
    out = np.ones(1)
    for m in marginals:
        out = np.kron(out, np.asarray(m, dtype=float))
    return out
