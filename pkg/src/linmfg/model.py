"""The linear mean-field game primitive and its reductions at a fixed mean field.

Tensors are stored dense with the following index conventions:

* ``kernel[x, a, z, y]`` is the probability of moving to ``y`` from state ``x``
  under action ``a`` when the sampled peer state is ``z``.
* ``cost[x, a, z]`` is the one-stage cost for the same triple.

State index 0 is the fixed reference point used by the Lipschitz class of
test functions.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyVector,
    ModelValidationError,
    NegativeLambda,
    NegativeMass,
)

STOCHASTIC_TOL = 1e-12
DERIVED_TOL = 1e-10


@dataclass(frozen=True)
class Violation:
    kind: str
    index: tuple

    def __str__(self):
        return f"{self.kind}{self.index}"


@dataclass(frozen=True, eq=False)
class FiniteMetricSpace:
    labels: tuple
    dist: np.ndarray

    def __post_init__(self):
        d = np.array(self.dist, dtype=float)
        d.setflags(write=False)
        object.__setattr__(self, "dist", d)
        object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def size(self) -> int:
        return len(self.labels)

    @property
    def diam(self) -> float:
        return float(self.dist.max()) if self.size else 0.0

    @classmethod
    def unit(cls, n: int, labels=None) -> "FiniteMetricSpace":
        """Discrete metric: every pair of distinct points at distance 1."""
        labels = labels if labels is not None else [str(i) for i in range(n)]
        return cls(labels, 1.0 - np.eye(n))

    def violations(self, tol: float = 1e-12) -> list:
        d = self.dist
        out = []
        n = self.size
        if d.shape != (n, n):
            return [Violation("DimensionMismatch", ("metric", d.shape, n))]
        for i, j in zip(*np.nonzero(d < 0)):
            out.append(Violation("MetricViolation", (int(i), int(j), "negative")))
        for i in np.nonzero(np.abs(np.diag(d)) > tol)[0]:
            out.append(Violation("MetricViolation", (int(i), int(i), "diagonal")))
        for i, j in zip(*np.nonzero(np.abs(d - d.T) > tol)):
            if i < j:
                out.append(Violation("MetricViolation", (int(i), int(j), "asymmetric")))
        # d[i,k] <= d[i,j] + d[j,k] for all triples
        slack = d[:, None, :] - (d[:, :, None] + d[None, :, :])
        for i, j, k in zip(*np.nonzero(slack > tol)):
            out.append(Violation("MetricViolation", (int(i), int(j), int(k))))
        return out

    def __eq__(self, other):
        return (
            isinstance(other, FiniteMetricSpace)
            and self.labels == other.labels
            and np.array_equal(self.dist, other.dist)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class MfgModel:
    states: FiniteMetricSpace
    actions: tuple
    kernel: np.ndarray
    cost: np.ndarray
    beta: float
    name: str = field(default="")

    def __post_init__(self):
        for attr in ("kernel", "cost"):
            arr = np.array(getattr(self, attr), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, attr, arr)
        object.__setattr__(self, "actions", tuple(self.actions))
        object.__setattr__(self, "beta", float(self.beta))

    @property
    def n_states(self) -> int:
        return self.states.size

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    @property
    def cbar_max(self) -> float:
        return float(self.cost.max())

    def __eq__(self, other):
        return (
            isinstance(other, MfgModel)
            and self.states == other.states
            and self.actions == other.actions
            and self.beta == other.beta
            and np.array_equal(self.kernel, other.kernel)
            and np.array_equal(self.cost, other.cost)
        )

    __hash__ = None


def model_violations(model: MfgModel) -> list:
    nx, na = model.n_states, model.n_actions
    if model.kernel.shape != (nx, na, nx, nx):
        return [Violation("DimensionMismatch", ("kernel", model.kernel.shape, (nx, na, nx, nx)))]
    if model.cost.shape != (nx, na, nx):
        return [Violation("DimensionMismatch", ("cost", model.cost.shape, (nx, na, nx)))]
    out = list(model.states.violations())
    rows = model.kernel
    bad = (np.abs(rows.sum(axis=-1) - 1.0) > STOCHASTIC_TOL) | (rows < 0).any(axis=-1)
    for x, a, z in zip(*np.nonzero(bad)):
        out.append(Violation("NonStochasticRow", (int(x), int(a), int(z))))
    for x, a, z in zip(*np.nonzero(model.cost < 0)):
        out.append(Violation("NegativeCost", (int(x), int(a), int(z))))
    if not 0.0 < model.beta < 1.0:
        out.append(Violation("BetaOutOfRange", (model.beta,)))
    return out


def validate_model(model: MfgModel) -> MfgModel:
    """Return ``model`` unchanged if every invariant holds.

    Raises :class:`ModelValidationError` listing all violated invariants
    otherwise; a :class:`DimensionMismatch` violation short-circuits the
    elementwise checks.
    """
    violations = model_violations(model)
    if violations:
        raise ModelValidationError(violations)
    return model


def as_distribution(weights, size: int | None = None, tol: float = DERIVED_TOL) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or (size is not None and w.shape[0] != size):
        raise DimensionMismatch(f"expected a vector of length {size}, got shape {w.shape}")
    if (w < -tol).any() or abs(w.sum() - 1.0) > tol:
        raise ValueError(f"not a probability vector: {w}")
    return w


def as_policy(pi, n_states: int, n_actions: int, tol: float = DERIVED_TOL) -> np.ndarray:
    p = np.asarray(pi, dtype=float)
    if p.shape != (n_states, n_actions):
        raise DimensionMismatch(f"policy shape {p.shape} != {(n_states, n_actions)}")
    if (p < -tol).any() or (np.abs(p.sum(axis=1) - 1.0) > tol).any():
        raise ValueError("policy rows must be probability vectors")
    return p


def mean_field_reduction(model: MfgModel, mu):
    """MDP faced by a generic agent when the population distribution is frozen at ``mu``."""
    from .mdp import Mdp

    mu = as_distribution(mu, model.n_states)
    P = np.einsum("xazy,z->xay", model.kernel, mu)
    c = model.cost @ mu
    return Mdp(P=P, c=c, beta=model.beta)


def empirical_measure(states, n_states: int) -> np.ndarray:
    """Empirical distribution of a vector of state indices, normalized by its length."""
    idx = np.asarray(states, dtype=int).ravel()
    if idx.size == 0:
        raise EmptyVector("empirical measure of an empty vector")
    if idx.min() < 0 or idx.max() >= n_states:
        raise IndexError("state index out of range")
    return np.bincount(idx, minlength=n_states) / idx.size


def population_kernel(model: MfgModel, zeta) -> np.ndarray:
    """p_zeta(y|x) = sum_{s,a} kernel[s, a, x, y] * zeta(s, a).

    ``zeta`` may be given flat (length |X||A|) or as an |X| x |A| array. Rows sum
    to the total mass of ``zeta``.
    """
    z = np.asarray(zeta, dtype=float).reshape(model.n_states, model.n_actions)
    if (z < 0).any():
        raise NegativeMass("occupation measure has negative entries")
    return np.einsum("saxy,sa->xy", model.kernel, z)


def regularized_stage_cost(model: MfgModel, lambda_reg: float, mixed_action, x: int, z: int) -> float:
    """Stage cost of a mixed action plus ``lambda_reg`` times its negative entropy."""
    if lambda_reg < 0:
        raise NegativeLambda(lambda_reg)
    u = as_distribution(mixed_action, model.n_actions)
    pos = u > 0
    neg_entropy = float(np.sum(u[pos] * np.log(u[pos])))
    return float(model.cost[x, :, z] @ u) + lambda_reg * neg_entropy


def malware_model(k: float = 0.2, theta: float = 0.5, beta: float = 0.9, q: float = 0.9) -> MfgModel:
    """Two-state malware spread game: state 1 is infected, action 1 is repair.

    No-op from a healthy state infects with probability ``q``; repair sends the
    agent to the healthy state; an infected agent doing nothing stays infected.
    Stage cost is ``(k + z) x + theta a``.
    """
    kernel = np.zeros((2, 2, 2, 2))
    cost = np.zeros((2, 2, 2))
    for x, a, z in product(range(2), repeat=3):
        if a == 1:
            kernel[x, a, z, 0] = 1.0
        elif x == 0:
            kernel[x, a, z] = [1.0 - q, q]
        else:
            kernel[x, a, z, 1] = 1.0
        cost[x, a, z] = (k + z) * x + theta * a
    return MfgModel(
        states=FiniteMetricSpace(("healthy", "infected"), [[0.0, 1.0], [1.0, 0.0]]),
        actions=("none", "repair"),
        kernel=kernel,
        cost=cost,
        beta=beta,
        name="malware",
    )


def random_model(rng: np.random.Generator, n_states: int, n_actions: int, beta: float | None = None) -> MfgModel:
    """Random dense model on a random metric (shortest paths of random weights)."""
    from scipy.sparse.csgraph import shortest_path

    w = rng.uniform(0.2, 1.5, size=(n_states, n_states))
    w = np.triu(w, 1)
    w = w + w.T
    dist = shortest_path(w, directed=False)
    kernel = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions, n_states))
    cost = rng.uniform(0.0, 1.0, size=(n_states, n_actions, n_states))
    return MfgModel(
        states=FiniteMetricSpace([f"s{i}" for i in range(n_states)], dist),
        actions=[f"a{j}" for j in range(n_actions)],
        kernel=kernel,
        cost=cost,
        beta=rng.uniform(0.3, 0.95) if beta is None else beta,
    )
