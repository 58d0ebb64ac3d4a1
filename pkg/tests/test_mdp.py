from itertools import product

import numpy as np
import pytest
from scipy.optimize import linprog

from linmfg.mdp import (
    Mdp,
    closed_loop,
    exploitability,
    greedy_policy,
    occupation_measure,
    optimal_value,
    policy_evaluation,
    q_values,
    recurrent_class_count,
    stationary_distribution,
    value_iteration,
    verify_mfe,
)
from linmfg.model import mean_field_reduction, random_model

from conftest import REPORTED_MU, REPORTED_PI, zero_cost_model


def random_mdp(rng, nX=3, nA=2):
    return Mdp(rng.dirichlet(np.ones(nX), size=(nX, nA)), rng.uniform(size=(nX, nA)), rng.uniform(0.3, 0.95))


def deterministic_policies(nX, nA):
    for choice in product(range(nA), repeat=nX):
        yield np.eye(nA)[list(choice)]


def test_value_iteration_trivial():
    V, Q = value_iteration(Mdp(np.full((2, 2, 2), 0.5), np.zeros((2, 2)), 0.9))
    assert not V.any() and not Q.any()
    V, _ = value_iteration(Mdp(np.ones((1, 3, 1)), np.ones((1, 3)), 0.9))
    assert V[0] == pytest.approx(10.0, abs=1e-9)


def test_value_iteration_contraction():
    mdp = random_mdp(np.random.default_rng(0), 5, 3)
    res = value_iteration(mdp, tol=1e-12)
    r = np.array(res.residuals)
    assert np.all(r[1:] <= mdp.beta * r[:-1] + 1e-15)
    np.testing.assert_allclose(res.V, optimal_value(mdp), atol=1e-12)


def test_malware_q_gaps_at_reported_mu(malware):
    _, Q = value_iteration(mean_field_reduction(malware, REPORTED_MU))
    # healthy agents are nearly indifferent; infected agents strictly prefer repair
    assert abs(Q[0, 0] - Q[0, 1]) <= 0.02
    assert Q[1, 0] - Q[1, 1] == pytest.approx(0.0519, abs=1e-3)


def test_solved_equilibrium_indifference(malware, malware_solution):
    _, eq = malware_solution
    _, Q = value_iteration(mean_field_reduction(malware, eq.mu), tol=1e-12)
    assert abs(Q[0, 0] - Q[0, 1]) <= 1e-6
    assert greedy_policy(Q, tie_tol=1e-6)[0, 0] == 1.0


def test_greedy_policy():
    np.testing.assert_array_equal(greedy_policy([[1, 2], [3, 0]]), [[1, 0], [0, 1]])
    np.testing.assert_array_equal(greedy_policy([[1.0, 1.0 + 1e-12]], tie_tol=1e-9), [[1, 0]])
    np.testing.assert_array_equal(greedy_policy([[1.0 + 1e-12, 1.0]], tie_tol=1e-9), [[1, 0]])


def test_policy_evaluation_examples():
    zero = Mdp(np.full((2, 2, 2), 0.5), np.zeros((2, 2)), 0.7)
    V, J = policy_evaluation(zero, [[0.5, 0.5], [1, 0]], [0.5, 0.5])
    assert not V.any() and J == 0
    single = Mdp(np.ones((1, 2, 1)), np.ones((1, 2)), 0.5)
    assert policy_evaluation(single, [[0.3, 0.7]], [1.0])[1] == pytest.approx(2.0)


def test_greedy_policy_is_best_among_deterministic():
    rng = np.random.default_rng(5)
    for _ in range(20):
        mdp = random_mdp(rng)
        init = rng.dirichlet(np.ones(3))
        pi = greedy_policy(value_iteration(mdp, 1e-12).Q)
        J = policy_evaluation(mdp, pi, init)[1]
        for other in deterministic_policies(3, 2):
            assert J <= policy_evaluation(mdp, other, init)[1] + 1e-9


def test_occupation_measure_examples():
    absorbing = Mdp(np.ones((1, 1, 1)), np.ones((1, 1)), 0.8)
    np.testing.assert_allclose(occupation_measure(absorbing, [[1.0]], [1.0]), [1.0])
    rng = np.random.default_rng(9)
    for _ in range(20):
        mdp = random_mdp(rng)
        pi = rng.dirichlet(np.ones(2), size=3)
        init = rng.dirichlet(np.ones(3))
        zeta = occupation_measure(mdp, pi, init)
        # truncated forward recursion
        T = int(np.ceil(np.log(1e-10) / np.log(mdp.beta)))
        P_pi, _ = closed_loop(mdp, pi)
        state, acc = init.copy(), np.zeros((3, 2))
        for t in range(T + 1):
            acc += (1 - mdp.beta) * mdp.beta ** t * state[:, None] * pi
            state = state @ P_pi
        np.testing.assert_allclose(zeta, acc.ravel(), atol=1e-8)
        J = policy_evaluation(mdp, pi, init)[1]
        assert zeta @ mdp.c.ravel() / (1 - mdp.beta) == pytest.approx(J, rel=1e-10)
        marg = zeta.reshape(3, 2).sum(axis=1)
        flow = np.einsum("xa,xay->y", zeta.reshape(3, 2), mdp.P)
        np.testing.assert_allclose(marg, (1 - mdp.beta) * init + mdp.beta * flow, atol=1e-10)


def test_lp_equivalence():
    rng = np.random.default_rng(13)
    for _ in range(15):
        mdp = random_mdp(rng)
        init = rng.dirichlet(np.ones(3))
        nX, nA, b = 3, 2, mdp.beta
        best_J = min(policy_evaluation(mdp, p, init)[1] for p in deterministic_policies(nX, nA))
        best_occ = min(occupation_measure(mdp, p, init) @ mdp.c.ravel() for p in deterministic_policies(nX, nA))
        E = np.kron(np.eye(nX), np.ones(nA))
        A_eq = E - b * mdp.P.reshape(nX * nA, nX).T
        lp = linprog(mdp.c.ravel(), A_eq=A_eq, b_eq=(1 - b) * init, bounds=(0, None), method="highs")
        assert (1 - b) * best_J == pytest.approx(best_occ, abs=1e-10)
        assert lp.fun == pytest.approx(best_occ, abs=1e-9)


def test_stationary_distribution_examples():
    mu = stationary_distribution(np.eye(2))
    np.testing.assert_allclose(mu @ np.eye(2), mu)
    assert recurrent_class_count(np.eye(2)) == 2
    P = np.array([[0.2, 0.5, 0.3], [0.5, 0.3, 0.2], [0.3, 0.2, 0.5]])
    np.testing.assert_allclose(stationary_distribution(P), np.full(3, 1 / 3), atol=1e-12)


def test_stationary_distribution_malware(malware):
    pi = np.array([[0.76, 0.24], [0.02, 0.98]])
    mdp = mean_field_reduction(malware, REPORTED_MU)
    P_pi, _ = closed_loop(mdp, pi)
    mu = stationary_distribution(P_pi)
    np.testing.assert_allclose(mu, [0.589, 0.411], atol=1e-3)
    assert np.max(np.abs(mu - mu @ P_pi)) <= 1e-9


def test_exploitability_examples(malware, malware_solution):
    mdp = mean_field_reduction(malware, REPORTED_MU)
    pi = greedy_policy(value_iteration(mdp, 1e-12).Q)
    assert exploitability(malware, REPORTED_MU, pi) <= 1e-6
    _, eq = malware_solution
    assert exploitability(malware, eq.mu, eq.pi) <= 1e-4
    assert exploitability(malware, REPORTED_MU, [[1, 0], [1, 0]]) > 0


def test_verify_mfe_reported_values(malware):
    rep = verify_mfe(malware, REPORTED_MU, REPORTED_PI, tol=0.02)
    assert rep.passed and rep.recurrent_classes == 1
    assert not verify_mfe(malware, [0.4, 0.6], REPORTED_PI).passed


def test_verify_mfe_random_and_zero_cost():
    rng = np.random.default_rng(0)
    fails = 0
    for _ in range(20):
        m = random_model(rng, 3, 2)
        fails += not verify_mfe(m, rng.dirichlet(np.ones(3)), np.full((3, 2), 0.5)).passed
    assert fails >= 15
    m = zero_cost_model(3, 2)
    pi = np.full((3, 2), 0.5)
    assert verify_mfe(m, np.full(3, 1 / 3), pi, tol=1e-9).passed


def test_q_values_shape():
    mdp = random_mdp(np.random.default_rng(1))
    assert q_values(mdp, np.zeros(3)).shape == (3, 2)


def test_malware_indifference_point_is_unique(malware):
    # healthy-state indifference happens at a single mu, which pins the healthy-state policy
    grid = np.linspace(0.0, 1.0, 201)
    gaps = []
    for m0 in grid:
        Q = value_iteration(mean_field_reduction(malware, [m0, 1 - m0]), 1e-12).Q
        gaps.append(Q[0, 0] - Q[0, 1])
    changes = np.flatnonzero(np.diff(np.sign(gaps)) != 0)
    assert len(changes) == 1
    m0 = grid[changes[0]]
    assert 0.575 <= m0 <= 0.59
    # balance with pi(repair|1) = 1: 0.9 pi(none|0) mu0 = mu1
    assert (1 - 0.5827) / (0.9 * 0.5827) == pytest.approx(0.7957, abs=1e-4)
