"""One test per acceptance criterion, at the stated tolerances."""
import math
import time
from itertools import permutations

import numpy as np
import pytest

from linmfg import bounds as bnd
from linmfg.cli import main
from linmfg.finite_n import (
    SimConfig,
    build_joint_mdp,
    check_symmetry_and_lipschitz,
    exact_epsilon_N,
    simulate_population,
)
from linmfg.gnep import GnepDims, default_player_two_cost, eval_H, jacobian_H, psi, grad_potential
from linmfg.ipsolver import SolverConfig, extract_equilibrium, solve
from linmfg.mdp import occupation_measure, verify_mfe
from linmfg.model import FiniteMetricSpace, empirical_measure, mean_field_reduction, random_model
from linmfg.transport import product_measure, product_space, w1, w1_dual, w1_empirical

from test_gnep import fd_jacobian, random_point, rel_error


def test_c01_malware_equilibrium(malware):
    t0 = time.perf_counter()
    res = solve(malware, None, SolverConfig(sigma=0.4, kappa=0.001, eta=0.0, max_iter=10000))
    eq = extract_equilibrium(malware, res.z)
    elapsed = time.perf_counter() - t0
    norm_H = np.linalg.norm(eval_H(malware, default_player_two_cost(malware), res.z))
    assert elapsed < 10
    assert norm_H <= 1e-6
    assert np.abs(eq.mu - [0.59, 0.41]).max() <= 0.01
    assert np.abs(eq.pi[1] - [0.02, 0.98]).max() <= 0.02
    assert np.abs(eq.pi[0] - [0.76, 0.24]).max() <= 0.02, f"pi(.|0) = {eq.pi[0]}"


def test_c02_dimensions(malware):
    dims = GnepDims.of(malware)
    assert (dims.n, dims.m, dims.size) == (6, 11, 28)
    assert dims.block_sizes() == [6, 6, 5, 6, 5]
    assert eval_H(malware, default_player_two_cost(malware), np.ones(28)).size == 28


def test_c03_traces_to_zero(malware, malware_solution):
    res, _ = malware_solution
    dims = GnepDims.of(malware)
    H = eval_H(malware, default_player_two_cost(malware), res.z)
    for name, sl in dims.H_blocks().items():
        assert np.max(np.abs(H[sl])) <= 1e-6, name
    psi_k = res.trace.column("psi")
    assert np.all(psi_k[1:] <= psi_k[:-1])


def test_c04_oracle_cross_validation(malware, malware_solution):
    _, eq = malware_solution
    t0 = time.perf_counter()
    assert verify_mfe(malware, eq.mu, eq.pi, tol=0.02).passed
    zeta = occupation_measure(mean_field_reduction(malware, eq.mu), eq.pi, eq.mu)
    zeta_hat = zeta.reshape(2, 2).sum(axis=1)
    assert np.abs(zeta_hat - eq.mu).max() <= 0.02
    assert time.perf_counter() - t0 < 1.0


def test_c05_jacobian_fd(malware):
    rng = np.random.default_rng(2025)
    g = default_player_two_cost(malware)
    worst_J = worst_psi = 0.0
    for _ in range(100):
        z = random_point(malware, rng)
        worst_J = max(worst_J, rel_error(jacobian_H(malware, g, z), fd_jacobian(malware, g, z)))
        G = grad_potential(malware, g, z)
        fd = np.array([(psi(malware, g, z + e) - psi(malware, g, z - e)) / 2e-6 for e in 1e-6 * np.eye(z.size)])
        worst_psi = max(worst_psi, rel_error(G, fd))
    assert worst_J <= 1e-6
    assert worst_psi <= 1e-5


def test_c06_wasserstein_oracles():
    rng = np.random.default_rng(6)
    for _ in range(500):
        n = int(rng.integers(2, 7))
        M = int(rng.integers(1, 8))
        sp = random_model(rng, n, 1).states
        x = rng.integers(0, n, size=M)
        z = rng.integers(0, n, size=M)
        ex, ez = empirical_measure(x, n), empirical_measure(z, n)
        val = w1_empirical(x, z, sp)
        assert abs(val - w1(ex, ez, sp)) <= 1e-9
        dual = w1_dual(ex, ez, sp)
        assert abs(abs(dual.witness @ (ex - ez)) - dual.value) <= 1e-9
        # coupling
        assert val <= np.mean(sp.dist[x, z]) + 1e-12
        # decomposition
        if M > 1:
            assert val <= (M - 1) / M * w1_empirical(x[1:], z[1:], sp) + sp.dist[x[0], z[0]] / M + 1e-12
        # shared atom, brute force over the tails
        if 1 < M <= 6:
            full = w1_empirical(np.r_[x[0], x[1:]], np.r_[x[0], z[1:]], sp)
            brute = min(np.mean(sp.dist[x[1:], list(p)]) for p in permutations(z[1:]))
            assert abs(full - (M - 1) / M * brute) <= 1e-12
        # product bound on a two-point subspace
        k = min(M, 3)
        sub = FiniteMetricSpace(("u", "v"), sp.dist[:2, :2])
        mus, nus = rng.dirichlet(np.ones(2), size=(2, k))
        lhs = w1(product_measure(mus), product_measure(nus), product_space(sub, k))
        assert lhs <= np.mean([w1(a, b, sub) for a, b in zip(mus, nus)]) + 1e-10


def test_c07_exact_nash_gap(malware, malware_solution):
    _, eq = malware_solution
    t0 = time.perf_counter()
    eps = {N: exact_epsilon_N(malware, eq.mu, eq.pi, N)["eps_N"] for N in range(2, 11)}
    assert time.perf_counter() - t0 < 60
    assert min(eps.values()) >= -1e-8
    assert eps[2] >= 2 * eps[10]
    prof = bnd.estimate_lipschitz(malware)
    Ls = bnd.empirical_policy_lipschitz(eq.pi, malware.states)
    K1N, K2N = bnd.value_lipschitz_N(prof, malware.beta, 3, Ls)
    rep = check_symmetry_and_lipschitz(build_joint_mdp(malware, eq.pi, 3), malware.states, K1N, K2N)
    assert rep["symmetry_residual"] <= 1e-9
    assert rep["lipschitz_violations"] == 0 and rep["pairs"] == 64


def test_c08_w1_decay(malware, malware_solution):
    _, eq = malware_solution
    t0 = time.perf_counter()
    sims = {N: simulate_population(malware, eq.pi, eq.mu, SimConfig(N=N, horizon=50, reps=200, seed=8))
            for N in (100, 1000, 10_000)}
    assert time.perf_counter() - t0 < 300
    means = [sims[N]["mean_w1"].mean() for N in (100, 1000, 10_000)]
    assert means[0] > means[1] > means[2]
    prof = bnd.estimate_lipschitz(malware)
    Ls = bnd.empirical_policy_lipschitz(eq.pi, malware.states)
    kappa1 = prof.K1 + prof.K2 * Ls + prof.K3
    kappa2 = prof.diam * bnd.covering_number_bound(0.05, prof.Kclass, prof.diam, prof.ddim)
    alphaN = bnd.alpha_N(10_000, 2.0, prof.diam ** 2, prof.ddim, 1.0)
    envelope = np.array([bnd.alpha_t(10_000, 0.05, t, kappa1, kappa2, alphaN) for t in range(51)])
    # upper end of a 99% confidence interval for the mean
    assert np.all(sims[10_000]["ci_high"] <= envelope)


def test_c09_bounds_arithmetic():
    for t in range(51):
        for k1 in (0.3, 0.9, 1.0, 1.1):
            closed = bnd.alpha_t(1000, 0.01, t, k1, 2.5, 0.2)
            assert abs(closed - bnd.alpha_t_recursive(1000, 0.01, t, k1, 2.5, 0.2)) <= 1e-12 * max(1, closed)
    prof = bnd.LipschitzProfile(L1=1.2, L2=0.5, L3=1.0, K1=0.1, K2=1.0, K3=0.05, rho=1.0, diam=1.0, ddim=0.0,
                                cbar_max=1.7, Kclass=1.7, Lfun=lambda R1, R2, R3: (0.3, 0.3))
    beta, Ls = 0.9, 0.6
    K1N, K2N = bnd.value_lipschitz_N(prof, beta, 1e8, Ls)
    lim = bnd.limit_constants(prof, beta, Ls)
    assert abs(K1N - lim["K1starN"]) <= 1e-6 and abs(K2N - lim["K2starN"]) <= 1e-6
    # beta = 0 reductions
    assert bnd.value_lipschitz_N(prof, 0.0, 7, Ls) == (1.2 + 1.0 / 7, 1.0)
    aN = 0.25
    d = bnd.derived_constants(prof, 0.0, 50, 0.1, aN)
    assert bnd.theta1(50, 0.1, prof, 0.0, d) == (1.2 + 0.5 * d["Lstar"] + 1.0) * aN


def test_c10_determinism(tmp_path, capsys):
    def run(argv):
        code = main(argv)
        return code, capsys.readouterr().out

    eq = tmp_path / "eq.json"
    assert main(["solve", "malware", "--out", str(eq)]) == 0
    runs = [
        ["solve", "malware", "--max-iter", "50"],
        ["check", "malware", str(eq)],
        ["w1", "0.3,0.7", "0.5,0.5", "--metric", "unit2"],
        ["bounds", "malware", "--lfun-const", "0.398,0.398"],
        ["simulate", "malware", str(eq), "--agents", "300", "--reps", "10", "--horizon", "15", "--seed", "3"],
        ["simulate", "malware", str(eq), "--agents", "4", "--exact"],
    ]
    for argv in runs:
        assert run(argv) == run(argv), argv
    sim = runs[4]
    assert run(sim) == run(sim + ["--workers", "3"])
