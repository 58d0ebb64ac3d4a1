import numpy as np
import pytest

from linmfg.errors import MassViolation
from linmfg.gnep import GnepDims, default_player_two_cost, eval_H, eval_h, grad_potential, jacobian_H
from linmfg.ipsolver import (
    CONVERGED,
    MAX_ITER,
    SINGULAR,
    LINE_SEARCH_FAILED,
    SolverConfig,
    extract_equilibrium,
    initialize,
    line_search,
    newton_direction,
    solve,
)
from linmfg.model import FiniteMetricSpace, MfgModel, random_model

from test_gnep import random_point


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(sigma=1.0)
    with pytest.raises(ValueError):
        SolverConfig(armijo_coeff=0.0)
    with pytest.raises(ValueError):
        SolverConfig(Kparam=5.0).K_for(GnepDims(2, 2))
    assert SolverConfig().K_for(GnepDims(2, 2)) == 22.0


def test_initialize(malware):
    g = default_player_two_cost(malware)
    z = initialize(malware, g)
    dims = GnepDims.of(malware)
    assert np.all(eval_H(malware, g, z)[dims.n:] > 0)
    assert np.all(z[dims.n:] > 0)
    cfg = SolverConfig(init_margin=1.0)
    z = initialize(malware, g, cfg)
    h = eval_h(malware, z)
    np.testing.assert_allclose(z[dims.slices()["slack"]], np.maximum(1.0, -h + 1.0))


def test_newton_direction_formulas(malware):
    g = default_player_two_cost(malware)
    rng = np.random.default_rng(0)
    z = random_point(malware, rng)
    dims = GnepDims.of(malware)
    d, rcond = newton_direction(malware, g, z, 0.4, Hval=np.zeros(dims.size))
    assert not d.any() and rcond > 0
    d, _ = newton_direction(malware, g, z, 0.0)
    np.testing.assert_allclose(jacobian_H(malware, g, z) @ d, -eval_H(malware, g, z), atol=1e-10)


def test_descent_on_random_interior_points(malware):
    g = default_player_two_cost(malware)
    rng = np.random.default_rng(8)
    for _ in range(50):
        z = random_point(malware, rng)
        d, _ = newton_direction(malware, g, z, 0.4)
        assert grad_potential(malware, g, z) @ d < 0


def test_line_search_trivial_cases(malware):
    g = default_player_two_cost(malware)
    cfg = SolverConfig()
    z = initialize(malware, g, cfg)
    t, l, *_ = line_search(malware, g, z, np.zeros_like(z), cfg)
    assert (t, l) == (1.0, 0)
    d, _ = newton_direction(malware, g, z, cfg.sigma)
    t, l, *_ = line_search(malware, g, z, 1e-9 * d, cfg)
    assert l == 0


def test_solve_malware_run(malware, malware_solution):
    res, eq = malware_solution
    assert res.status == CONVERGED
    tr = res.trace
    psi = tr.column("psi")
    assert np.all(np.diff(psi) <= 0)
    kappa = tr.config["kappa"]
    for rec in tr.records:
        assert rec.step_t == kappa ** rec.step_l
        assert rec.min_slack > 0
    assert np.abs(eq.mu - [0.59, 0.41]).max() <= 0.01
    assert np.abs(eq.pi[1] - [0.02, 0.98]).max() <= 0.02
    assert tr.config["armijo_literal"] is False


def test_trace_csv_deterministic(malware):
    cfg = SolverConfig(max_iter=40)
    a = solve(malware, None, cfg).trace.to_csv()
    b = solve(malware, None, cfg).trace.to_csv()
    assert a == b
    lines = a.splitlines()
    assert lines[0].startswith("# {") and lines[1].startswith("iter,norm_H")
    assert len(lines) == 42


def test_start_at_root_takes_no_iterations(malware, malware_solution):
    res, _ = malware_solution
    again = solve(malware, None, SolverConfig(tol_H=1e-7), z0=res.z)
    assert again.status == CONVERGED and again.iterations == 0


def test_literal_armijo_coefficient_stalls(malware):
    res = solve(malware, None, SolverConfig(armijo_coeff=1.0, max_iter=200))
    assert res.status == MAX_ITER
    assert res.trace.records[-1].norm_H > 1.0


def test_degenerate_model_is_reported():
    # two identical states: the flow constraints become redundant
    rng = np.random.default_rng(0)
    base = random_model(rng, 2, 2, beta=0.8)
    kernel = np.zeros((3, 2, 3, 3))
    cost = np.zeros((3, 2, 3))
    src = [0, 0, 1]
    for x in range(3):
        for a in range(2):
            for z in range(3):
                p = base.kernel[src[x], a, src[z]]
                kernel[x, a, z] = [p[0] / 2, p[0] / 2, p[1]]
                cost[x, a, z] = base.cost[src[x], a, src[z]]
    m = MfgModel(FiniteMetricSpace.unit(3), base.actions, kernel, cost, 0.8)
    res = solve(m, None, SolverConfig(max_iter=3000))
    assert res.status in {CONVERGED, MAX_ITER, SINGULAR, LINE_SEARCH_FAILED}
    if res.status != CONVERGED:
        assert res.message


def test_extract_uniform_row_flag(malware):
    dims = GnepDims.of(malware)
    z = np.zeros(dims.size)
    s = dims.slices()
    z[s["zeta"]] = [0.0, 0.0, 0.3, 0.7]
    z[s["mu"]] = [0.0, 1.0]
    eq = extract_equilibrium(malware, z)
    assert eq.uniform_rows == [0]
    np.testing.assert_allclose(eq.pi, [[0.5, 0.5], [0.3, 0.7]])
    z[s["mu"]] = [0.0, 0.9]
    with pytest.raises(MassViolation):
        extract_equilibrium(malware, z)
