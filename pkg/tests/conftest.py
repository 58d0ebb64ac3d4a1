import numpy as np
import pytest

from linmfg.gnep import default_player_two_cost
from linmfg.ipsolver import SolverConfig, extract_equilibrium, solve
from linmfg.model import FiniteMetricSpace, MfgModel, malware_model

# equilibrium values reported for the malware instance
REPORTED_MU = np.array([0.59, 0.41])
REPORTED_PI = np.array([[0.76, 0.24], [0.02, 0.98]])


@pytest.fixture(scope="session")
def malware():
    return malware_model()


@pytest.fixture(scope="session")
def malware_solution(malware):
    cfg = SolverConfig(sigma=0.4, kappa=0.001, eta=0.0, max_iter=10000)
    res = solve(malware, default_player_two_cost(malware), cfg)
    return res, extract_equilibrium(malware, res.z)


def zero_cost_model(n_states=2, n_actions=2, beta=0.5):
    kernel = np.full((n_states, n_actions, n_states, n_states), 1.0 / n_states)
    return MfgModel(
        states=FiniteMetricSpace.unit(n_states),
        actions=[f"a{i}" for i in range(n_actions)],
        kernel=kernel,
        cost=np.zeros((n_states, n_actions, n_states)),
        beta=beta,
    )
