"""Stationary equilibria of linear mean-field games on finite state and action spaces.

Submodules: ``model`` (primitives), ``transport`` (exact W1), ``mdp`` (oracle
MDP solvers), ``gnep`` (KKT map and Jacobian), ``ipsolver`` (interior-point
root finder), ``finite_n`` (N-agent checks), ``bounds`` (explicit error
constants) and ``cli``.
"""
from .errors import LinMfgError
from .ipsolver import SolverConfig, extract_equilibrium, solve
from .mdp import verify_mfe
from .model import FiniteMetricSpace, MfgModel, malware_model, validate_model
from .transport import w1, w1_empirical

__version__ = "0.1.0"

__all__ = [
    "FiniteMetricSpace",
    "LinMfgError",
    "MfgModel",
    "SolverConfig",
    "extract_equilibrium",
    "malware_model",
    "solve",
    "validate_model",
    "verify_mfe",
    "w1",
    "w1_empirical",
]
