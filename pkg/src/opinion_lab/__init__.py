"""Resource-weighted opinion dynamics on signed influence networks.

Modules: :mod:`model` (network, utilities, vector field), :mod:`integrate`
(ODE solvers, convergence and period detection), :mod:`analysis`
(contraction, equilibria, structure), :mod:`game` (Nash tests, price of
anarchy), :mod:`bifurcation` (two-agent oscillations) and :mod:`cli`.
"""

__version__ = "0.1.0"

from .errors import OpinionLabError
from .integrate import IntegratorConfig, Trajectory, simulate, simulate_ensemble
from .model import AgentParams, InfluenceNetwork, build_network, network_from_arrays, vector_field

__all__ = [
    "AgentParams",
    "InfluenceNetwork",
    "IntegratorConfig",
    "OpinionLabError",
    "Trajectory",
    "build_network",
    "network_from_arrays",
    "simulate",
    "simulate_ensemble",
    "vector_field",
]
