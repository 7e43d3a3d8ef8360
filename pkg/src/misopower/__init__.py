"""Outage-constrained MISO power allocation with Bernstein approximations."""

from .errors import MisoPowerError
from .model import (
    BroadcastScenario,
    Geometry,
    InterferenceScenario,
    generate_broadcast_scenario,
    generate_interference_scenario,
    paper_layout,
)
from .llbcp import SolverConfig
from .problems import solve_maxmin, solve_mse_power_min, solve_power_min

__version__ = "0.1.0"
