"""Skyfog - a deterministic simulator for UAV-integrated vehicular fog computing."""

__version__ = "0.1.0"
__author__ = "Your Name"
__email__ = "your.email@example.com"

from skyfog.config import load_config, mission_preset
from skyfog.core import World
from skyfog.harness import run_replications, run_scenario
from skyfog.models import ScenarioConfig, SolverKind

__all__ = [
    "ScenarioConfig",
    "SolverKind",
    "World",
    "load_config",
    "mission_preset",
    "run_replications",
    "run_scenario",
]
