"""Offloading solvers for Skyfog."""

from .base import OffloadSolverBase
from .factory import create_solver
from .greedy import GreedySolver, greedy_assign
from .hungarian import Matching, hungarian_solve
from .instance import (
    InstanceNode,
    InstanceTask,
    OffloadInstance,
    Schedule,
    dump_instance,
    load_instance,
    objective,
    validate_schedule,
)
from .oracle import OracleSolver, exact_oracle
from .slot_lp import SlotSubproblem, solve_slot_lp
from .utils import random_instance
from .who import WhoSolver, ao_refine, build_cost_matrix, plan_assignment, swap_search, window_offload

__all__ = [
    "GreedySolver",
    "InstanceNode",
    "InstanceTask",
    "Matching",
    "OffloadInstance",
    "OffloadSolverBase",
    "OracleSolver",
    "Schedule",
    "SlotSubproblem",
    "WhoSolver",
    "ao_refine",
    "build_cost_matrix",
    "create_solver",
    "dump_instance",
    "exact_oracle",
    "greedy_assign",
    "hungarian_solve",
    "load_instance",
    "objective",
    "plan_assignment",
    "random_instance",
    "solve_slot_lp",
    "swap_search",
    "validate_schedule",
    "window_offload",
]
