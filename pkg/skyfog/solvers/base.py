"""Base class for offloading solvers."""

import time
from abc import ABC, abstractmethod
from typing import Dict, Optional

from skyfog.models import OffloadConfig, SolverKind
from skyfog.solvers.instance import OffloadInstance, Schedule


class OffloadSolverBase(ABC):
    """Base class for offloading solvers.

    A solver turns one planning window into a Schedule. The `act_*` accessors
    read decisions for the current slot back out of the last plan, which is
    how the simulator applies them.
    """

    kind: SolverKind

    def __init__(self, config: OffloadConfig):
        """Initialise the solver.

        Args:
            config: Offloading configuration (window, AO tolerance, seats).
        """
        self.config = config
        self.last_instance: Optional[OffloadInstance] = None
        self.last_schedule: Optional[Schedule] = None
        self.last_wall_time = 0.0
        self.fell_back = False

    def plan(self, instance: OffloadInstance) -> Schedule:
        """Plan one window and remember it for the `act_*` accessors.

        Args:
            instance: The window to plan.

        Returns:
            The schedule for every slot of the window.
        """
        self.fell_back = False
        started = time.perf_counter()
        schedule = self._plan(instance)
        self.last_wall_time = time.perf_counter() - started
        self.last_instance = instance
        self.last_schedule = schedule
        return schedule

    @abstractmethod
    def _plan(self, instance: OffloadInstance) -> Schedule:
        """Solver-specific planning."""

    def act_offloading(self) -> Dict[str, int]:
        """Node index committed to each newly assigned task."""
        if self.last_schedule is None or self.last_instance is None:
            return {}
        return {
            task.task_id: int(node)
            for task, node in zip(self.last_instance.tasks, self.last_schedule.assignment)
            if task.fixed_node is None and node >= 0
        }

    def act_rb_allocation(self, slot: int = 0) -> Dict[str, float]:
        """Bandwidth share of each task in a slot of the last plan."""
        return self._shares("bw", slot)

    def act_cpu_allocation(self, slot: int = 0) -> Dict[str, float]:
        """CPU share of each task in a slot of the last plan."""
        return self._shares("cpu", slot)

    def _shares(self, kind: str, slot: int) -> Dict[str, float]:
        if self.last_schedule is None or self.last_instance is None:
            return {}
        shares = getattr(self.last_schedule, kind)
        return {
            task.task_id: float(shares[k, slot])
            for k, task in enumerate(self.last_instance.tasks)
            if shares[k, slot] > 0
        }
