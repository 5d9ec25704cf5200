"""Greedy offloading baseline."""

import math
from typing import List, Optional

import numpy as np

from skyfog.compute import transmission_delay
from skyfog.models import SolverKind
from skyfog.solvers.base import OffloadSolverBase
from skyfog.solvers.instance import OffloadInstance, Schedule, sequential_fill


def greedy_estimate(instance: OffloadInstance, k: int, node: int, cap: np.ndarray, relay: np.ndarray) -> float:
    """Upload at the current rate, relay, then compute on the node's whole CPU (s)."""
    task = instance.tasks[k]
    if task.release >= instance.n_slots:
        return math.inf
    upload = transmission_delay(task.up, float(cap[k, node, task.release]))
    if math.isinf(upload):
        return math.inf
    return upload + relay[k, node] * instance.dt + task.req / instance.nodes[node].cpu_freq


def greedy_assign(instance: OffloadInstance) -> Schedule:
    """Creation-order greedy: every task takes its fastest node on its own estimate.

    The estimate ignores what other tasks already claimed. Slots are then
    filled first come, first served; tasks the fill cannot finish stay
    committed to their node but count as unassigned in the plan.
    """
    cap = instance.capacity_array()
    relay = instance.relay_array()
    committed = np.full(instance.n_tasks, -1, dtype=int)
    order = sorted(range(instance.n_tasks), key=lambda k: (instance.tasks[k].created_slot, k))
    for k in order:
        task = instance.tasks[k]
        if task.fixed_node is not None:
            committed[k] = task.fixed_node
            continue
        budget = (task.deadline + 1 - task.release) * instance.dt
        best: Optional[int] = None
        best_delay = math.inf
        for node in instance.allowed_nodes(k):
            delay = greedy_estimate(instance, k, node, cap, relay)
            if delay <= budget + 1e-12 and delay < best_delay:
                best, best_delay = node, delay
        if best is not None:
            committed[k] = best

    placements: List = [(k, int(committed[k])) for k in order if committed[k] >= 0]
    schedule = sequential_fill(instance, placements)
    schedule.committed = committed
    schedule.iterations = 1
    return schedule


class GreedySolver(OffloadSolverBase):
    """Greedy baseline solver."""

    kind = SolverKind.GREEDY

    def _plan(self, instance: OffloadInstance) -> Schedule:
        return greedy_assign(instance)
