"""Exact optimum for small offloading instances."""

import itertools
import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

from skyfog.exceptions import InstanceTooLargeError
from skyfog.models import OffloadConfig, SolverKind
from skyfog.solvers.base import OffloadSolverBase
from skyfog.solvers.instance import (
    OffloadInstance,
    Schedule,
    fill_task,
    free_resources,
    objective,
    validate_schedule,
)
from skyfog.solvers.slot_lp import earliest_fill
from skyfog.solvers.who import WhoSolver

logger = logging.getLogger(__name__)

MAX_TASKS = 3
MAX_NODES = 3
MAX_SLOTS = 20
DEMAND_SLACK = 1e-6


def _check_guard(instance: OffloadInstance) -> None:
    if instance.n_tasks > MAX_TASKS or instance.n_nodes > MAX_NODES or instance.n_slots > MAX_SLOTS:
        raise InstanceTooLargeError(instance.n_tasks, instance.n_nodes, instance.n_slots)


def _solo_finish(instance: OffloadInstance, k: int, node: int) -> Optional[int]:
    """Completion slot of a task alone on the node, a lower bound under any sharing."""
    bw_free, cpu_free = free_resources(instance)
    plan = fill_task(instance, k, node, bw_free, cpu_free)
    if plan is None:
        return None
    return int(np.flatnonzero(plan[1])[-1])


def _solve_slots(instance: OffloadInstance, mu: Sequence[int]) -> Optional[Schedule]:
    """Optimal slot schedule for a fixed assignment, as a mixed-integer program."""
    k_count, t_count = instance.n_tasks, instance.n_slots
    assigned = [k for k in range(k_count) if mu[k] >= 0]
    schedule = Schedule.empty(k_count, t_count)
    if not assigned:
        return schedule

    cap = instance.capacity_array()
    relay = instance.relay_array()
    cpu = instance.cpu_array()
    _, band_of = instance.bands()
    m = len(assigned)
    block = m * t_count

    def s(a: int, t: int) -> int:
        return a * t_count + t

    def xb(a: int, t: int) -> int:
        return block + a * t_count + t

    def e(a: int, t: int) -> int:
        return 2 * block + a * t_count + t

    def yb(a: int, t: int) -> int:
        return 3 * block + a * t_count + t

    def tran_end(a: int) -> int:
        return 4 * block + a

    def comp_start(a: int) -> int:
        return 4 * block + m + a

    def comp_end(a: int) -> int:
        return 4 * block + 2 * m + a

    n_vars = 4 * block + 3 * m
    lower = np.zeros(n_vars)
    upper = np.zeros(n_vars)
    integrality = np.zeros(n_vars)
    cost = np.zeros(n_vars)
    big_m = t_count + 1

    rows: List[np.ndarray] = []
    row_lb: List[float] = []
    row_ub: List[float] = []

    def add(coefficients: dict, lb: float, ub: float) -> None:
        row = np.zeros(n_vars)
        for index, value in coefficients.items():
            row[index] += value
        rows.append(row)
        row_lb.append(lb)
        row_ub.append(ub)

    for a, k in enumerate(assigned):
        task = instance.tasks[k]
        node = mu[k]
        for t in range(t_count):
            in_range = task.release <= t <= task.deadline
            can_send = in_range and task.up > 0 and cap[k, node, t] > 0
            upper[s(a, t)] = upper[xb(a, t)] = 1.0 if can_send else 0.0
            upper[e(a, t)] = upper[yb(a, t)] = 1.0 if in_range else 0.0
            integrality[xb(a, t)] = integrality[yb(a, t)] = 1
            add({s(a, t): 1.0, xb(a, t): -1.0}, -np.inf, 0.0)
            add({e(a, t): 1.0, yb(a, t): -1.0}, -np.inf, 0.0)
            add({xb(a, t): 1.0, yb(a, t): 1.0}, -np.inf, 1.0)
            add({xb(a, t): float(t), tran_end(a): -1.0}, -np.inf, 0.0)
            add({comp_start(a): 1.0, yb(a, t): float(big_m)}, -np.inf, float(t + big_m))
            add({yb(a, t): float(t), comp_end(a): -1.0}, -np.inf, 0.0)
        if task.up > 0:
            lower[tran_end(a)], upper[tran_end(a)] = task.release, task.deadline
            add(
                {s(a, t): cap[k, node, t] * instance.dt / task.up for t in range(t_count)},
                1.0 - DEMAND_SLACK,
                np.inf,
            )
        else:
            lower[tran_end(a)] = upper[tran_end(a)] = task.release - 1
        add(
            {e(a, t): cpu[node] * instance.dt / task.req for t in range(t_count)},
            1.0 - DEMAND_SLACK,
            np.inf,
        )
        add({tran_end(a): 1.0, comp_start(a): -1.0}, -np.inf, -1.0 - relay[k, node])
        lower[comp_start(a)], upper[comp_start(a)] = task.release, t_count
        lower[comp_end(a)], upper[comp_end(a)] = task.release, task.deadline
        cost[comp_end(a)] = 1.0

    for band in np.unique(band_of):
        members = [a for a, k in enumerate(assigned) if band_of[k] == band]
        if len(members) > 1:
            for t in range(t_count):
                add({s(a, t): 1.0 for a in members}, -np.inf, 1.0)
    for node in set(mu[k] for k in assigned):
        members = [a for a, k in enumerate(assigned) if mu[k] == node]
        if len(members) > 1:
            for t in range(t_count):
                add({e(a, t): 1.0 for a in members}, -np.inf, 1.0)

    result = milp(
        cost,
        integrality=integrality,
        bounds=Bounds(lower, upper),
        constraints=LinearConstraint(np.vstack(rows), row_lb, row_ub),
        options={"mip_rel_gap": 0.0},
    )
    if result.status != 0 or result.x is None:
        return None

    values = result.x
    for a, k in enumerate(assigned):
        task = instance.tasks[k]
        node = mu[k]
        bw = np.array([values[s(a, t)] if values[xb(a, t)] > 0.5 else 0.0 for t in range(t_count)])
        share = np.array([values[e(a, t)] if values[yb(a, t)] > 0.5 else 0.0 for t in range(t_count)])
        bw[bw < 1e-9] = 0.0
        share[share < 1e-9] = 0.0
        rate_bw = cap[k, node] * instance.dt
        rate_cpu = np.full(t_count, cpu[node] * instance.dt)
        schedule.mu[k] = node
        schedule.bw[k] = earliest_fill(bw[None, :], np.array([task.up]), rate_bw[None, :])[0] if task.up > 0 else 0.0
        schedule.cpu[k] = earliest_fill(share[None, :], np.array([task.req]), rate_cpu[None, :])[0]
    return schedule


def exact_oracle(instance: OffloadInstance) -> Tuple[float, Schedule]:
    """Global optimum by enumerating assignments, each scheduled exactly.

    Assignments are pruned when the sum of single-task completion slots
    (every task alone on its node) cannot beat the best objective found.

    Raises:
        InstanceTooLargeError: More than 3 tasks, 3 nodes, or 20 slots.
    """
    _check_guard(instance)
    k_count = instance.n_tasks
    if k_count == 0:
        return 0.0, Schedule.empty(0, instance.n_slots)

    solo = {
        (k, node): _solo_finish(instance, k, node)
        for k in range(k_count)
        for node in instance.allowed_nodes(k)
    }
    options = [
        [-1] + [node for node in instance.allowed_nodes(k) if solo[(k, node)] is not None]
        for k in range(k_count)
    ]

    best_value = math.inf
    best = Schedule.empty(k_count, instance.n_slots)
    for mu in itertools.product(*options):
        bound = sum(
            instance.punish if node < 0 else instance.start_slot + solo[(k, node)]
            for k, node in enumerate(mu)
        )
        if bound >= best_value - 1e-9:
            continue
        schedule = _solve_slots(instance, mu)
        if schedule is None:
            continue
        violations = validate_schedule(schedule, instance)
        if violations:
            logger.warning("Discarding oracle schedule for %s: %s", mu, violations)
            continue
        value = objective(schedule, instance, validate=False)
        if value < best_value:
            best_value, best = value, schedule
    best.iterations = 1
    best.objective_trace = [best_value]
    return best_value, best


class OracleSolver(OffloadSolverBase):
    """Exact solver; windows past its size guard are planned by WHO instead."""

    kind = SolverKind.ORACLE

    def __init__(self, config: OffloadConfig):
        super().__init__(config)
        self._fallback = WhoSolver(config)
        self.fallbacks = 0

    def _plan(self, instance: OffloadInstance) -> Schedule:
        try:
            _, schedule = exact_oracle(instance)
        except InstanceTooLargeError as e:
            self.fell_back = True
            self.fallbacks += 1
            logger.debug("%s; falling back to WHO", e)
            return self._fallback._plan(instance)
        return schedule
