"""Window-based Hungarian offloading with alternating slot refinement."""

import itertools
import logging
import math
from typing import Iterator, List, Optional, Tuple

import numpy as np

from skyfog.exceptions import InfeasibleAssignmentError, InfeasibleSubproblemError
from skyfog.models import SolverKind
from skyfog.solvers.base import OffloadSolverBase
from skyfog.solvers.hungarian import hungarian_solve
from skyfog.solvers.instance import (
    OffloadInstance,
    Schedule,
    fill_task,
    free_resources,
    objective,
    sequential_fill,
    validate_schedule,
)
from skyfog.solvers.slot_lp import SlotSubproblem, solve_slot_lp

logger = logging.getLogger(__name__)

# assignment search runs on windows this small
SEARCH_MAX_TASKS = 4
SEARCH_ROUNDS = 10
# every fill order is tried up to this many assigned tasks
PERMUTED_TASKS = 3


def build_cost_matrix(instance: OffloadInstance, seats_per_node: int = 4) -> Tuple[np.ndarray, List[int], List[Tuple[int, int]]]:
    """Estimated completion delay (s) of each new task in each node seat.

    Seat c of node j stands for being the (c+1)-th new task there: it waits for
    the node's committed backlog plus c average-sized tasks. Capacities of the
    window's first slot are held constant. Estimates past the task's last
    usable slot are infinite.

    Returns:
        The cost matrix, the task index of each row, and (node, seat) per column.
    """
    rows = [k for k, task in enumerate(instance.tasks) if task.fixed_node is None]
    columns = [(j, c) for j in range(instance.n_nodes) for c in range(seats_per_node)]
    cost = np.full((len(rows), len(columns)), np.inf)
    if not rows or not columns:
        return cost, rows, columns

    cap = instance.capacity_array()
    relay = instance.relay_array()
    cpu = instance.cpu_array()
    backlog = np.zeros(instance.n_nodes)
    for task in instance.tasks:
        if task.fixed_node is not None:
            backlog[task.fixed_node] += task.req
    mean_req = float(np.mean([instance.tasks[k].req for k in rows]))

    for r, k in enumerate(rows):
        task = instance.tasks[k]
        last = min(task.deadline, instance.n_slots - 1)
        if task.release > last:
            continue
        allowed = set(instance.allowed_nodes(k))
        for col, (j, seat) in enumerate(columns):
            if j not in allowed:
                continue
            slot_work = cpu[j] * instance.dt
            if task.up > 0:
                rate = cap[k, j, task.release] * instance.dt
                if rate <= 0:
                    continue
                ready = task.release + math.ceil(task.up / rate - 1e-9)
            else:
                ready = task.release
            ready += int(relay[k, j])
            busy = (backlog[j] + seat * mean_req) / slot_work
            finish = math.ceil(max(ready, busy) + task.req / slot_work - 1e-9) - 1
            if finish <= last:
                cost[r, col] = (finish + 1) * instance.dt
    return cost, rows, columns


def window_offload(instance: OffloadInstance, seats_per_node: int = 4) -> Schedule:
    """Assign the window's new tasks by Hungarian matching and give provisional slots.

    Earlier commitments are placed first, in creation order. Matched tasks are
    then filled earliest-slot first in order of their estimated cost, and tasks
    the matching left out get one more try on whatever is still free.
    """
    order = sorted(range(instance.n_tasks), key=lambda k: (instance.tasks[k].created_slot, k))
    fixed = [(k, int(instance.tasks[k].fixed_node)) for k in order if instance.tasks[k].fixed_node is not None]
    schedule = sequential_fill(instance, fixed)

    cost, rows, columns = build_cost_matrix(instance, seats_per_node)
    matching = hungarian_solve(cost)
    matched = sorted(
        ((cost[r, c], rows[r], columns[c][0]) for r, c in matching.pairs),
        key=lambda item: (item[0], item[1]),
    )
    schedule = sequential_fill(instance, [(k, j) for _, k, j in matched], schedule)

    leftovers = [rows[r] for r in matching.unassigned]
    leftovers += [k for _, k, _ in matched if schedule.mu[k] < 0]
    if leftovers:
        schedule = _backfill(instance, schedule, sorted(leftovers, key=order.index))
    schedule.iterations = 0
    return schedule


def _backfill(instance: OffloadInstance, schedule: Schedule, candidates: List[int]) -> Schedule:
    bw_free, cpu_free = free_resources(instance)
    _, band_of = instance.bands()
    for k in range(instance.n_tasks):
        if schedule.mu[k] >= 0:
            bw_free[band_of[k]] -= schedule.bw[k]
            cpu_free[schedule.mu[k]] -= schedule.cpu[k]
    cap = instance.capacity_array()
    relay = instance.relay_array()
    for k in candidates:
        best: Optional[Tuple[int, int, Tuple[np.ndarray, np.ndarray]]] = None
        for node in instance.allowed_nodes(k):
            plan = fill_task(instance, k, node, bw_free, cpu_free, cap, relay)
            if plan is None:
                continue
            finish = int(np.flatnonzero(plan[1])[-1])
            if best is None or (finish, node) < best[:2]:
                best = (finish, node, plan)
        if best is not None:
            _, node, (bw_row, cpu_row) = best
            schedule.mu[k] = node
            schedule.bw[k], schedule.cpu[k] = bw_row, cpu_row
            bw_free[band_of[k]] -= bw_row
            cpu_free[node] -= cpu_row
    return schedule


def _tran_ends(schedule: Schedule, instance: OffloadInstance) -> np.ndarray:
    return np.array([schedule.tran_end(k, task.release) for k, task in enumerate(instance.tasks)])


def _cpu_subproblem(schedule: Schedule, instance: OffloadInstance) -> SlotSubproblem:
    relay = instance.relay_array()
    cpu = instance.cpu_array()
    slots = np.arange(instance.n_slots)
    demand = np.zeros(instance.n_tasks)
    rate = np.zeros((instance.n_tasks, instance.n_slots))
    allowed = np.zeros((instance.n_tasks, instance.n_slots), dtype=bool)
    tran_end = _tran_ends(schedule, instance)
    for k, task in enumerate(instance.tasks):
        node = schedule.mu[k]
        if node < 0:
            continue
        demand[k] = task.req
        rate[k] = cpu[node] * instance.dt
        first = max(task.release, tran_end[k] + 1 + relay[k, node])
        allowed[k] = (slots >= first) & (slots <= task.deadline)
    pools = [list(np.flatnonzero(schedule.mu == j)) for j in range(instance.n_nodes)]
    return SlotSubproblem(demand=demand, rate=rate, allowed=allowed, pools=pools)


def _bandwidth_subproblem(schedule: Schedule, instance: OffloadInstance, compute_start: Optional[np.ndarray] = None) -> SlotSubproblem:
    cap = instance.capacity_array()
    relay = instance.relay_array()
    _, band_of = instance.bands()
    slots = np.arange(instance.n_slots)
    demand = np.zeros(instance.n_tasks)
    rate = np.zeros((instance.n_tasks, instance.n_slots))
    allowed = np.zeros((instance.n_tasks, instance.n_slots), dtype=bool)
    for k, task in enumerate(instance.tasks):
        node = schedule.mu[k]
        if node < 0 or task.up <= 0:
            continue
        if compute_start is None:
            start = schedule.comp_start(k)
            limit = (task.deadline + 1 if start is None else start) - 1 - relay[k, node]
        else:
            limit = compute_start[k] - 1 - relay[k, node]
        demand[k] = task.up
        rate[k] = cap[k, node] * instance.dt
        allowed[k] = (slots >= task.release) & (slots <= min(limit, task.deadline))
    pools = [list(np.flatnonzero((band_of == b) & (schedule.mu >= 0))) for b in np.unique(band_of)]
    return SlotSubproblem(demand=demand, rate=rate, allowed=allowed, pools=pools)


def _relaxed_start(schedule: Schedule, instance: OffloadInstance) -> Schedule:
    """Rebuild an incomplete plan from scratch for the same assignment."""
    assigned = [instance.tasks[k].task_id for k in np.flatnonzero(schedule.mu >= 0)]
    start = Schedule(mu=schedule.mu.copy(), bw=np.zeros_like(schedule.bw), cpu=np.zeros_like(schedule.cpu))
    try:
        # leave the final usable slot for computing
        latest = np.array([task.deadline for task in instance.tasks])
        start.bw = solve_slot_lp(_bandwidth_subproblem(start, instance, compute_start=latest))
        start.cpu = solve_slot_lp(_cpu_subproblem(start, instance))
    except InfeasibleSubproblemError as e:
        raise InfeasibleAssignmentError(assigned) from e
    if validate_schedule(start, instance):
        raise InfeasibleAssignmentError(assigned)
    return start


def _alternate(
    work: Schedule,
    instance: OffloadInstance,
    current: float,
    trace: List[float],
    tol: float,
    max_iters: int,
) -> Tuple[Schedule, float, int]:
    iteration = 0
    for iteration in range(1, max_iters + 1):
        previous_x, previous_y = work.x.astype(float), work.y.astype(float)

        try:
            cpu = solve_slot_lp(_cpu_subproblem(work, instance))
        except InfeasibleSubproblemError:
            cpu = None
        if cpu is not None:
            candidate = Schedule(mu=work.mu.copy(), bw=work.bw.copy(), cpu=cpu)
            if not validate_schedule(candidate, instance):
                value = objective(candidate, instance, validate=False)
                if value < current - 1e-9:
                    work, current = candidate, value

        try:
            bw = solve_slot_lp(_bandwidth_subproblem(work, instance))
        except InfeasibleSubproblemError:
            bw = None
        if bw is not None:
            candidate = Schedule(mu=work.mu.copy(), bw=bw, cpu=work.cpu.copy())
            if not validate_schedule(candidate, instance) and (
                _tran_ends(candidate, instance).sum() < _tran_ends(work, instance).sum()
            ):
                work = candidate

        trace.append(current)
        change = max(
            float(np.linalg.norm(work.x.astype(float) - previous_x)),
            float(np.linalg.norm(work.y.astype(float) - previous_y)),
        )
        if change < tol:
            break
    return work, current, iteration


def _fill_orders(instance: OffloadInstance, assigned: List[int]) -> List[List[int]]:
    if len(assigned) <= PERMUTED_TASKS:
        return [list(order) for order in itertools.permutations(assigned)]
    by_creation = sorted(assigned, key=lambda k: (instance.tasks[k].created_slot, k))
    by_deadline = sorted(assigned, key=lambda k: (instance.tasks[k].deadline, k))
    return [by_creation, by_deadline]


def plan_assignment(instance: OffloadInstance, mu: np.ndarray) -> Tuple[float, Schedule]:
    """Best earliest-slot plan for a fixed assignment over several fill orders."""
    assigned = [k for k in range(instance.n_tasks) if mu[k] >= 0]
    best_value, best = math.inf, Schedule.empty(instance.n_tasks, instance.n_slots)
    for order in _fill_orders(instance, assigned):
        candidate = sequential_fill(instance, [(k, int(mu[k])) for k in order])
        value = objective(candidate, instance, validate=False)
        if value < best_value - 1e-9:
            best_value, best = value, candidate
    if not assigned:
        best_value = objective(best, instance, validate=False)
    return best_value, best


def _neighbours(instance: OffloadInstance, mu: np.ndarray) -> Iterator[np.ndarray]:
    for k in range(instance.n_tasks):
        for node in instance.allowed_nodes(k):
            if node != mu[k]:
                moved = mu.copy()
                moved[k] = node
                yield moved
    free = [k for k in range(instance.n_tasks) if instance.tasks[k].fixed_node is None]
    for a, b in itertools.combinations(free, 2):
        if mu[a] == mu[b]:
            continue
        if (mu[b] < 0 or mu[b] in instance.allowed_nodes(a)) and (mu[a] < 0 or mu[a] in instance.allowed_nodes(b)):
            swapped = mu.copy()
            swapped[a], swapped[b] = mu[b], mu[a]
            yield swapped


def _solo_best(instance: OffloadInstance) -> np.ndarray:
    """Each task on the node where it would finish first with the window to itself."""
    mu = np.full(instance.n_tasks, -1, dtype=int)
    cap = instance.capacity_array()
    relay = instance.relay_array()
    for k in range(instance.n_tasks):
        best: Optional[Tuple[int, int]] = None
        for node in instance.allowed_nodes(k):
            bw_free, cpu_free = free_resources(instance)
            plan = fill_task(instance, k, node, bw_free, cpu_free, cap, relay)
            if plan is None:
                continue
            finish = int(np.flatnonzero(plan[1])[-1])
            if best is None or (finish, node) < best:
                best = (finish, node)
        if best is not None:
            mu[k] = best[1]
    return mu


def _served(schedule: Schedule) -> int:
    return int((schedule.mu >= 0).sum())


def swap_search(schedule: Schedule, instance: OffloadInstance, rounds: int = SEARCH_ROUNDS) -> Schedule:
    """Improve the assignment by moving single tasks and swapping pairs.

    Starts from the given plan and from every task on its fastest node alone.
    Each neighbour is re-planned by `plan_assignment`; the first valid one that
    serves no fewer tasks at a strictly lower objective is taken and the
    neighbourhood is searched again. Returns the given plan when nothing beats it.
    """
    best = schedule
    best_key = (_served(schedule), objective(schedule, instance, validate=False))

    def beats(planned: Schedule, value: float, key: Tuple[int, float]) -> bool:
        return _served(planned) >= key[0] and value < key[1] - 1e-9 and not validate_schedule(planned, instance)

    for start in (schedule.mu.copy(), _solo_best(instance)):
        value, planned = plan_assignment(instance, start)
        if beats(planned, value, best_key):
            best, best_key = planned, (_served(planned), value)
        mu, key = planned.mu.copy(), (_served(planned), value)
        for _ in range(rounds):
            improved = False
            for candidate in _neighbours(instance, mu):
                value, planned = plan_assignment(instance, candidate)
                if beats(planned, value, key):
                    mu, key, improved = planned.mu.copy(), (_served(planned), value), True
                    if beats(planned, value, best_key):
                        best, best_key = planned, key
                    break
            if not improved:
                break
    return best


def ao_refine(schedule: Schedule, instance: OffloadInstance, tol: float = 1e-6, max_iters: int = 20) -> Schedule:
    """Alternate CPU-slot and upload-slot LPs, then search nearby assignments.

    (a) With uploads fixed, re-plan CPU shares; kept only if the objective
    drops. (b) With compute slots fixed, re-plan uploads; kept only if uploads
    end earlier overall. Stops once neither indicator pattern changes by more
    than `tol` or after `max_iters` rounds. On windows of at most
    `SEARCH_MAX_TASKS` tasks a `swap_search` follows, and a better assignment
    it finds is refined the same way. Every step is kept only when the
    objective does not rise, so the trace never rises.
    """
    work = schedule.copy()
    if validate_schedule(work, instance):
        work = _relaxed_start(work, instance)
    current = objective(work, instance, validate=False)
    trace = [current]
    work, current, iteration = _alternate(work, instance, current, trace, tol, max_iters)

    movable = any(task.fixed_node is None for task in instance.tasks)
    if movable and instance.n_tasks <= SEARCH_MAX_TASKS:
        searched = swap_search(work, instance)
        value = objective(searched, instance, validate=False)
        if value < current - 1e-9:
            logger.debug("Assignment search lowered the objective from %.3f to %.3f", current, value)
            trace.append(value)
            work, current, more = _alternate(searched, instance, value, trace, tol, max_iters)
            iteration += more

    work.committed = schedule.committed
    work.iterations = iteration
    work.objective_trace = trace
    return work


class WhoSolver(OffloadSolverBase):
    """Window-based Hungarian assignment refined by alternating optimization."""

    kind = SolverKind.WHO

    def _plan(self, instance: OffloadInstance) -> Schedule:
        schedule = window_offload(instance, self.config.seats_per_node)
        try:
            return ao_refine(schedule, instance, self.config.ao_tol, self.config.ao_max_iters)
        except InfeasibleAssignmentError as e:
            logger.warning("%s; keeping the provisional plan", e)
            return schedule
