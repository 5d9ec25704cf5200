"""Offloading instances, schedules, and the constraint checks every solver must pass."""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import yaml
from pydantic import BaseModel, Field, model_validator

from skyfog.exceptions import InvalidConfigurationError, InvalidYAMLError, ScheduleValidationError

RELATIVE_TOLERANCE = 1e-5
SHARE_EPSILON = 1e-9


class InstanceTask(BaseModel):
    """A task as the optimizer sees it: residual work and a usable slot range."""

    task_id: str
    up: float = Field(ge=0, description="Bits still to upload")
    req: float = Field(gt=0, description="Cycles still to run")
    created_slot: int = Field(default=0, description="Absolute creation slot")
    release: int = Field(default=0, ge=0, description="First usable slot of the window")
    deadline: int = Field(description="Last usable slot of the window (inclusive)")
    band: str = Field(default="0", description="Spectrum pool the upload draws from")
    fixed_node: Optional[int] = Field(default=None, description="Node committed earlier")
    candidates: Optional[List[int]] = Field(
        default=None,
        description="Nodes the task may use; every node when unset",
    )


class InstanceNode(BaseModel):
    node_id: str
    cpu_freq: float = Field(gt=0)


class OffloadInstance(BaseModel):
    """One planning window: tasks, nodes, and per-slot link capacities."""

    start_slot: int = Field(default=0, ge=0)
    n_slots: int = Field(ge=1, description="Window length ws")
    dt: float = Field(gt=0, description="Slot length (s)")
    punish: float = Field(default=100.0, ge=0)
    tasks: List[InstanceTask] = Field(default_factory=list)
    nodes: List[InstanceNode] = Field(default_factory=list)
    capacity: List[List[List[float]]] = Field(
        default_factory=list,
        description="Full-band rate (bits/s) per [task][node][slot]",
    )
    relay: List[List[int]] = Field(
        default_factory=list,
        description="Slots between upload end and compute start per [task][node]",
    )

    @model_validator(mode="after")
    def _shapes(self) -> "OffloadInstance":
        k, j, t = len(self.tasks), len(self.nodes), self.n_slots
        if k and (len(self.capacity) != k or any(len(row) != j for row in self.capacity)):
            raise ValueError("capacity must be shaped [tasks][nodes][slots]")
        for row in self.capacity:
            for rates in row:
                if len(rates) != t or any(rate < 0 for rate in rates):
                    raise ValueError("capacities must be non-negative with one value per slot")
        if self.relay and (len(self.relay) != k or any(len(row) != j for row in self.relay)):
            raise ValueError("relay must be shaped [tasks][nodes]")
        for task in self.tasks:
            if task.fixed_node is not None and not 0 <= task.fixed_node < j:
                raise ValueError(f"fixed node of {task.task_id} is out of range")
            if task.candidates is not None and any(not 0 <= c < j for c in task.candidates):
                raise ValueError(f"candidate nodes of {task.task_id} are out of range")
        return self

    @property
    def n_tasks(self) -> int:
        return len(self.tasks)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def capacity_array(self) -> np.ndarray:
        if not self.tasks:
            return np.zeros((0, self.n_nodes, self.n_slots))
        return np.asarray(self.capacity, dtype=float).reshape(self.n_tasks, self.n_nodes, self.n_slots)

    def relay_array(self) -> np.ndarray:
        if not self.relay:
            return np.zeros((self.n_tasks, self.n_nodes), dtype=int)
        return np.asarray(self.relay, dtype=int).reshape(self.n_tasks, self.n_nodes)

    def cpu_array(self) -> np.ndarray:
        return np.array([node.cpu_freq for node in self.nodes], dtype=float)

    def bands(self) -> Tuple[List[str], np.ndarray]:
        """Distinct bands and each task's band index."""
        names = sorted({task.band for task in self.tasks})
        index = {name: i for i, name in enumerate(names)}
        return names, np.array([index[task.band] for task in self.tasks], dtype=int)

    def allowed_nodes(self, k: int) -> List[int]:
        task = self.tasks[k]
        if task.fixed_node is not None:
            return [task.fixed_node]
        if task.candidates is not None:
            return sorted(set(task.candidates))
        return list(range(self.n_nodes))


@dataclass
class Schedule:
    """Assignment plus per-slot bandwidth and CPU shares for one window.

    Transmit and compute indicators are the nonzero pattern of the shares.
    `committed` is what a solver actually commits to; it can differ from `mu`
    when a solver assigns tasks its own plan cannot serve.
    """

    mu: np.ndarray
    bw: np.ndarray
    cpu: np.ndarray
    committed: Optional[np.ndarray] = None
    iterations: int = 0
    objective_trace: List[float] = field(default_factory=list)

    @classmethod
    def empty(cls, n_tasks: int, n_slots: int) -> "Schedule":
        return cls(
            mu=np.full(n_tasks, -1, dtype=int),
            bw=np.zeros((n_tasks, n_slots)),
            cpu=np.zeros((n_tasks, n_slots)),
        )

    @property
    def x(self) -> np.ndarray:
        return self.bw > 0

    @property
    def y(self) -> np.ndarray:
        return self.cpu > 0

    @property
    def assignment(self) -> np.ndarray:
        return self.mu if self.committed is None else self.committed

    def copy(self) -> "Schedule":
        return Schedule(
            mu=self.mu.copy(),
            bw=self.bw.copy(),
            cpu=self.cpu.copy(),
            committed=None if self.committed is None else self.committed.copy(),
            iterations=self.iterations,
            objective_trace=list(self.objective_trace),
        )

    def tran_start(self, k: int) -> Optional[int]:
        slots = np.flatnonzero(self.x[k])
        return int(slots[0]) if slots.size else None

    def tran_end(self, k: int, release: int = 0) -> int:
        """Last transmit slot, or the slot before release when nothing is sent."""
        slots = np.flatnonzero(self.x[k])
        return int(slots[-1]) if slots.size else release - 1

    def comp_start(self, k: int) -> Optional[int]:
        slots = np.flatnonzero(self.y[k])
        return int(slots[0]) if slots.size else None

    def comp_end(self, k: int) -> Optional[int]:
        slots = np.flatnonzero(self.y[k])
        return int(slots[-1]) if slots.size else None


def _short(delivered: float, demand: float) -> bool:
    return delivered < demand * (1.0 - RELATIVE_TOLERANCE) - 1e-9


def validate_schedule(schedule: Schedule, instance: OffloadInstance) -> List[str]:
    """Labels of every offloading constraint the schedule breaks."""
    k_count, j_count, t_count = instance.n_tasks, instance.n_nodes, instance.n_slots
    if (
        schedule.mu.shape != (k_count,)
        or schedule.bw.shape != (k_count, t_count)
        or schedule.cpu.shape != (k_count, t_count)
    ):
        return ["out_of_range"]

    violations = set()
    ceiling = 1.0 + RELATIVE_TOLERANCE
    if np.any((schedule.mu < -1) | (schedule.mu >= j_count)):
        violations.add("out_of_range")
    if np.any(schedule.bw < 0) or np.any(schedule.cpu < 0) or np.any(schedule.bw > ceiling) or np.any(schedule.cpu > ceiling):
        violations.add("out_of_range")
    if violations:
        return sorted(violations)

    cap = instance.capacity_array()
    relay = instance.relay_array()
    cpu_freq = instance.cpu_array()
    _, band_of = instance.bands()

    for k, task in enumerate(instance.tasks):
        node = int(schedule.mu[k])
        x, y = schedule.x[k], schedule.y[k]
        if node < 0:
            if x.any() or y.any():
                violations.add("unassigned_holds_resources")
            continue
        if node not in instance.allowed_nodes(k):
            violations.add("node_not_allowed")
        if np.any(x & y):
            violations.add("transmit_compute_overlap")
        tx_slots = np.flatnonzero(x)
        cp_slots = np.flatnonzero(y)
        if tx_slots.size and tx_slots[0] < task.release:
            violations.add("transmit_before_release")
        if tx_slots.size and tx_slots[-1] > task.deadline:
            violations.add("transmit_after_deadline")
        if cp_slots.size and cp_slots[0] < task.release:
            violations.add("compute_before_release")
        if not cp_slots.size:
            violations.add("compute_short")
            continue
        tran_end = schedule.tran_end(k, task.release)
        if cp_slots[0] <= tran_end + relay[k, node]:
            violations.add("compute_before_upload")
        if cp_slots[-1] > task.deadline:
            violations.add("compute_after_deadline")
        sent = float(np.sum(schedule.bw[k] * cap[k, node] * instance.dt))
        if _short(sent, task.up):
            violations.add("upload_short")
        executed = float(np.sum(schedule.cpu[k]) * cpu_freq[node] * instance.dt)
        if _short(executed, task.req):
            violations.add("compute_short")

    for band in np.unique(band_of):
        if np.any(schedule.bw[band_of == band].sum(axis=0) > ceiling):
            violations.add("bandwidth_over_capacity")
    for j in range(j_count):
        on_node = schedule.mu == j
        if on_node.any() and np.any(schedule.cpu[on_node].sum(axis=0) > ceiling):
            violations.add("cpu_over_capacity")
    return sorted(violations)


def check_schedule(schedule: Schedule, instance: OffloadInstance) -> None:
    violations = validate_schedule(schedule, instance)
    if violations:
        raise ScheduleValidationError(violations)


def objective(schedule: Schedule, instance: OffloadInstance, validate: bool = True) -> float:
    """Sum of absolute completion slots, plus `punish` per unassigned task."""
    if validate:
        check_schedule(schedule, instance)
    total = 0.0
    for k in range(instance.n_tasks):
        comp_end = schedule.comp_end(k)
        if schedule.mu[k] < 0 or comp_end is None:
            total += instance.punish
        else:
            total += instance.start_slot + comp_end
    return total


def fill_task(
    instance: OffloadInstance,
    k: int,
    node: int,
    bw_free: np.ndarray,
    cpu_free: np.ndarray,
    cap: Optional[np.ndarray] = None,
    relay: Optional[np.ndarray] = None,
) -> Optional[Tuple[np.ndarray, np.ndarray]]:
    """Earliest-slot plan for one task on one node from the free resources.

    Uploads first, then computes from the slot after the upload (plus relay).
    Returns (bandwidth row, cpu row), or None when the task misses its deadline.
    """
    cap = instance.capacity_array() if cap is None else cap
    relay = instance.relay_array() if relay is None else relay
    _, band_of = instance.bands()
    task = instance.tasks[k]
    band = band_of[k]
    bw_row = np.zeros(instance.n_slots)
    cpu_row = np.zeros(instance.n_slots)
    last = min(task.deadline, instance.n_slots - 1)

    need = task.up
    tran_end = task.release - 1
    slot = task.release
    while need > 0 and slot <= last:
        rate = cap[k, node, slot] * instance.dt
        free = bw_free[band, slot]
        if rate > 0 and free > SHARE_EPSILON:
            share = min(free, need / rate)
            bw_row[slot] = share
            need = 0.0 if share * rate >= need * (1 - 1e-12) else need - share * rate
            tran_end = slot
        slot += 1
    if need > 0:
        return None

    need = task.req
    work = instance.nodes[node].cpu_freq * instance.dt
    slot = max(task.release, tran_end + 1 + int(relay[k, node]))
    while need > 0 and slot <= last:
        free = cpu_free[node, slot]
        if free > SHARE_EPSILON:
            share = min(free, need / work)
            cpu_row[slot] = share
            need = 0.0 if share * work >= need * (1 - 1e-12) else need - share * work
        slot += 1
    if need > 0:
        return None
    return bw_row, cpu_row


def free_resources(instance: OffloadInstance) -> Tuple[np.ndarray, np.ndarray]:
    names, _ = instance.bands()
    return np.ones((max(len(names), 1), instance.n_slots)), np.ones((instance.n_nodes, instance.n_slots))


def sequential_fill(
    instance: OffloadInstance,
    placements: Sequence[Tuple[int, int]],
    schedule: Optional[Schedule] = None,
) -> Schedule:
    """Place (task, node) pairs one after another on what the earlier ones left.

    Tasks that cannot finish in the window stay unassigned in the result.
    """
    result = schedule.copy() if schedule is not None else Schedule.empty(instance.n_tasks, instance.n_slots)
    bw_free, cpu_free = free_resources(instance)
    _, band_of = instance.bands()
    for k in range(instance.n_tasks):
        if result.mu[k] >= 0:
            bw_free[band_of[k]] -= result.bw[k]
            cpu_free[result.mu[k]] -= result.cpu[k]
    cap = instance.capacity_array()
    relay = instance.relay_array()
    for k, node in placements:
        plan = fill_task(instance, k, node, bw_free, cpu_free, cap, relay)
        if plan is None:
            continue
        result.mu[k] = node
        result.bw[k], result.cpu[k] = plan
        bw_free[band_of[k]] -= plan[0]
        cpu_free[node] -= plan[1]
    return result


def dump_instance(instance: OffloadInstance, path: Union[str, Path]) -> None:
    Path(path).write_text(
        yaml.safe_dump(instance.model_dump(mode="json"), sort_keys=False),
        encoding="utf-8",
    )


def load_instance(path: Union[str, Path]) -> OffloadInstance:
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except yaml.YAMLError as e:
        raise InvalidYAMLError(str(path)) from e
    try:
        return OffloadInstance(**(data or {}))
    except ValueError as e:
        raise InvalidConfigurationError(str(path), str(e)) from e


def schedule_summary(schedule: Schedule, instance: OffloadInstance) -> Dict[str, Optional[str]]:
    """Task id to node id (or None) for display."""
    return {
        task.task_id: (instance.nodes[int(node)].node_id if node >= 0 else None)
        for task, node in zip(instance.tasks, schedule.mu)
    }
