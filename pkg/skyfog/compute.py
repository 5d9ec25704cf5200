"""Tasks, fog-node queues, CPU sharing, delays, and energy accounting."""

import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

from skyfog.exceptions import ComputeError, UndefinedDelayError
from skyfog.models import ComputeConfig, FailureReason, TaskState

COMPLETION_TOLERANCE = 1e-9


class Task(BaseModel):
    """An offloadable computation and its progress."""

    id: str
    origin: int = Field(ge=0, description="Task vehicle that generated it")
    up: float = Field(ge=0, description="Upload size (bits)")
    req: float = Field(gt=0, description="CPU requirement (cycles)")
    deadline: float = Field(gt=0, description="Tolerable delay (s)")
    created_tti: int = Field(ge=0)
    assigned_node: Optional[int] = None
    assigned_tti: Optional[int] = None
    remaining_bits: float = Field(ge=0)
    remaining_cycles: float = Field(ge=0)
    state: TaskState = TaskState.PENDING
    failure_reason: Optional[FailureReason] = None
    tran_start: Optional[int] = None
    tran_end: Optional[int] = None
    relay_ready_tti: Optional[int] = None
    comp_start: Optional[int] = None
    comp_end: Optional[int] = None
    result_correct: Optional[bool] = None

    @property
    def terminal(self) -> bool:
        return self.state in (TaskState.DONE, TaskState.FAILED)

    def elapsed(self, tti: int, dt: float) -> float:
        """Time from creation to the end of TTI `tti`."""
        return (tti + 1 - self.created_tti) * dt

    def latency(self, dt: float) -> Optional[float]:
        if self.comp_end is None:
            return None
        return self.elapsed(self.comp_end, dt)


class TaskQueue(BaseModel):
    """FIFO of tasks committed to one fog node."""

    owner: int
    task_ids: List[str] = Field(default_factory=list)

    def add(self, task: Task) -> None:
        if task.assigned_node != self.owner:
            raise ComputeError(f"Task {task.id} is not assigned to node {self.owner}")
        if task.id not in self.task_ids:
            self.task_ids.append(task.id)

    def remove(self, task_id: str) -> None:
        if task_id in self.task_ids:
            self.task_ids.remove(task_id)

    def __len__(self) -> int:
        return len(self.task_ids)


class CpuShareMap(BaseModel):
    """CPU fractions one node gives its computing tasks during a TTI."""

    node: int
    shares: Dict[str, float] = Field(default_factory=dict)

    def validate_total(self) -> None:
        total = sum(self.shares.values())
        if total > 1.0 + 1e-9 or any(share < 0 for share in self.shares.values()):
            raise ComputeError(f"CPU shares on node {self.node} sum to {total}")


class EnergyMeter(BaseModel):
    """Cumulative joules spent by one node."""

    tx_joules: float = 0.0
    comp_joules: float = 0.0
    fly_joules: float = 0.0

    @property
    def total(self) -> float:
        return self.tx_joules + self.comp_joules + self.fly_joules


class ComputeStep(BaseModel):
    """What one node did in one TTI."""

    completed: List[str] = Field(default_factory=list)
    started: List[str] = Field(default_factory=list)
    cycles: float = 0.0


def draw_arrival_rate(config: ComputeConfig, rng: np.random.Generator) -> float:
    if config.lambda_override is not None:
        return config.lambda_override
    return float(rng.choice(config.lambda_types, p=config.lambda_probs))


def generate_tasks(
    origin: int,
    name: str,
    arrival_rate: float,
    rng: np.random.Generator,
    dt: float,
    tti: int,
    config: ComputeConfig,
) -> List[Task]:
    """Poisson(arrival_rate * dt) new tasks with uniformly drawn attributes."""
    count = int(rng.poisson(arrival_rate * dt))
    tasks = []
    for index in range(count):
        deadline = float(rng.uniform(*config.deadline_range))
        up = float(rng.uniform(*config.upload_range))
        req = float(rng.uniform(*config.cycles_range))
        tasks.append(
            Task(
                id=f"{name}-{tti}-{index}",
                origin=origin,
                up=up,
                req=req,
                deadline=deadline,
                created_tti=tti,
                remaining_bits=up,
                remaining_cycles=req,
            ),
        )
    return tasks


def compute_delay(req: float, epsilon: float, cpu_freq: float) -> float:
    """Seconds to run `req` cycles with a fixed CPU share."""
    if epsilon <= 0:
        raise UndefinedDelayError(epsilon)
    return req / (epsilon * cpu_freq)


def transmission_delay(up: float, rate: float) -> float:
    """Seconds to upload `up` bits at `rate` bits/s; unbounded at zero rate."""
    if up <= 0:
        return 0.0
    if rate <= 0:
        return math.inf
    return up / rate


def step_transmit(task: Task, rate: float, dt: float, tti: int) -> Task:
    """Push one TTI worth of bits; the task becomes queued once nothing is left."""
    if task.state is not TaskState.TRANSMITTING or rate <= 0:
        return task
    if task.tran_start is None:
        task.tran_start = tti
    sent = rate * dt
    if sent >= task.remaining_bits * (1.0 - COMPLETION_TOLERANCE):
        task.remaining_bits = 0.0
        task.tran_end = tti
        task.state = TaskState.QUEUED
    else:
        task.remaining_bits -= sent
    return task


def step_compute(
    cpu_freq: float,
    tasks: Sequence[Task],
    shares: CpuShareMap,
    dt: float,
    tti: int,
) -> ComputeStep:
    """Run one TTI of time-shared CPU over a node's eligible tasks."""
    shares.validate_total()
    step = ComputeStep()
    for task in tasks:
        share = shares.shares.get(task.id, 0.0)
        if share <= 0 or task.state not in (TaskState.QUEUED, TaskState.COMPUTING):
            continue
        if task.comp_start is None:
            task.comp_start = tti
            step.started.append(task.id)
        task.state = TaskState.COMPUTING
        work = share * cpu_freq * dt
        if work >= task.remaining_cycles * (1.0 - COMPLETION_TOLERANCE):
            step.cycles += task.remaining_cycles
            task.remaining_cycles = 0.0
            task.comp_end = tti
            task.state = TaskState.DONE
            step.completed.append(task.id)
        else:
            step.cycles += work
            task.remaining_cycles -= work
    return step


def enforce_deadlines(tasks: Sequence[Task], tti: int, dt: float) -> List[Tuple[Task, FailureReason]]:
    """Fail every live task that could no longer finish by the end of this TTI."""
    failed = []
    for task in tasks:
        if task.terminal:
            continue
        if task.elapsed(tti, dt) > task.deadline + COMPLETION_TOLERANCE:
            reason = FailureReason.UNASSIGNED if task.assigned_node is None else FailureReason.DEADLINE
            fail_task(task, reason)
            failed.append((task, reason))
    return failed


def fail_task(task: Task, reason: FailureReason) -> Task:
    task.state = TaskState.FAILED
    task.failure_reason = reason
    return task


def meter_energy(
    meter: EnergyMeter,
    tx_power_w: float = 0.0,
    tx_time: float = 0.0,
    cycles: float = 0.0,
    cpu_freq: float = 0.0,
    kappa: float = 0.0,
    hover_power: float = 0.0,
    fly_time: float = 0.0,
) -> EnergyMeter:
    """Add transmit, dynamic CPU (kappa * F^2 per cycle), and hover energy."""
    meter.tx_joules += tx_power_w * tx_time
    meter.comp_joules += kappa * cpu_freq**2 * cycles
    meter.fly_joules += hover_power * fly_time
    return meter
