"""Utility functions for offloading solvers."""

from typing import Optional

import numpy as np

from skyfog.solvers.instance import InstanceNode, InstanceTask, OffloadInstance

CPU_CHOICES = (2.5e9, 5e9, 25e9)


def random_instance(
    rng: np.random.Generator,
    max_tasks: int = 3,
    max_nodes: int = 3,
    max_slots: int = 20,
    dt: float = 0.05,
    punish: float = 100.0,
    start_slot: Optional[int] = None,
) -> OffloadInstance:
    """Small random window with task and node figures from the default scenario.

    Uploads of 0.02-1 Mbit, 0.1-0.3 Gcycles, 0.2-1 s deadlines, vehicle/UAV/cloud
    CPUs, and 5-60 Mbit/s links that fade slot to slot.
    """
    n_tasks = int(rng.integers(1, max_tasks + 1))
    n_nodes = int(rng.integers(1, max_nodes + 1))
    n_slots = int(rng.integers(max(2, max_slots // 2), max_slots + 1))
    tasks = []
    for k in range(n_tasks):
        deadline_s = float(rng.uniform(0.2, 1.0))
        tasks.append(
            InstanceTask(
                task_id=f"task-{k}",
                up=float(rng.uniform(0.02e6, 1e6)),
                req=float(rng.uniform(0.1e9, 0.3e9)),
                deadline=min(n_slots, int(deadline_s / dt)) - 1,
            ),
        )
    nodes = [
        InstanceNode(node_id=f"node-{j}", cpu_freq=float(rng.choice(CPU_CHOICES)))
        for j in range(n_nodes)
    ]
    base = rng.uniform(5e6, 60e6, size=(n_tasks, n_nodes, 1))
    capacity = base * rng.uniform(0.5, 1.5, size=(n_tasks, n_nodes, n_slots))
    return OffloadInstance(
        start_slot=int(rng.integers(0, 20)) if start_slot is None else start_slot,
        n_slots=n_slots,
        dt=dt,
        punish=punish,
        tasks=tasks,
        nodes=nodes,
        capacity=capacity.tolist(),
    )
