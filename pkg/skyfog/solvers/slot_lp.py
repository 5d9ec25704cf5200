"""Time-sharing LP relaxation for one slot-allocation subproblem."""

import logging
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from scipy.optimize import linprog

from skyfog.exceptions import InfeasibleSubproblemError
from skyfog.solvers.instance import SHARE_EPSILON

logger = logging.getLogger(__name__)


@dataclass
class SlotSubproblem:
    """Shares of one resource kind (bandwidth or CPU) across tasks and slots.

    Attributes:
        demand: Work each task still needs (bits or cycles), shape (K,).
        rate: Work delivered per unit share in each slot, shape (K, T).
        allowed: Slots each task may use, shape (K, T).
        pools: Groups of tasks splitting one unit of the resource per slot.
        weights: Cost per slot of a unit of completed work; defaults to t + 1.
    """

    demand: np.ndarray
    rate: np.ndarray
    allowed: np.ndarray
    pools: List[List[int]]
    weights: Optional[np.ndarray] = None

    @property
    def shape(self) -> tuple:
        return self.rate.shape


def solve_slot_lp(subproblem: SlotSubproblem) -> np.ndarray:
    """Fractional shares minimizing weighted completion, rounded by earliest filling.

    Each task's share in a slot counts toward its demand at `rate`; the
    objective charges every unit of finished work the weight of the slot it
    lands in, so work is pulled as early as the pools allow.
    """
    k_count, t_count = subproblem.shape
    shares = np.zeros((k_count, t_count))
    demand = np.asarray(subproblem.demand, dtype=float)
    rate = np.asarray(subproblem.rate, dtype=float)
    usable = np.asarray(subproblem.allowed, dtype=bool) & (rate > 0) & (demand[:, None] > 0)
    variables = [(int(k), int(t)) for k, t in zip(*np.nonzero(usable))]
    if not variables:
        if np.any(demand > 0):
            raise InfeasibleSubproblemError("no usable slot for a task with work left")
        return shares

    weights = np.arange(1, t_count + 1, dtype=float) if subproblem.weights is None else subproblem.weights
    index = {pair: i for i, pair in enumerate(variables)}
    scaled = np.array([rate[k, t] / demand[k] for k, t in variables])
    cost = np.array([weights[t] for _, t in variables]) * scaled

    rows, bounds = [], []
    for pool in subproblem.pools:
        for t in range(t_count):
            members = [index[(k, t)] for k in pool if (k, t) in index]
            if len(members) > 1:
                row = np.zeros(len(variables))
                row[members] = 1.0
                rows.append(row)
                bounds.append(1.0)
    for k in np.flatnonzero(demand > 0):
        members = [index[(k, t)] for t in range(t_count) if (k, t) in index]
        if not members:
            raise InfeasibleSubproblemError(f"task {k} has no usable slot")
        row = np.zeros(len(variables))
        row[members] = -scaled[members]
        rows.append(row)
        bounds.append(-1.0)

    result = linprog(
        cost,
        A_ub=np.vstack(rows),
        b_ub=np.asarray(bounds),
        bounds=[(0.0, 1.0)] * len(variables),
        method="highs",
    )
    if result.status != 0:
        logger.debug("Slot LP failed: %s", result.message)
        raise InfeasibleSubproblemError(result.message)

    for (k, t), value in zip(variables, result.x):
        if value > SHARE_EPSILON:
            shares[k, t] = min(value, 1.0)
    return earliest_fill(shares, demand, rate)


def earliest_fill(shares: np.ndarray, demand: np.ndarray, rate: np.ndarray) -> np.ndarray:
    """Keep only the earliest shares that cover each task's demand."""
    filled = np.zeros_like(shares)
    for k in range(shares.shape[0]):
        need = demand[k]
        for t in np.flatnonzero(shares[k] > 0):
            if need <= 0:
                break
            take = min(shares[k, t], need / rate[k, t])
            filled[k, t] = take
            need = 0.0 if take * rate[k, t] >= need * (1 - 1e-12) else need - take * rate[k, t]
    return filled
