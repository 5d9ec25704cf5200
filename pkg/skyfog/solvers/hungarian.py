"""Kuhn-Munkres assignment with infeasible (infinite) entries."""

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

CostLike = Union[np.ndarray, Sequence[Sequence[float]]]


@dataclass
class Matching:
    """Row-to-column pairs of finite cost; other rows are unassigned."""

    pairs: List[Tuple[int, int]]
    total: float
    assignment: List[Optional[int]]

    @property
    def unassigned(self) -> List[int]:
        return [row for row, col in enumerate(self.assignment) if col is None]


def _shortest_augmenting_paths(cost: np.ndarray) -> np.ndarray:
    """Column index per row for an n x m matrix with n <= m, all entries finite."""
    n, m = cost.shape
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    p = np.zeros(m + 1, dtype=int)
    way = np.zeros(m + 1, dtype=int)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(m + 1, np.inf)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = np.flatnonzero(~used[1:]) + 1
            reduced = cost[i0 - 1, free - 1] - u[i0] - v[free]
            better = reduced < minv[free]
            minv[free[better]] = reduced[better]
            way[free[better]] = j0
            j1 = int(free[np.argmin(minv[free])])
            delta = minv[j1]
            u[p[used]] += delta
            v[used] -= delta
            minv[free] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    assignment = np.full(n, -1, dtype=int)
    for j in range(1, m + 1):
        if p[j]:
            assignment[p[j] - 1] = j - 1
    return assignment


def hungarian_solve(cost: CostLike) -> Matching:
    """Minimum-cost assignment of rows to columns.

    Infinite entries mark infeasible pairs. The matrix is padded to square
    with dummy columns, and infinite or dummy matches are reported as
    unassigned rows. Dummy rows of a wide matrix are implicit: they carry a
    constant cost, so the shortest augmenting path search over the real rows
    finds the same optimum. Ties resolve to the lowest column index.
    """
    matrix = np.asarray(cost, dtype=float)
    if matrix.ndim != 2:
        raise ValueError("cost matrix must be two-dimensional")
    n, m = matrix.shape
    if n == 0:
        return Matching(pairs=[], total=0.0, assignment=[])
    if np.any(matrix < 0):
        raise ValueError("cost entries must be non-negative or infinite")

    finite = np.isfinite(matrix)
    big = 2.0 * (float(matrix[finite].sum()) + 1.0)
    work = np.where(finite, matrix, big)
    if n > m:
        work = np.hstack([work, np.full((n, n - m), big)])

    columns = _shortest_augmenting_paths(work)
    pairs = []
    assignment: List[Optional[int]] = [None] * n
    total = 0.0
    for row, col in enumerate(columns):
        if col < m and finite[row, col]:
            pairs.append((row, int(col)))
            assignment[row] = int(col)
            total += float(matrix[row, col])
    return Matching(pairs=pairs, total=total, assignment=assignment)
