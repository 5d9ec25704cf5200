"""Factory for creating offloading solvers."""

from typing import Union

from skyfog.exceptions import UnsupportedSolverError
from skyfog.models import OffloadConfig, SolverKind
from skyfog.solvers.base import OffloadSolverBase
from skyfog.solvers.greedy import GreedySolver
from skyfog.solvers.oracle import OracleSolver
from skyfog.solvers.who import WhoSolver


def create_solver(
    kind: Union[SolverKind, str],
    config: OffloadConfig,
) -> OffloadSolverBase:
    solvers = {
        SolverKind.GREEDY: GreedySolver,
        SolverKind.WHO: WhoSolver,
        SolverKind.ORACLE: OracleSolver,
    }
    try:
        kind = SolverKind(kind)
    except ValueError as e:
        raise UnsupportedSolverError(str(kind)) from e
    return solvers[kind](config)
