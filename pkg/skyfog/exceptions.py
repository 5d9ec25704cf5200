"""Custom exceptions for Skyfog."""

from typing import Any, Dict, List, Tuple


class SkyfogError(Exception):
    """Base exception for Skyfog."""

    def details(self) -> Dict[str, Any]:
        """Machine-readable view of the error for the CLI's stderr JSON."""
        payload: Dict[str, Any] = {
            "error": type(self).__name__,
            "message": str(self),
        }
        for key, value in vars(self).items():
            if not key.startswith("_"):
                payload[key] = value
        return payload


class ConfigurationError(SkyfogError):
    """Raised when there's a configuration error."""


class InvalidYAMLError(ConfigurationError):
    """Raised when a YAML document cannot be parsed."""

    def __init__(self, path: str):
        super().__init__(f"Invalid YAML in file: {path}")
        self.path = path


class InvalidConfigurationError(ConfigurationError):
    """Raised when configuration is invalid."""

    def __init__(self, path: str, reason: str = ""):
        message = f"Invalid configuration: {path}"
        if reason:
            message = f"{message} ({reason})"
        super().__init__(message)
        self.path = path
        self.reason = reason


class InvalidTimescaleError(ConfigurationError):
    """Raised when the mobility step is not a whole number of TTIs."""

    def __init__(self, tti: float, mobility_step: float):
        super().__init__(
            f"Mobility step {mobility_step} s is not an integer multiple of TTI {tti} s",
        )
        self.tti = tti
        self.mobility_step = mobility_step


class InvalidHorizonError(ConfigurationError):
    """Raised when the horizon is shorter than one TTI."""

    def __init__(self, horizon: float, tti: float):
        super().__init__(f"Horizon {horizon} s is shorter than one TTI ({tti} s)")
        self.horizon = horizon
        self.tti = tti


class InvalidProbabilityError(ConfigurationError):
    """Raised when arrival-rate probabilities do not form a distribution."""

    def __init__(self, probabilities: List[float]):
        super().__init__(f"Arrival-rate probabilities must match the rates and sum to 1: {probabilities}")
        self.probabilities = probabilities


class PositionOutOfBoundsError(ConfigurationError):
    """Raised when a fixed entity lies outside the simulated area."""

    def __init__(self, name: str, position: Tuple[float, float]):
        super().__init__(f"{name} at {position} lies outside the area")
        self.name = name
        self.position = position


class InvalidStakeError(ConfigurationError):
    """Raised when an RSU stake is negative or stakes do not match the RSUs."""

    def __init__(self, stakes: List[float]):
        super().__init__(f"Invalid RSU stakes: {stakes}")
        self.stakes = stakes


class UnknownPresetError(ConfigurationError):
    """Raised when a mission preset name is not recognised."""

    def __init__(self, name: str, missions: List[str], cases: List[str]):
        super().__init__(
            f"Unknown preset: {name}. Mission presets: {', '.join(missions)}; case presets: {', '.join(cases)}",
        )
        self.name = name
        self.missions = missions
        self.cases = cases


class UnconfiguredScenarioError(ConfigurationError):
    """Raised when a scenario lacks entities an operation needs."""

    def __init__(self, what: str):
        super().__init__(f"Scenario is not configured: {what}")
        self.what = what


class UnknownNodeError(ConfigurationError):
    """Raised when a node name does not exist in the scenario."""

    def __init__(self, name: str):
        super().__init__(f"Unknown node: {name}")
        self.name = name


class MobilityError(SkyfogError):
    """Raised when mobility processing fails."""


class UnknownLaneError(MobilityError):
    """Raised when a vehicle references a lane absent from the network."""

    def __init__(self, lane: Any):
        super().__init__(f"Lane not in road network: {lane}")
        self.lane = str(lane)


class TraceParseError(MobilityError):
    """Raised when a trace line is malformed."""

    def __init__(self, line_number: int, line: str):
        super().__init__(f"Malformed trace record at line {line_number}: {line!r}")
        self.line_number = line_number
        self.line = line


class TraceTimestampError(MobilityError):
    """Raised when trace timestamps are out of order or off the mobility grid."""

    def __init__(self, line_number: int, timestamp: float, reason: str):
        super().__init__(
            f"Bad trace timestamp {timestamp} at line {line_number}: {reason}",
        )
        self.line_number = line_number
        self.timestamp = timestamp
        self.reason = reason


class ChannelError(SkyfogError):
    """Raised when channel evaluation fails."""


class UnstableQueueError(ChannelError):
    """Raised when an M/M/1 queue has arrival rate at or above service rate."""

    def __init__(self, arrival_rate: float, service_rate: float):
        super().__init__(
            f"Unstable queue: arrival rate {arrival_rate} >= service rate {service_rate}",
        )
        self.arrival_rate = arrival_rate
        self.service_rate = service_rate


class ComputeError(SkyfogError):
    """Raised when computation accounting fails."""


class UndefinedDelayError(ComputeError):
    """Raised when a task gets no CPU share and its delay is undefined."""

    def __init__(self, epsilon: float):
        super().__init__(f"Computation delay undefined for CPU share {epsilon}")
        self.epsilon = epsilon


class OffloadError(SkyfogError):
    """Raised when an offloading decision cannot be made."""


class ScheduleValidationError(OffloadError):
    """Raised when a schedule violates offloading constraints."""

    def __init__(self, violations: List[str]):
        super().__init__(f"Schedule violates constraints: {', '.join(violations)}")
        self.violations = violations


class InfeasibleAssignmentError(OffloadError):
    """Raised when an assignment cannot be served even with relaxed slots."""

    def __init__(self, task_ids: List[str]):
        super().__init__(
            f"Assignment over-committed; reassign tasks: {', '.join(task_ids)}",
        )
        self.task_ids = task_ids


class InfeasibleSubproblemError(OffloadError):
    """Raised when a slot-allocation LP has no feasible point."""

    def __init__(self, status: str):
        super().__init__(f"Slot allocation LP infeasible: {status}")
        self.status = status


class InstanceTooLargeError(OffloadError):
    """Raised when an instance exceeds the exact oracle's guard."""

    def __init__(self, tasks: int, nodes: int, slots: int):
        super().__init__(
            f"Instance too large for exact oracle: {tasks} tasks, {nodes} nodes, {slots} slots",
        )
        self.tasks = tasks
        self.nodes = nodes
        self.slots = slots


class UnsupportedSolverError(OffloadError):
    """Raised when an offloading solver is not supported."""

    def __init__(self, solver: str):
        super().__init__(f"Unsupported solver: {solver}")
        self.solver = solver


class LedgerError(SkyfogError):
    """Raised when ledger processing fails."""


class NoEligibleValidatorError(LedgerError):
    """Raised when no RSU holds stake."""

    def __init__(self) -> None:
        super().__init__("No eligible validator: total stake is zero.")


class BlockRejectedError(LedgerError):
    """Raised when a forged block fails verification."""

    def __init__(self, height: int, reason: str):
        super().__init__(f"Block {height} rejected: {reason}")
        self.height = height
        self.reason = reason


class ReplicationError(SkyfogError):
    """Raised when one replication of a batch fails."""

    def __init__(self, seed: int, reason: str):
        super().__init__(f"Replication with seed {seed} failed: {reason}")
        self.seed = seed
        self.reason = reason
