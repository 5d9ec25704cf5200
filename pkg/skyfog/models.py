"""Data models for Skyfog."""

from enum import Enum
from typing import Any, Dict, List, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class NodeKind(str, Enum):
    """Kinds of fog entities."""

    TASK_VEHICLE = "task_vehicle"
    SERVING_VEHICLE = "serving_vehicle"
    UAV = "uav"
    RSU = "rsu"
    CLOUD = "cloud"


class LinkMode(str, Enum):
    """Wireless and wired link modes."""

    V2V = "V2V"
    V2I = "V2I"
    V2U = "V2U"
    U2V = "U2V"
    U2U = "U2U"
    U2I = "U2I"
    I2I = "I2I-wired"


class TaskState(str, Enum):
    """Lifecycle of an offloadable task."""

    PENDING = "pending"
    TRANSMITTING = "transmitting"
    QUEUED = "queued"
    COMPUTING = "computing"
    DONE = "done"
    FAILED = "failed"


class FailureReason(str, Enum):
    """Why a task failed."""

    DEADLINE = "deadline"
    ORPHANED = "orphaned"
    UNASSIGNED = "unassigned"


class SolverKind(str, Enum):
    """Supported offloading solvers."""

    GREEDY = "greedy"
    WHO = "who"
    ORACLE = "oracle"


class AttackKind(str, Enum):
    """Attacker behaviours."""

    IDENTITY_SPOOF = "identity_spoof"
    ALWAYS_ON = "always_on"
    ON_OFF = "on_off"


class RouteEndPolicy(str, Enum):
    """What a vehicle does when its route ends."""

    REDRAW = "redraw"
    DESPAWN = "despawn"


class SimulationConfig(BaseModel):
    """Clock, seed, and output location."""

    seed: int = Field(default=0, ge=0, description="Master seed for every RNG substream")
    horizon: float = Field(default=60.0, gt=0, description="Simulated seconds")
    tti: float = Field(default=0.05, gt=0, description="Transmission time interval (s)")
    mobility_step: float = Field(default=0.5, gt=0, description="Mobility step (s)")
    output_dir: str = Field(default="runs/default", description="Output directory")


class MobilityConfig(BaseModel):
    """Road network and vehicle motion."""

    width: float = Field(default=2000.0, gt=0, description="Area width (m)")
    height: float = Field(default=2000.0, gt=0, description="Area height (m)")
    grid_rows: int = Field(default=5, ge=2, description="Intersections per column")
    grid_cols: int = Field(default=5, ge=2, description="Intersections per row")
    speed_limit: float = Field(default=13.9, gt=0, description="Lane speed limit (m/s)")
    speed_min: float = Field(default=8.0, ge=0, description="Lowest vehicle speed (m/s)")
    speed_max: float = Field(default=14.0, ge=0, description="Highest vehicle speed (m/s)")
    route_end: RouteEndPolicy = Field(
        default=RouteEndPolicy.REDRAW,
        description="Redraw a random route or despawn at route end",
    )
    trace_file: Optional[str] = Field(
        default=None,
        description="Trace file overriding the built-in road model",
    )
    kmeans_max_iters: int = Field(default=20, ge=1, description="Lloyd iteration cap")
    kmeans_tol: float = Field(default=0.1, gt=0, description="Centre movement stop (m)")

    @model_validator(mode="after")
    def _speed_range(self) -> "MobilityConfig":
        if self.speed_min > self.speed_max:
            raise ValueError("speed_min must not exceed speed_max")
        return self


class FleetConfig(BaseModel):
    """Entity counts and placement."""

    task_vehicles: int = Field(default=50, ge=0, description="Task vehicles (TVs)")
    serving_vehicles: int = Field(default=50, ge=0, description="Serving vehicles (SVs)")
    uav_count: int = Field(default=4, ge=0, description="UAVs")
    uav_altitude: float = Field(default=100.0, ge=0, description="UAV altitude (m)")
    uav_v_max: float = Field(default=25.0, gt=0, description="Maximum UAV velocity (m/s)")
    rsu_positions: List[Tuple[float, float]] = Field(
        default_factory=lambda: [(500.0, 500.0), (1500.0, 1500.0)],
        description="RSU ground coordinates (m)",
    )
    cloud_enabled: bool = Field(default=True, description="Cloud reachable via RSUs")


class ComputeConfig(BaseModel):
    """CPU, coverage, task generation, and energy constants."""

    vehicle_cpu: float = Field(default=2.5e9, gt=0, description="Vehicle CPU (cycles/s)")
    uav_cpu: float = Field(default=5e9, gt=0, description="UAV CPU (cycles/s)")
    rsu_cpu: float = Field(default=5e9, gt=0, description="RSU CPU (cycles/s)")
    cloud_cpu: float = Field(default=25e9, gt=0, description="Cloud CPU (cycles/s)")
    uav_coverage: float = Field(default=300.0, gt=0, description="UAV coverage (m)")
    rsu_coverage: float = Field(default=500.0, gt=0, description="RSU coverage (m)")
    deadline_range: Tuple[float, float] = Field(
        default=(0.2, 1.0),
        description="Task deadline range (s)",
    )
    upload_range: Tuple[float, float] = Field(
        default=(0.02e6, 1.0e6),
        description="Task upload size range (bits)",
    )
    cycles_range: Tuple[float, float] = Field(
        default=(0.1e9, 0.3e9),
        description="Task CPU requirement range (cycles)",
    )
    lambda_types: List[float] = Field(
        default_factory=lambda: [2.0, 5.0, 10.0],
        description="Task arrival rates per TV (tasks/s)",
    )
    lambda_probs: List[float] = Field(
        default_factory=lambda: [0.6, 0.3, 0.1],
        description="Probability of each arrival rate",
    )
    lambda_override: Optional[float] = Field(
        default=None,
        ge=0,
        description="Force one arrival rate for every TV",
    )
    kappa: float = Field(default=1e-27, ge=0, description="Switched capacitance")
    hover_power: float = Field(default=100.0, ge=0, description="UAV hover power (W)")

    @field_validator("deadline_range", "upload_range", "cycles_range")
    @classmethod
    def _ordered(cls, value: Tuple[float, float]) -> Tuple[float, float]:
        if value[0] < 0 or value[0] > value[1]:
            raise ValueError("range must be non-negative and ordered")
        return value


class ModeChannelConfig(BaseModel):
    """Propagation parameters for one link mode."""

    A: float = Field(default=22.7, gt=0, description="Path loss exponent term")
    B: float = Field(default=41.0, description="Intercept (dB)")
    C: float = Field(default=20.0, gt=0, description="Frequency dependence")
    D: float = Field(default=5.0, gt=0, description="Frequency scaling (GHz)")
    fc: float = Field(default=2.0, gt=0, description="Carrier frequency (GHz)")
    sigma_db: float = Field(default=8.0, ge=0, description="Shadowing std (dB)")
    d_corr: float = Field(default=50.0, gt=0, description="Decorrelation distance (m)")
    tx_power_dbm: float = Field(default=26.0, description="Transmit power (dBm)")


def _default_modes() -> Dict[LinkMode, ModeChannelConfig]:
    modes = {
        mode: ModeChannelConfig()
        for mode in LinkMode
        if mode is not LinkMode.I2I
    }
    modes[LinkMode.V2V] = ModeChannelConfig(sigma_db=3.0, d_corr=10.0, tx_power_dbm=23.0)
    return modes


class WiredConfig(BaseModel):
    """M/M/1 wired hop between RSUs and the cloud."""

    rate_bits_s: float = Field(default=1e9, gt=0, description="Wire rate (bits/s)")
    service_rate: float = Field(default=100.0, gt=0, description="Messages/s served")
    background_rate: float = Field(default=50.0, ge=0, description="Messages/s offered")
    stochastic: bool = Field(default=True, description="Sample per-message delays")


class ChannelConfig(BaseModel):
    """Spectrum, noise, and per-mode propagation."""

    total_bandwidth: float = Field(default=20e6, gt=0, description="Total bandwidth (Hz)")
    rb_count: int = Field(default=20, ge=1, description="Resource blocks")
    noise_dbm: float = Field(default=-104.0, description="Noise power per RB (dBm)")
    d_min: float = Field(default=1.0, gt=0, description="Distance clamp (m)")
    modes: Dict[LinkMode, ModeChannelConfig] = Field(
        default_factory=_default_modes,
        description="Propagation parameters per link mode",
    )
    wired: WiredConfig = Field(default_factory=WiredConfig, description="Wired hop")

    @property
    def rb_bandwidth(self) -> float:
        """Bandwidth of one resource block (Hz)."""
        return self.total_bandwidth / self.rb_count


class OffloadConfig(BaseModel):
    """Offloading solver selection and tuning."""

    solver: SolverKind = Field(default=SolverKind.WHO, description="Offloading solver")
    window: int = Field(default=10, ge=1, description="Window length ws (TTIs)")
    punish: Optional[float] = Field(
        default=None,
        ge=0,
        description="Penalty per unassigned task (slots); default 10x horizon",
    )
    ao_tol: float = Field(default=1e-6, gt=0, description="AO indicator-change tolerance")
    ao_max_iters: int = Field(default=20, ge=1, description="AO iteration cap")
    seats_per_node: int = Field(default=4, ge=1, description="Hungarian seats per node")
    replan_every: int = Field(default=1, ge=1, description="TTIs between replans")


class LedgerConfig(BaseModel):
    """Proof-of-stake ledger and reputation."""

    block_interval: float = Field(default=1.0, gt=0, description="Seconds between blocks")
    block_max_tx: int = Field(default=100, ge=1, description="Transactions per block")
    block_reward: float = Field(default=1.0, ge=0, description="Minted per block")
    fee_rate: float = Field(default=0.01, ge=0, description="Fee as share of amount")
    price_per_gigacycle: float = Field(default=1.0, ge=0, description="Tokens per Gcycle")
    rsu_stakes: List[float] = Field(
        default_factory=lambda: [100.0, 100.0],
        description="Stake per RSU (same order as rsu_positions)",
    )
    initial_balance: float = Field(default=1000.0, ge=0, description="Tokens per vehicle")
    p_audit: float = Field(default=0.2, ge=0, le=1, description="Audit probability")
    blacklist_threshold: float = Field(default=0.3, ge=0, le=1, description="theta")
    spoof_attempt_rate: float = Field(
        default=1.0,
        ge=0,
        description="Forged transactions per second per spoofer",
    )


class AttackerProfile(BaseModel):
    """A malicious node and its behaviour."""

    node: str = Field(description="Node name, e.g. sv-0")
    kind: AttackKind = Field(description="Attack behaviour")
    on_period: float = Field(default=5.0, description="Correct-result period (s)")
    off_period: float = Field(default=5.0, description="False-result period (s)")

    @model_validator(mode="after")
    def _periods(self) -> "AttackerProfile":
        if self.kind is AttackKind.ON_OFF and (self.on_period <= 0 or self.off_period <= 0):
            raise ValueError("on_period and off_period must be positive for on_off")
        return self


class OutputConfig(BaseModel):
    """Configuration for output options."""

    verbose: bool = Field(default=True, description="Enable verbose output")
    plots: bool = Field(default=False, description="Write SVG plots")
    dump_links: bool = Field(default=False, description="Write per-TTI link table")


class SweepConfig(BaseModel):
    """One parameter varied across otherwise identical runs."""

    parameter: str = Field(description="Dotted field path, e.g. fleet.uav_count")
    values: List[Union[int, float, str]] = Field(min_length=1, description="Values to run")


class ScenarioConfig(BaseModel):
    """Main configuration for a Skyfog scenario."""

    model_config = ConfigDict(extra="forbid", validate_assignment=True)

    name: str = Field(default="default", description="Scenario label")
    description: str = Field(default="", description="What the scenario exercises")
    sweep: Optional[SweepConfig] = Field(default=None, description="Parameter sweep")
    simulation: SimulationConfig = Field(default_factory=SimulationConfig)
    mobility: MobilityConfig = Field(default_factory=MobilityConfig)
    fleet: FleetConfig = Field(default_factory=FleetConfig)
    compute: ComputeConfig = Field(default_factory=ComputeConfig)
    channel: ChannelConfig = Field(default_factory=ChannelConfig)
    offload: OffloadConfig = Field(default_factory=OffloadConfig)
    ledger: LedgerConfig = Field(default_factory=LedgerConfig)
    attacks: List[AttackerProfile] = Field(default_factory=list)
    output: OutputConfig = Field(default_factory=OutputConfig)

    @property
    def punish(self) -> float:
        """Penalty per unassigned task, in slot units."""
        if self.offload.punish is not None:
            return self.offload.punish
        return 10.0 * round(self.simulation.horizon / self.simulation.tti)


class Event(BaseModel):
    """One record of the events JSON-lines stream."""

    tti: int = Field(description="TTI index")
    time: float = Field(description="Simulated seconds")
    kind: str = Field(description="Event type")
    data: Dict[str, Any] = Field(default_factory=dict, description="Event payload")


class MetricsRow(BaseModel):
    """Per-TTI metrics series entry."""

    tti: int
    time: float
    active: int
    generated: int
    completed: int
    failed: int
    completions: int
    failures: int
    tx_count: int
    blocks: int
    energy_tx: float
    energy_comp: float
    energy_fly: float
    mean_latency: Optional[float]
    success_ratio: float


class SolverStats(BaseModel):
    """Deterministic per-run solver statistics."""

    windows: int = 0
    assigned: int = 0
    mean_iterations: Optional[float] = None
    mean_objective: Optional[float] = None
    oracle_fallbacks: int = 0


class RunSummary(BaseModel):
    """Final summary of one run; the schema is identical for every scenario."""

    scenario: str
    seed: int
    solver: SolverKind
    horizon: float
    ttis: int
    generated: int
    completed: int
    failed: int
    in_flight: int
    success_ratio: float
    no_tasks: bool
    mean_latency: Optional[float]
    failures_by_reason: Dict[str, int]
    tx_certified: int
    tx_per_second: Optional[float]
    completions_per_second: Optional[float]
    blocks: int
    max_block_size: int
    attacks_detected: int
    payments_withheld: int
    energy_tx: float
    energy_comp: float
    energy_fly: float
    kmeans_runs: int
    kmeans_local_optima: int
    solver_stats: SolverStats


class RunMetrics(BaseModel):
    """Series plus summary for one run."""

    series: List[MetricsRow] = Field(default_factory=list)
    summary: RunSummary


class AggregateStats(BaseModel):
    """Mean and spread of one metric over replications."""

    mean: Optional[float]
    std: Optional[float]


class ReplicationResult(BaseModel):
    """Aggregated statistics over several seeds."""

    seeds: List[int]
    metrics: Dict[str, AggregateStats]
    summaries: List[RunSummary]
