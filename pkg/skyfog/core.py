"""Core Skyfog functionality: the world and its per-TTI phases."""

import hashlib
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import yaml
from pydantic import BaseModel, Field

from skyfog.channel import ChannelModel, LinkState, allocate_rbs, dbm_to_watts, evaluate_links, wired_delay
from skyfog.compute import (
    CpuShareMap,
    EnergyMeter,
    Task,
    TaskQueue,
    draw_arrival_rate,
    enforce_deadlines,
    fail_task,
    generate_tasks,
    meter_energy,
    step_compute,
    step_transmit,
)
from skyfog.entities import Node, Position, RngStreams, SimClock, distance_3d
from skyfog.exceptions import (
    BlockRejectedError,
    InvalidConfigurationError,
    InvalidYAMLError,
    NoEligibleValidatorError,
    UnknownNodeError,
)
from skyfog.ledger import (
    Chain,
    ReputationLedger,
    Transaction,
    TransactionPool,
    apply_attack,
    audit_and_update_reputation,
    credential_digest,
    maybe_forge_block,
    reward_validator,
    settle_block,
    submit_transaction,
    verify_block,
)
from skyfog.mobility import (
    RoadNetwork,
    UavMotion,
    VehicleMotion,
    VehicleTrace,
    assign_service_zone,
    load_trace,
    move_uav_toward,
    plan_uav_kmeans,
    spawn_vehicle,
    step_vehicles,
    vehicle_position,
)
from skyfog.models import (
    AttackerProfile,
    AttackKind,
    Event,
    FailureReason,
    LinkMode,
    MetricsRow,
    NodeKind,
    RunSummary,
    ScenarioConfig,
    SolverStats,
    TaskState,
)
from skyfog.solvers import InstanceNode, InstanceTask, OffloadInstance, create_solver, objective

logger = logging.getLogger(__name__)

COLUMN_MODES = {
    NodeKind.SERVING_VEHICLE: LinkMode.V2V,
    NodeKind.UAV: LinkMode.V2U,
    NodeKind.RSU: LinkMode.V2I,
}


class WorldCounters(BaseModel):
    """Cumulative run counters."""

    generated: int = 0
    completed: int = 0
    failed: int = 0
    failures_by_reason: Dict[str, int] = Field(
        default_factory=lambda: {reason.value: 0 for reason in FailureReason},
    )
    latency_sum: float = 0.0
    tx_certified: int = 0
    blocks: int = 0
    max_block_size: int = 0
    attacks_detected: int = 0
    payments_withheld: int = 0
    kmeans_runs: int = 0
    kmeans_local_optima: int = 0
    windows: int = 0
    assigned: int = 0
    iterations_sum: int = 0
    objective_sum: float = 0.0
    oracle_fallbacks: int = 0


def _clean(value: float) -> float:
    """Round away float noise so event payloads serialize identically."""
    return round(float(value), 9)


def relay_slots(delay: float, dt: float) -> int:
    """Whole slots a wired hop of `delay` seconds occupies."""
    return max(0, int(math.ceil(delay / dt - 1e-9)))


def fill_leftover(shares: Dict[str, float]) -> Dict[str, float]:
    """Split what a pool's plan leaves unused equally among the tasks it left out.

    Shares summing above one are scaled back first. Returns positive shares only.
    """
    shares = dict(shares)
    total = sum(shares.values())
    if total > 1.0:
        shares = {key: value / total for key, value in shares.items()}
        total = 1.0
    uncovered = [key for key, value in shares.items() if value <= 0]
    if uncovered and total < 1.0 - 1e-12:
        extra = (1.0 - total) / len(uncovered)
        for key in uncovered:
            shares[key] = extra
    return {key: value for key, value in shares.items() if value > 0}


class World:
    """Every entity of one scenario plus the clock, RNG streams, and ledger."""

    def __init__(self, config: ScenarioConfig):
        """Build the fleet and initial state.

        Args:
            config: A validated scenario configuration.
        """
        self.config = config
        sim = config.simulation
        self.dt = sim.tti
        self.clock = SimClock(tti_duration=sim.tti, mobility_step=sim.mobility_step, horizon=sim.horizon)
        self.rng = RngStreams(sim.seed)
        self.counters = WorldCounters()
        self.series: List[MetricsRow] = []
        self.solver_log: List[Dict[str, Any]] = []
        self.link_rows: List[Dict[str, Any]] = []
        self._events: List[Event] = []

        self.trace: Optional[VehicleTrace] = None
        self.trace_keys: List[str] = []
        if config.mobility.trace_file:
            self.trace = load_trace(config.mobility.trace_file, sim.mobility_step)
        self.network = RoadNetwork.grid(config.mobility)

        self.nodes: List[Node] = []
        self._build_nodes()
        self.by_name = {node.name: node.id for node in self.nodes}
        self.column_ids = self.sv_ids + self.uav_ids + self.rsu_ids
        self.row_of = {tv: row for row, tv in enumerate(self.tv_ids)}
        self.column_of = {node: col for col, node in enumerate(self.column_ids)}
        self.channel = ChannelModel(
            config.channel,
            [COLUMN_MODES[self.nodes[node].kind] for node in self.column_ids],
            len(self.tv_ids),
            self.rng["channel"],
        )
        self._gain = np.zeros(self.channel.shape)

        self.active: Dict[int, bool] = {vid: self.trace is None for vid in self.vehicle_ids}
        self.motions: Dict[int, VehicleMotion] = {}
        if self.trace is None:
            for vid in self.vehicle_ids:
                self.motions[vid] = spawn_vehicle(self.network, self.rng["mobility"], config.mobility)
                self._place(vid, vehicle_position(self.network, self.motions[vid]))
        self.uav_motions: Dict[int, UavMotion] = {
            uid: UavMotion(position=self.nodes[uid].position, v_max=config.fleet.uav_v_max)
            for uid in self.uav_ids
        }
        self.zones: Dict[int, int] = {}
        self.arrival_rates = {tv: draw_arrival_rate(config.compute, self.rng["tasks"]) for tv in self.tv_ids}

        self.attackers: Dict[int, AttackerProfile] = {}
        for profile in config.attacks:
            if profile.node not in self.by_name:
                raise UnknownNodeError(profile.node)
            self.attackers[self.by_name[profile.node]] = profile

        self.tasks: Dict[str, Task] = {}
        self.queues: Dict[int, TaskQueue] = {node.id: TaskQueue(owner=node.id) for node in self.nodes if node.accepts_tasks}
        self.uplink_rx: Dict[str, int] = {}
        self.energy: Dict[int, EnergyMeter] = {node.id: EnergyMeter() for node in self.nodes}
        self.solver = create_solver(config.offload.solver, config.offload)
        self._plan_start = -1
        self._plan_bw: List[Dict[str, float]] = []
        self._plan_cpu: List[Dict[str, float]] = []
        self._finished: List[Task] = []

        self.credentials = {
            vid: hashlib.sha256(f"{sim.seed}:{self.nodes[vid].name}".encode("utf-8")).hexdigest()
            for vid in self.vehicle_ids
        }
        self.registry = {vid: credential_digest(secret) for vid, secret in self.credentials.items()}
        self.pool = TransactionPool()
        self.chain = Chain()
        self.balances: Dict[int, float] = {node.id: 0.0 for node in self.nodes}
        for vid in self.vehicle_ids:
            self.balances[vid] = config.ledger.initial_balance
        self.reputation = ReputationLedger(threshold=config.ledger.blacklist_threshold)
        self.blacklisted: List[int] = []
        self.last_block_tti = 0
        self._ledger_stalled = False

    def _build_nodes(self) -> None:
        config = self.config
        fleet, compute, modes = config.fleet, config.compute, config.channel.modes
        n_tv, n_sv = fleet.task_vehicles, fleet.serving_vehicles
        if self.trace is not None:
            ids = self.trace.vehicle_ids
            n_tv = min(n_tv, len(ids))
            n_sv = min(n_sv, len(ids) - n_tv)
            self.trace_keys = ids[: n_tv + n_sv]

        def add(kind: NodeKind, name: str, **fields: Any) -> int:
            self.nodes.append(Node(id=len(self.nodes), name=name, kind=kind, **fields))
            return len(self.nodes) - 1

        vehicle_power = {mode: modes[mode].tx_power_dbm for mode in (LinkMode.V2V, LinkMode.V2U, LinkMode.V2I)}
        uav_power = {mode: modes[mode].tx_power_dbm for mode in (LinkMode.U2V, LinkMode.U2U, LinkMode.U2I)}
        centre = (config.mobility.width / 2.0, config.mobility.height / 2.0, fleet.uav_altitude)
        self.tv_ids = [
            add(NodeKind.TASK_VEHICLE, f"tv-{i}", cpu_freq=compute.vehicle_cpu, tx_power=vehicle_power)
            for i in range(n_tv)
        ]
        self.sv_ids = [
            add(NodeKind.SERVING_VEHICLE, f"sv-{i}", cpu_freq=compute.vehicle_cpu, tx_power=vehicle_power)
            for i in range(n_sv)
        ]
        self.uav_ids = [
            add(
                NodeKind.UAV,
                f"uav-{i}",
                position=centre,
                cpu_freq=compute.uav_cpu,
                tx_power=uav_power,
                coverage_radius=compute.uav_coverage,
            )
            for i in range(fleet.uav_count)
        ]
        stakes = config.ledger.rsu_stakes
        self.rsu_ids = [
            add(
                NodeKind.RSU,
                f"rsu-{i}",
                position=(float(x), float(y), 0.0),
                cpu_freq=compute.rsu_cpu,
                coverage_radius=compute.rsu_coverage,
                stake=stakes[i] if i < len(stakes) else 0.0,
            )
            for i, (x, y) in enumerate(fleet.rsu_positions)
        ]
        self.cloud_id: Optional[int] = None
        if fleet.cloud_enabled:
            self.cloud_id = add(NodeKind.CLOUD, "cloud", cpu_freq=compute.cloud_cpu)
        self.vehicle_ids = self.tv_ids + self.sv_ids

    def _place(self, node_id: int, position: Position) -> None:
        self.nodes[node_id].position = (float(position[0]), float(position[1]), float(position[2]))

    def _emit(self, kind: str, **data: Any) -> None:
        self._events.append(Event(tti=self.clock.tti_index, time=_clean(self.clock.time), kind=kind, data=data))

    def name(self, node_id: Optional[int]) -> Optional[str]:
        return None if node_id is None else self.nodes[node_id].name

    def advance_tti(self) -> List[Event]:
        """Run one TTI through all eight phases and return its events in order."""
        self._events = []
        self._finished = []
        self._tti_completions = 0
        self._tti_failures = 0
        self._tti_certified = 0

        self._mobility_phase()
        self._channel_phase()
        self._generation_phase()
        bw, cpu = self._scheduling_phase()
        self._transmission_phase(bw)
        self._computation_phase(cpu)
        self._ledger_phase()
        self._metrics_phase()

        self.clock.advance()
        return self._events

    def run(self) -> List[Event]:
        """Advance to the horizon, returning every event."""
        events: List[Event] = []
        while not self.clock.finished:
            events.extend(self.advance_tti())
        return events

    def _mobility_phase(self) -> None:
        if not self.clock.is_mobility_tti:
            return
        step = self.config.simulation.mobility_step
        before = {nid: self.nodes[nid].position for nid in self.vehicle_ids + self.uav_ids}
        was_active = dict(self.active)

        if self.trace is not None:
            frame = self.trace.positions_at(self.clock.mobility_index)
            for vid, key in zip(self.vehicle_ids, self.trace_keys):
                self.active[vid] = key in frame
                if key in frame:
                    self._place(vid, frame[key])
        elif self.clock.tti_index > 0 and self.vehicle_ids:
            moved = step_vehicles(
                self.network,
                [self.motions[vid] for vid in self.vehicle_ids],
                step,
                self.rng["mobility"],
                self.config.mobility.route_end,
            )
            for vid, motion in zip(self.vehicle_ids, moved):
                self.motions[vid] = motion
                self.active[vid] = motion.active
                self._place(vid, vehicle_position(self.network, motion))

        for vid in self.vehicle_ids:
            if was_active[vid] and not self.active[vid] and self.clock.tti_index > 0:
                self._emit("vehicle_departed", vehicle=self.name(vid))
                self._orphan_tasks(vid)

        self._move_uavs(step)

        managers = [(nid, self.nodes[nid].position) for nid in self.uav_ids + self.rsu_ids]
        self.zones = {}
        if managers:
            for vid in self.vehicle_ids:
                if self.active[vid]:
                    self.zones[vid] = assign_service_zone(self.nodes[vid].position, managers)

        if self.channel.path_loss.size:
            rows = np.array([self.nodes[tv].position for tv in self.tv_ids], dtype=float)
            cols = np.array([self.nodes[nid].position for nid in self.column_ids], dtype=float)
            row_moved = column_moved = None
            if self.clock.tti_index > 0:
                row_moved = np.array([distance_3d(before[tv], self.nodes[tv].position) for tv in self.tv_ids])
                column_moved = np.array(
                    [
                        distance_3d(before[nid], self.nodes[nid].position) if nid in before else 0.0
                        for nid in self.column_ids
                    ],
                )
            self.channel.update_geometry(rows, cols, self.rng["channel"], row_moved, column_moved)

    def _move_uavs(self, step: float) -> None:
        if not self.uav_ids:
            return
        points = [self.nodes[tv].position[:2] for tv in self.tv_ids if self.active[tv]]
        previous = np.array(
            [motion.target or motion.position[:2] for motion in self.uav_motions.values()],
            dtype=float,
        )
        mobility = self.config.mobility
        result = plan_uav_kmeans(
            points,
            len(self.uav_ids),
            self.rng["mobility"],
            previous=previous,
            max_iters=mobility.kmeans_max_iters,
            tol=mobility.kmeans_tol,
        )
        if result is not None:
            if result.iterations > 0:
                self.counters.kmeans_runs += 1
                if result.local_optimum:
                    self.counters.kmeans_local_optima += 1
            if result.duplicate_centers:
                self._emit("kmeans_duplicate_centers", uavs=len(self.uav_ids), vehicles=len(points))
            for uid, centre in zip(self.uav_ids, result.centers):
                motion = self.uav_motions[uid]
                motion.target = (float(centre[0]), float(centre[1]))
        for uid in self.uav_ids:
            self.uav_motions[uid] = move_uav_toward(self.uav_motions[uid], step)
            self._place(uid, self.uav_motions[uid].position)

    def _channel_phase(self) -> None:
        if self.channel.fading.size:
            self.channel.refresh_fast_fading(self.rng["channel"])
        self._gain = self.channel.gain()

    def _generation_phase(self) -> None:
        t = self.clock.tti_index
        for tv in self.tv_ids:
            if not self.active[tv]:
                continue
            for task in generate_tasks(
                tv,
                self.nodes[tv].name,
                self.arrival_rates[tv],
                self.rng["tasks"],
                self.dt,
                t,
                self.config.compute,
            ):
                self.tasks[task.id] = task
                self.counters.generated += 1
                self._emit(
                    "task_created",
                    task=task.id,
                    origin=self.name(tv),
                    up=_clean(task.up),
                    req=_clean(task.req),
                    deadline=_clean(task.deadline),
                )

    def _scheduling_phase(self) -> Tuple[Dict[str, float], Dict[str, float]]:
        t = self.clock.tti_index
        for task, reason in enforce_deadlines(list(self.tasks.values()), t, self.dt):
            self._retire_failed(task, reason)
        if t % self.config.offload.replan_every == 0:
            self._replan()
        offset = t - self._plan_start
        if self._plan_start < 0 or not 0 <= offset < len(self._plan_bw):
            return {}, {}
        return self._plan_bw[offset], self._plan_cpu[offset]

    def _candidates(self, origin: int) -> List[int]:
        """Fog nodes a task vehicle may offload to, blacklisted ones removed."""
        zone = self.zones.get(origin)
        if zone is None or not self.active[origin]:
            return []
        candidates = [sv for sv in self.sv_ids if self.active[sv] and self.zones.get(sv) == zone]
        manager = self.nodes[zone]
        if distance_3d(self.nodes[origin].position, manager.position) <= manager.coverage_radius:
            candidates.append(zone)
            if manager.kind is NodeKind.RSU and self.cloud_id is not None:
                candidates.append(self.cloud_id)
        return [node for node in candidates if not self.reputation.is_blacklisted(node)]

    def _uplink_target(self, origin: int, node: int) -> Optional[int]:
        if node == self.cloud_id:
            return self.zones.get(origin)
        return node

    def _uplink_rate(self, task: Task, node: int, rates: np.ndarray) -> float:
        origin = task.origin
        rx = self.uplink_rx.get(task.id) if task.assigned_node is not None else self._uplink_target(origin, node)
        if rx is None or rx not in self.column_of or origin not in self.row_of:
            return 0.0
        return float(rates[self.row_of[origin], self.column_of[rx]])

    def _wired_slots(self, task: Task, stochastic: bool = False) -> int:
        wired = self.config.channel.wired
        delay = wired_delay(
            wired.background_rate,
            wired.service_rate,
            task.up,
            wired.rate_bits_s,
            self.rng["channel"] if stochastic and wired.stochastic else None,
        )
        return relay_slots(delay, self.dt)

    def build_instance(self) -> Tuple[Optional[OffloadInstance], List[int]]:
        """The current planning window over every live task that has a node to go to.

        Returns:
            The instance (None when no task can be placed) and the node id of
            each instance node index.
        """
        t = self.clock.tti_index
        ws = self.config.offload.window
        entries = []
        for task in self.tasks.values():
            if task.assigned_node is not None:
                entries.append((task, [task.assigned_node]))
            else:
                candidates = self._candidates(task.origin)
                if candidates:
                    entries.append((task, candidates))
        if not entries:
            return None, []

        node_ids = sorted({node for _, candidates in entries for node in candidates})
        index = {node: j for j, node in enumerate(node_ids)}
        rates = self.channel.full_band_capacity() if self.channel.path_loss.size else np.zeros((0, 0))
        tasks, capacity, relay = [], [], []
        for task, candidates in entries:
            last = math.floor(task.deadline / self.dt + task.created_tti - t - 1 + 1e-9)
            uploaded = task.state in (TaskState.QUEUED, TaskState.COMPUTING)
            tasks.append(
                InstanceTask(
                    task_id=task.id,
                    up=0.0 if uploaded else task.remaining_bits,
                    req=task.remaining_cycles,
                    created_slot=task.created_tti,
                    deadline=min(last, ws - 1),
                    band=str(self.zones.get(task.origin, -1)),
                    fixed_node=None if task.assigned_node is None else index[task.assigned_node],
                    candidates=[index[node] for node in candidates],
                ),
            )
            row_capacity, row_relay = [], []
            for node in node_ids:
                rate = self._uplink_rate(task, node, rates) if node in candidates else 0.0
                row_capacity.append([rate] * ws)
                if uploaded:
                    row_relay.append(max(0, (task.relay_ready_tti or t) - t))
                elif node == self.cloud_id:
                    row_relay.append(self._wired_slots(task))
                else:
                    row_relay.append(0)
            capacity.append(row_capacity)
            relay.append(row_relay)

        instance = OffloadInstance(
            start_slot=t,
            n_slots=ws,
            dt=self.dt,
            punish=self.config.punish,
            tasks=tasks,
            nodes=[InstanceNode(node_id=self.nodes[node].name, cpu_freq=self.nodes[node].cpu_freq) for node in node_ids],
            capacity=capacity,
            relay=relay,
        )
        return instance, node_ids

    def _replan(self) -> None:
        t = self.clock.tti_index
        instance, node_ids = self.build_instance()
        self._plan_start = t
        self._plan_bw, self._plan_cpu = [], []
        if instance is None:
            return

        schedule = self.solver.plan(instance)
        decisions = self.solver.act_offloading()
        value = objective(schedule, instance, validate=False)
        self.counters.windows += 1
        self.counters.assigned += len(decisions)
        self.counters.iterations_sum += schedule.iterations
        self.counters.objective_sum += value
        self.solver_log.append(
            {
                "tti": t,
                "solver": self.solver.kind.value,
                "tasks": instance.n_tasks,
                "nodes": instance.n_nodes,
                "assigned": len(decisions),
                "iterations": schedule.iterations,
                "objective": value,
                "wall_time": self.solver.last_wall_time,
                "fell_back": self.solver.fell_back,
            },
        )
        if self.solver.fell_back:
            self.counters.oracle_fallbacks += 1
            self._emit("oracle_fallback", tasks=instance.n_tasks, nodes=instance.n_nodes, slots=instance.n_slots)
        self._emit(
            "window_planned",
            solver=self.solver.kind.value,
            tasks=instance.n_tasks,
            nodes=instance.n_nodes,
            assigned=len(decisions),
            iterations=schedule.iterations,
            objective=_clean(value),
        )
        for task_id, j in decisions.items():
            self._commit(self.tasks[task_id], node_ids[j])
        self._plan_bw = [self.solver.act_rb_allocation(slot) for slot in range(instance.n_slots)]
        self._plan_cpu = [self.solver.act_cpu_allocation(slot) for slot in range(instance.n_slots)]

    def _commit(self, task: Task, node: int) -> None:
        t = self.clock.tti_index
        task.assigned_node = node
        task.assigned_tti = t
        self.uplink_rx[task.id] = self._uplink_target(task.origin, node)
        self.queues[node].add(task)
        if task.remaining_bits <= 0:
            task.state = TaskState.QUEUED
            task.tran_end = t - 1
            task.relay_ready_tti = t + (self._wired_slots(task, stochastic=True) if node == self.cloud_id else 0)
        else:
            task.state = TaskState.TRANSMITTING
        self._emit("task_assigned", task=task.id, node=self.name(node))

    def _cross_gain(self, tx: int, rx: int) -> float:
        return float(self._gain[self.row_of[tx], self.column_of[rx]])

    def _transmission_phase(self, bw: Dict[str, float]) -> None:
        t = self.clock.tti_index
        bands: Dict[int, List[Task]] = {}
        for task in self.tasks.values():
            if task.state is TaskState.TRANSMITTING and task.origin in self.zones:
                bands.setdefault(self.zones[task.origin], []).append(task)

        channel = self.config.channel
        links: List[Tuple[Task, LinkState]] = []
        for band in sorted(bands):
            members = bands[band]
            shares = fill_leftover({task.id: bw.get(task.id, 0.0) for task in members})
            rb_sets = allocate_rbs(shares, channel.total_bandwidth, channel.rb_count).rb_sets()
            for task in members:
                rx = self.uplink_rx.get(task.id)
                if task.id not in rb_sets or rx not in self.column_of:
                    continue
                link = self.channel.link_state(
                    self.row_of[task.origin],
                    self.column_of[rx],
                    task.origin,
                    rx,
                    rb_sets[task.id],
                    band,
                )
                links.append((task, link))
        evaluate_links([link for _, link in links], channel.noise_dbm, channel.rb_bandwidth, self._cross_gain)

        for task, link in links:
            started = task.tran_start is None
            step_transmit(task, link.capacity, self.dt, t)
            meter_energy(self.energy[task.origin], tx_power_w=float(dbm_to_watts(link.tx_power_dbm)), tx_time=self.dt)
            if started and task.tran_start is not None:
                self._emit("transmission_started", task=task.id, node=self.name(task.assigned_node))
            if task.state is TaskState.QUEUED:
                relay = self._wired_slots(task, stochastic=True) if task.assigned_node == self.cloud_id else 0
                task.relay_ready_tti = t + 1 + relay
                self._emit("transmission_completed", task=task.id, node=self.name(task.assigned_node), relay_slots=relay)
            if self.config.output.dump_links:
                self.link_rows.append(
                    {
                        "tti": t,
                        "tx": self.name(link.tx),
                        "rx": self.name(link.rx),
                        "mode": link.mode.value,
                        "pl_db": link.path_loss_db,
                        "s_db": link.shadow_db,
                        "h": link.fast_fading,
                        "rb_list": ";".join(str(rb) for rb in link.rb_set),
                        "sinr_db": 10.0 * math.log10(link.sinr_linear) if link.sinr_linear > 0 else None,
                        "capacity_bps": link.capacity,
                    },
                )

    def _computation_phase(self, cpu: Dict[str, float]) -> None:
        t = self.clock.tti_index
        compute = self.config.compute
        for node_id in sorted(self.queues):
            queue = self.queues[node_id]
            eligible = [
                self.tasks[task_id]
                for task_id in queue.task_ids
                if task_id in self.tasks
                and self.tasks[task_id].state in (TaskState.QUEUED, TaskState.COMPUTING)
                and (self.tasks[task_id].relay_ready_tti or 0) <= t
            ]
            if not eligible:
                continue
            node = self.nodes[node_id]
            shares = fill_leftover({task.id: cpu.get(task.id, 0.0) for task in eligible})
            step = step_compute(node.cpu_freq, eligible, CpuShareMap(node=node_id, shares=shares), self.dt, t)
            meter_energy(self.energy[node_id], cycles=step.cycles, cpu_freq=node.cpu_freq, kappa=compute.kappa)
            for task_id in step.started:
                self._emit("computation_started", task=task_id, node=node.name)
            for task_id in step.completed:
                self._complete(self.tasks[task_id])
        for uid in self.uav_ids:
            meter_energy(self.energy[uid], hover_power=compute.hover_power, fly_time=self.dt)

    def _complete(self, task: Task) -> None:
        t = self.clock.tti_index
        node = task.assigned_node
        task.result_correct = apply_attack(self.attackers.get(node), (t + 1) * self.dt)
        latency = task.latency(self.dt)
        self.counters.completed += 1
        self.counters.latency_sum += latency
        self._tti_completions += 1
        self._release(task)
        self._finished.append(task)
        self._emit("task_completed", task=task.id, node=self.name(node), latency=_clean(latency))

    def _release(self, task: Task) -> None:
        if task.assigned_node is not None and task.assigned_node in self.queues:
            self.queues[task.assigned_node].remove(task.id)
        self.tasks.pop(task.id, None)
        self.uplink_rx.pop(task.id, None)

    def _retire_failed(self, task: Task, reason: FailureReason) -> None:
        self.counters.failed += 1
        self.counters.failures_by_reason[reason.value] += 1
        self._tti_failures += 1
        self._release(task)
        kind = "task_orphaned" if reason is FailureReason.ORPHANED else "task_failed"
        self._emit(kind, task=task.id, reason=reason.value, node=self.name(task.assigned_node))

    def _orphan_tasks(self, vehicle: int) -> None:
        for task in list(self.tasks.values()):
            if task.origin == vehicle or task.assigned_node == vehicle:
                fail_task(task, FailureReason.ORPHANED)
                self._retire_failed(task, FailureReason.ORPHANED)

    def _ledger_phase(self) -> None:
        ledger = self.config.ledger
        for task in self._finished:
            node = task.assigned_node
            outcome = audit_and_update_reputation(
                node,
                bool(task.result_correct),
                self.rng["ledger"],
                ledger.p_audit,
                self.reputation,
            )
            if outcome.audited:
                self._emit("result_audited", task=task.id, node=self.name(node), correct=outcome.correct)
            if outcome.release_payment:
                self._pay(task)
            else:
                self.counters.payments_withheld += 1
                self._emit("payment_withheld", task=task.id, payer=self.name(task.origin), node=self.name(node))
            self.nodes[node].reputation = self.reputation.score(node)
            if self.reputation.is_blacklisted(node) and node not in self.blacklisted:
                self.blacklisted.append(node)
                self._emit("node_blacklisted", node=self.name(node), score=_clean(self.reputation.score(node)))
        self._spoof_attempts()
        self._forge()

    def _pay(self, task: Task) -> None:
        ledger = self.config.ledger
        amount = task.req / 1e9 * ledger.price_per_gigacycle
        tx = Transaction(
            tx_id=f"tx-{task.id}",
            payer=task.origin,
            payee=task.assigned_node,
            amount=amount,
            fee=amount * ledger.fee_rate,
            task_id=task.id,
            up=task.up,
            req=task.req,
            deadline=task.deadline,
            latency=_clean(task.latency(self.dt)),
            created=_clean((self.clock.tti_index + 1) * self.dt),
        )
        result = submit_transaction(self.pool, tx, self.credentials[task.origin], self.registry)
        if not result.accepted:
            self._emit("transaction_rejected", tx=tx.tx_id, reason=result.reason)

    def _spoof_attempts(self) -> None:
        ledger = self.config.ledger
        rng = self.rng["attacks"]
        t = self.clock.tti_index
        for attacker, profile in sorted(self.attackers.items()):
            if profile.kind is not AttackKind.IDENTITY_SPOOF:
                continue
            victims = [tv for tv in self.tv_ids if tv != attacker]
            attempts = int(rng.poisson(ledger.spoof_attempt_rate * self.dt))
            for attempt in range(attempts):
                if not victims:
                    break
                victim = victims[int(rng.integers(len(victims)))]
                amount = ledger.price_per_gigacycle
                forged = Transaction(
                    tx_id=f"spoof-{self.name(attacker)}-{t}-{attempt}",
                    payer=victim,
                    payee=attacker,
                    amount=amount,
                    fee=amount * ledger.fee_rate,
                    task_id="forged",
                    up=0.0,
                    req=0.0,
                    deadline=0.0,
                    latency=0.0,
                    created=_clean(self.clock.time),
                )
                result = submit_transaction(self.pool, forged, self.credentials.get(attacker, ""), self.registry)
                if result.attack_detected:
                    self.counters.attacks_detected += 1
                    self._emit(
                        "attack_detected",
                        attacker=self.name(attacker),
                        claimed=self.name(victim),
                        attack=profile.kind.value,
                    )

    def _forge(self) -> None:
        ledger = self.config.ledger
        stakes = {rsu: self.nodes[rsu].stake for rsu in self.rsu_ids if not self.reputation.is_blacklisted(rsu)}
        try:
            block = maybe_forge_block(
                self.pool,
                self.chain,
                self.clock,
                self.last_block_tti,
                stakes,
                self.rng["ledger"],
                ledger,
            )
        except NoEligibleValidatorError as e:
            if not self._ledger_stalled:
                self._ledger_stalled = True
                logger.warning("%s; %d transaction(s) stay pooled", e, len(self.pool))
                self._emit("ledger_error", message=str(e), pooled=len(self.pool))
            return
        if block is None:
            return
        accepted, reason = verify_block(self.chain, block, ledger.block_max_tx)
        if not accepted:
            raise BlockRejectedError(block.height, reason)
        settle_block(block, self.balances)
        reward_validator(block, self.balances)
        self._ledger_stalled = False
        self.last_block_tti = self.clock.tti_index
        size = len(block.transactions)
        self.counters.tx_certified += size
        self.counters.blocks += 1
        self.counters.max_block_size = max(self.counters.max_block_size, size)
        self._tti_certified += size
        self._emit(
            "block_forged",
            height=block.height,
            validator=self.name(block.validator),
            transactions=size,
            digest=block.digest,
        )

    def _metrics_phase(self) -> None:
        counters = self.counters
        energy = self.energy_totals()
        self.series.append(
            MetricsRow(
                tti=self.clock.tti_index,
                time=_clean(self.clock.time),
                active=len(self.tasks),
                generated=counters.generated,
                completed=counters.completed,
                failed=counters.failed,
                completions=self._tti_completions,
                failures=self._tti_failures,
                tx_count=self._tti_certified,
                blocks=counters.blocks,
                energy_tx=energy["tx"],
                energy_comp=energy["comp"],
                energy_fly=energy["fly"],
                mean_latency=self.mean_latency(),
                success_ratio=self.success_ratio(),
            ),
        )

    def energy_totals(self) -> Dict[str, float]:
        meters = [self.energy[node.id] for node in self.nodes]
        return {
            "tx": _clean(sum(meter.tx_joules for meter in meters)),
            "comp": _clean(sum(meter.comp_joules for meter in meters)),
            "fly": _clean(sum(meter.fly_joules for meter in meters)),
        }

    def mean_latency(self) -> Optional[float]:
        if not self.counters.completed:
            return None
        return _clean(self.counters.latency_sum / self.counters.completed)

    def success_ratio(self) -> float:
        """Completed over finished tasks; 1.0 until a task completes or fails.

        Tasks still in flight have no outcome yet and are left out.
        """
        finished = self.counters.completed + self.counters.failed
        if not finished:
            return 1.0
        return _clean(self.counters.completed / finished)

    def summary(self) -> RunSummary:
        counters = self.counters
        elapsed = self.clock.tti_index * self.dt
        energy = self.energy_totals()
        windows = counters.windows
        return RunSummary(
            scenario=self.config.name,
            seed=self.config.simulation.seed,
            solver=self.config.offload.solver,
            horizon=self.config.simulation.horizon,
            ttis=self.clock.tti_index,
            generated=counters.generated,
            completed=counters.completed,
            failed=counters.failed,
            in_flight=len(self.tasks),
            success_ratio=self.success_ratio(),
            no_tasks=counters.generated == 0,
            mean_latency=self.mean_latency(),
            failures_by_reason=dict(counters.failures_by_reason),
            tx_certified=counters.tx_certified,
            tx_per_second=_clean(counters.tx_certified / elapsed) if elapsed > 0 else None,
            completions_per_second=_clean(counters.completed / elapsed) if elapsed > 0 else None,
            blocks=counters.blocks,
            max_block_size=counters.max_block_size,
            attacks_detected=counters.attacks_detected,
            payments_withheld=counters.payments_withheld,
            energy_tx=energy["tx"],
            energy_comp=energy["comp"],
            energy_fly=energy["fly"],
            kmeans_runs=counters.kmeans_runs,
            kmeans_local_optima=counters.kmeans_local_optima,
            solver_stats=SolverStats(
                windows=windows,
                assigned=counters.assigned,
                mean_iterations=_clean(counters.iterations_sum / windows) if windows else None,
                mean_objective=_clean(counters.objective_sum / windows) if windows else None,
                oracle_fallbacks=counters.oracle_fallbacks,
            ),
        )

    def runtime_state(self) -> Dict[str, Any]:
        """Everything beyond the config needed to continue this world."""
        return {
            "tti_index": self.clock.tti_index,
            "rng": self.rng.state(),
            "nodes": [node.model_dump(mode="json") for node in self.nodes],
            "active": dict(self.active),
            "motions": {vid: motion.model_dump(mode="json") for vid, motion in self.motions.items()},
            "uav_motions": {uid: motion.model_dump(mode="json") for uid, motion in self.uav_motions.items()},
            "zones": dict(self.zones),
            "arrival_rates": dict(self.arrival_rates),
            "channel": self.channel.state(),
            "tasks": [task.model_dump(mode="json") for task in self.tasks.values()],
            "queues": {node: list(queue.task_ids) for node, queue in self.queues.items()},
            "uplink_rx": dict(self.uplink_rx),
            "energy": {node: meter.model_dump() for node, meter in self.energy.items()},
            "plan": {"start": self._plan_start, "bw": self._plan_bw, "cpu": self._plan_cpu},
            "ledger": {
                "pool": self.pool.model_dump(mode="json"),
                "chain": self.chain.model_dump(mode="json"),
                "balances": dict(self.balances),
                "reputation": self.reputation.model_dump(mode="json"),
                "blacklisted": list(self.blacklisted),
                "last_block_tti": self.last_block_tti,
                "stalled": self._ledger_stalled,
            },
            "counters": self.counters.model_dump(),
            "series": [row.model_dump(mode="json") for row in self.series],
        }

    def load_runtime_state(self, state: Dict[str, Any]) -> None:
        self.clock.tti_index = int(state["tti_index"])
        self.rng.set_state(state["rng"])
        self.nodes = [Node(**node) for node in state["nodes"]]
        self.active = {int(vid): bool(flag) for vid, flag in state["active"].items()}
        self.motions = {int(vid): VehicleMotion(**motion) for vid, motion in state["motions"].items()}
        self.uav_motions = {int(uid): UavMotion(**motion) for uid, motion in state["uav_motions"].items()}
        self.zones = {int(vid): int(zone) for vid, zone in state["zones"].items()}
        self.arrival_rates = {int(tv): float(rate) for tv, rate in state["arrival_rates"].items()}
        self.channel.set_state(state["channel"])
        self.tasks = {task["id"]: Task(**task) for task in state["tasks"]}
        self.queues = {int(node): TaskQueue(owner=int(node), task_ids=ids) for node, ids in state["queues"].items()}
        self.uplink_rx = {task_id: int(rx) for task_id, rx in state["uplink_rx"].items()}
        self.energy = {int(node): EnergyMeter(**meter) for node, meter in state["energy"].items()}
        plan = state["plan"]
        self._plan_start, self._plan_bw, self._plan_cpu = int(plan["start"]), plan["bw"], plan["cpu"]
        ledger = state["ledger"]
        self.pool = TransactionPool(**ledger["pool"])
        self.chain = Chain(**ledger["chain"])
        self.balances = {int(node): float(balance) for node, balance in ledger["balances"].items()}
        self.reputation = ReputationLedger(**ledger["reputation"])
        self.blacklisted = [int(node) for node in ledger["blacklisted"]]
        self.last_block_tti = int(ledger["last_block_tti"])
        self._ledger_stalled = bool(ledger["stalled"])
        self.counters = WorldCounters(**state["counters"])
        self.series = [MetricsRow(**row) for row in state["series"]]


def snapshot(world: World) -> str:
    """Serialize a world to a YAML document of its config and runtime state."""
    document = {
        "config": world.config.model_dump(mode="json"),
        "runtime": world.runtime_state(),
    }
    return yaml.safe_dump(document, sort_keys=False)


def restore(document: Union[str, Dict[str, Any]]) -> World:
    """Rebuild a world from `snapshot` output."""
    if isinstance(document, str):
        try:
            document = yaml.safe_load(document)
        except yaml.YAMLError as e:
            raise InvalidYAMLError("<snapshot>") from e
    if not isinstance(document, dict) or "config" not in document or "runtime" not in document:
        raise InvalidConfigurationError("<snapshot>", "expected 'config' and 'runtime' sections")
    world = World(ScenarioConfig(**document["config"]))
    world.load_runtime_state(document["runtime"])
    return world


def save_snapshot(world: World, path: Union[str, Path]) -> None:
    Path(path).write_text(snapshot(world), encoding="utf-8")


def load_snapshot(path: Union[str, Path]) -> World:
    return restore(Path(path).read_text(encoding="utf-8"))
