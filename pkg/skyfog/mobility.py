"""Vehicle motion on a grid road network, UAV placement, and trace replay."""

import itertools
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import networkx as nx
import numpy as np
from pydantic import BaseModel, Field

from skyfog.entities import Position, distance_3d
from skyfog.exceptions import TraceParseError, TraceTimestampError, UnconfiguredScenarioError, UnknownLaneError
from skyfog.models import MobilityConfig, RouteEndPolicy

logger = logging.getLogger(__name__)

Lane = Tuple[int, int]


class RoadNetwork:
    """Directed lane graph over a rectangular grid of intersections."""

    def __init__(self, graph: nx.DiGraph, width: float, height: float):
        self.graph = graph
        self.width = width
        self.height = height

    @classmethod
    def grid(cls, config: MobilityConfig) -> "RoadNetwork":
        """Build a two-way Manhattan grid spanning the whole area."""
        graph = nx.DiGraph()
        xs = np.linspace(0.0, config.width, config.grid_cols)
        ys = np.linspace(0.0, config.height, config.grid_rows)
        for row, col in itertools.product(range(config.grid_rows), range(config.grid_cols)):
            graph.add_node(row * config.grid_cols + col, pos=(float(xs[col]), float(ys[row])))
        for row, col in itertools.product(range(config.grid_rows), range(config.grid_cols)):
            here = row * config.grid_cols + col
            neighbours = []
            if col + 1 < config.grid_cols:
                neighbours.append(here + 1)
            if row + 1 < config.grid_rows:
                neighbours.append(here + config.grid_cols)
            for there in neighbours:
                length = float(np.hypot(*np.subtract(graph.nodes[here]["pos"], graph.nodes[there]["pos"])))
                for u, v in ((here, there), (there, here)):
                    graph.add_edge(u, v, length=length, speed_limit=config.speed_limit)
        return cls(graph, config.width, config.height)

    @property
    def intersections(self) -> List[int]:
        return list(self.graph.nodes)

    def has_lane(self, lane: Lane) -> bool:
        return self.graph.has_edge(*lane)

    def lane_length(self, lane: Lane) -> float:
        if not self.has_lane(lane):
            raise UnknownLaneError(lane)
        return float(self.graph.edges[lane]["length"])

    def speed_limit(self, lane: Lane) -> float:
        if not self.has_lane(lane):
            raise UnknownLaneError(lane)
        return float(self.graph.edges[lane]["speed_limit"])

    def position(self, lane: Lane, offset: float) -> Tuple[float, float]:
        """Ground coordinates of a point `offset` meters along a lane."""
        length = self.lane_length(lane)
        start = np.asarray(self.graph.nodes[lane[0]]["pos"])
        end = np.asarray(self.graph.nodes[lane[1]]["pos"])
        point = start + (end - start) * (offset / length)
        return float(point[0]), float(point[1])

    def random_route(self, rng: np.random.Generator, start: Optional[int] = None) -> List[Lane]:
        """Shortest path from `start` (or a random intersection) to a random other one."""
        nodes = self.intersections
        if start is None:
            start = int(nodes[rng.integers(len(nodes))])
        destinations = [node for node in nodes if node != start]
        destination = int(destinations[rng.integers(len(destinations))])
        path = nx.shortest_path(self.graph, start, destination, weight="length")
        return list(zip(path[:-1], path[1:]))


class VehicleMotion(BaseModel):
    """Where a vehicle is on its route and how fast it drives."""

    route: List[Lane]
    lane_index: int = Field(default=0, ge=0)
    lane_offset: float = Field(default=0.0, ge=0)
    speed: float = Field(ge=0)
    active: bool = True

    @property
    def lane(self) -> Lane:
        return self.route[self.lane_index]


class UavMotion(BaseModel):
    """UAV position, current waypoint, and speed cap."""

    position: Position
    target: Optional[Tuple[float, float]] = None
    v_max: float = Field(gt=0)


def spawn_vehicle(network: RoadNetwork, rng: np.random.Generator, config: MobilityConfig) -> VehicleMotion:
    """Place a vehicle at a random point of a fresh random route."""
    route = network.random_route(rng)
    offset = float(rng.uniform(0.0, network.lane_length(route[0])))
    speed = float(rng.uniform(config.speed_min, config.speed_max))
    return VehicleMotion(route=route, lane_offset=offset, speed=speed)


def vehicle_position(network: RoadNetwork, motion: VehicleMotion) -> Position:
    x, y = network.position(motion.lane, motion.lane_offset)
    return (x, y, 0.0)


def step_vehicles(
    network: RoadNetwork,
    motions: Sequence[VehicleMotion],
    dt: float,
    rng: np.random.Generator,
    policy: RouteEndPolicy = RouteEndPolicy.REDRAW,
) -> List[VehicleMotion]:
    """Advance every active vehicle by one mobility step.

    A vehicle drives at min(own speed, lane limit), carrying leftover distance
    into the next lane of its route. At route end it either gets a fresh route
    from its final intersection or leaves the area.
    """
    moved: List[VehicleMotion] = []
    for motion in motions:
        if not motion.active:
            moved.append(motion)
            continue
        route = list(motion.route)
        lane_index = motion.lane_index
        lane = route[lane_index]
        length = network.lane_length(lane)
        offset = motion.lane_offset + min(motion.speed, network.speed_limit(lane)) * dt
        active = True
        while offset > length:
            offset -= length
            lane_index += 1
            if lane_index == len(route):
                if policy is RouteEndPolicy.DESPAWN:
                    active = False
                    lane_index -= 1
                    offset = length
                    break
                route = network.random_route(rng, start=lane[1])
                lane_index = 0
            lane = route[lane_index]
            length = network.lane_length(lane)
        moved.append(
            VehicleMotion(
                route=route,
                lane_index=lane_index,
                lane_offset=offset,
                speed=motion.speed,
                active=active,
            ),
        )
    return moved


@dataclass
class KMeansResult:
    """Outcome of one UAV placement run."""

    centers: np.ndarray
    objective: float
    iterations: int
    objective_trace: List[float] = field(default_factory=list)
    duplicate_centers: bool = False
    local_optimum: Optional[bool] = None


def _squared_distances(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    return ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=-1)


def _kmeans_plus_plus(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = [points[rng.integers(len(points))]]
    for _ in range(1, k):
        d2 = _squared_distances(points, np.asarray(centers)).min(axis=1)
        total = d2.sum()
        if total <= 0:
            centers.append(points[rng.integers(len(points))])
        else:
            centers.append(points[rng.choice(len(points), p=d2 / total)])
    return np.asarray(centers, dtype=float)


def best_two_split(points: np.ndarray) -> float:
    """Exact k=2 objective by enumerating every bipartition."""
    n = len(points)
    best = float(np.sum((points - points.mean(axis=0)) ** 2))
    for mask in range(1, 2 ** (n - 1)):
        members = np.array([(mask >> i) & 1 for i in range(n)], dtype=bool)
        cost = 0.0
        for group in (points[members], points[~members]):
            cost += float(np.sum((group - group.mean(axis=0)) ** 2))
        best = min(best, cost)
    return best


def plan_uav_kmeans(
    positions: Union[np.ndarray, Sequence[Sequence[float]]],
    k: int,
    rng: np.random.Generator,
    previous: Optional[np.ndarray] = None,
    max_iters: int = 20,
    tol: float = 0.1,
) -> Optional[KMeansResult]:
    """Place `k` UAV waypoints on the centres of the active vehicles.

    Seeds with k-means++ and runs Lloyd iterations until no centre moves more
    than `tol` meters. Centres come back sorted by x then y so that UAV ids map
    onto them deterministically. With no vehicles the previous centres stand.
    """
    points = np.asarray(positions, dtype=float).reshape(-1, 2)
    if k == 0:
        return None
    if len(points) == 0:
        if previous is None:
            return None
        return KMeansResult(centers=np.asarray(previous, dtype=float), objective=0.0, iterations=0)

    centers = _kmeans_plus_plus(points, k, rng)
    trace: List[float] = []
    iterations = 0
    for iterations in range(1, max_iters + 1):
        d2 = _squared_distances(points, centers)
        labels = d2.argmin(axis=1)
        trace.append(float(d2[np.arange(len(points)), labels].sum()))
        updated = centers.copy()
        for j in range(k):
            members = points[labels == j]
            if len(members):
                updated[j] = members.mean(axis=0)
        shift = float(np.max(np.linalg.norm(updated - centers, axis=1)))
        centers = updated
        if shift < tol:
            break

    objective = float(_squared_distances(points, centers).min(axis=1).sum())
    trace.append(objective)
    order = np.lexsort((centers[:, 1], centers[:, 0]))
    centers = centers[order]
    duplicates = len(np.unique(centers, axis=0)) < k
    if duplicates:
        logger.warning("k-means produced duplicate centres for %d vehicles, k=%d", len(points), k)

    local_optimum = None
    if k == 2 and len(points) <= 8:
        local_optimum = objective > best_two_split(points) + 1e-6 * max(1.0, objective)
    return KMeansResult(
        centers=centers,
        objective=objective,
        iterations=iterations,
        objective_trace=trace,
        duplicate_centers=duplicates,
        local_optimum=local_optimum,
    )


def move_uav_toward(motion: UavMotion, dt: float) -> UavMotion:
    """Fly straight at the waypoint, never overshooting it; altitude is fixed."""
    if motion.target is None:
        return motion
    here = np.asarray(motion.position[:2], dtype=float)
    there = np.asarray(motion.target, dtype=float)
    gap = float(np.linalg.norm(there - here))
    reach = motion.v_max * dt
    if gap <= reach:
        point = there
    else:
        point = here + (there - here) * (reach / gap)
    return motion.model_copy(
        update={"position": (float(point[0]), float(point[1]), motion.position[2])},
    )


def assign_service_zone(
    position: Sequence[float],
    managers: Sequence[Tuple[int, Sequence[float]]],
) -> int:
    """Nearest zone manager by 3-D distance; ties go to the lowest id.

    Raises:
        UnconfiguredScenarioError: There are no UAVs or RSUs.
    """
    if not managers:
        raise UnconfiguredScenarioError("no zone managers (UAVs or RSUs)")
    return min((distance_3d(position, where), manager_id) for manager_id, where in managers)[1]


class VehicleTrace(BaseModel):
    """Vehicle positions per mobility step, replayed from a file."""

    step: float
    frames: Dict[int, Dict[str, Position]] = Field(default_factory=dict)

    @property
    def vehicle_ids(self) -> List[str]:
        return sorted({vid for frame in self.frames.values() for vid in frame})

    @property
    def last_step(self) -> int:
        return max(self.frames, default=0)

    def positions_at(self, step_index: int) -> Dict[str, Position]:
        """Positions at a step.

        A step with no records repeats the latest earlier frame, so a gap in the
        file does not take vehicles off the road. After the trace ends the final
        frame holds.
        """
        earlier = [step for step in self.frames if step <= step_index]
        if not earlier:
            return {}
        return self.frames[max(earlier)]


def load_trace(path: Union[str, Path], mobility_step: float) -> VehicleTrace:
    """Parse `time vehicle_id x y` records into per-step frames."""
    trace = VehicleTrace(step=mobility_step)
    last_time = -np.inf
    for number, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 4:
            raise TraceParseError(number, raw)
        try:
            time, x, y = float(parts[0]), float(parts[2]), float(parts[3])
        except ValueError as e:
            raise TraceParseError(number, raw) from e
        if time < last_time:
            raise TraceTimestampError(number, time, "earlier than the previous record")
        ratio = time / mobility_step
        if abs(ratio - round(ratio)) > 1e-6:
            raise TraceTimestampError(number, time, "not a multiple of the mobility step")
        last_time = time
        trace.frames.setdefault(int(round(ratio)), {})[parts[1]] = (x, y, 0.0)
    return trace
