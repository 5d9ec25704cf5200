"""Simulation primitives: the two-timescale clock, seeded RNG streams, and nodes."""

import hashlib
import math
from typing import Any, Dict, Iterable, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field, model_validator

from skyfog.exceptions import InvalidTimescaleError
from skyfog.models import LinkMode, NodeKind

Position = Tuple[float, float, float]

RNG_LABELS = ("mobility", "channel", "tasks", "ledger", "attacks")


def distance_3d(a: Sequence[float], b: Sequence[float]) -> float:
    """Euclidean distance between two 3-D points in meters."""
    return float(np.linalg.norm(np.subtract(a, b, dtype=float)))


class SimClock(BaseModel):
    """TTI clock with a coarser mobility step layered on top."""

    tti_index: int = Field(default=0, ge=0)
    tti_duration: float = Field(default=0.05, gt=0)
    mobility_step: float = Field(default=0.5, gt=0)
    horizon: float = Field(default=60.0, gt=0)

    @model_validator(mode="after")
    def _integer_ratio(self) -> "SimClock":
        ratio = self.mobility_step / self.tti_duration
        if round(ratio) < 1 or abs(ratio - round(ratio)) > 1e-9:
            raise InvalidTimescaleError(self.tti_duration, self.mobility_step)
        return self

    @property
    def ttis_per_mobility_step(self) -> int:
        return int(round(self.mobility_step / self.tti_duration))

    @property
    def total_ttis(self) -> int:
        """Whole TTIs that fit in the horizon; a partial last TTI is dropped."""
        return math.floor(self.horizon / self.tti_duration + 1e-9)

    @property
    def time(self) -> float:
        """Start time of the current TTI in seconds."""
        return self.tti_index * self.tti_duration

    @property
    def is_mobility_tti(self) -> bool:
        return self.tti_index % self.ttis_per_mobility_step == 0

    @property
    def mobility_index(self) -> int:
        return self.tti_index // self.ttis_per_mobility_step

    @property
    def finished(self) -> bool:
        return self.tti_index >= self.total_ttis

    def ttis_for(self, seconds: float) -> int:
        """Whole TTIs covering a duration, rounded to the nearest TTI."""
        return int(round(seconds / self.tti_duration))

    def advance(self) -> None:
        self.tti_index += 1


def _label_key(label: str) -> int:
    return int.from_bytes(hashlib.sha256(label.encode("utf-8")).digest()[:8], "big")


def rng_stream(master_seed: int, label: str) -> np.random.Generator:
    """Independent generator for one subsystem, keyed by (master seed, label)."""
    sequence = np.random.SeedSequence([master_seed, _label_key(label)])
    return np.random.Generator(np.random.PCG64(sequence))


class RngStreams:
    """One labelled substream per subsystem, all derived from a master seed."""

    def __init__(self, master_seed: int, labels: Iterable[str] = RNG_LABELS):
        self.master_seed = master_seed
        self._streams: Dict[str, np.random.Generator] = {
            label: rng_stream(master_seed, label) for label in labels
        }

    def __getitem__(self, label: str) -> np.random.Generator:
        return self._streams[label]

    @property
    def labels(self) -> Tuple[str, ...]:
        return tuple(self._streams)

    def state(self) -> Dict[str, Any]:
        return {
            label: generator.bit_generator.state
            for label, generator in self._streams.items()
        }

    def set_state(self, state: Dict[str, Any]) -> None:
        for label, bit_state in state.items():
            if label not in self._streams:
                self._streams[label] = rng_stream(self.master_seed, label)
            self._streams[label].bit_generator.state = bit_state


class Node(BaseModel):
    """Any fog entity: task vehicle, serving vehicle, UAV, RSU, or cloud server."""

    id: int = Field(ge=0)
    name: str
    kind: NodeKind
    position: Position = (0.0, 0.0, 0.0)
    cpu_freq: float = Field(default=0.0, ge=0)
    tx_power: Dict[LinkMode, float] = Field(default_factory=dict)
    coverage_radius: float = Field(default=0.0, ge=0)
    stake: float = Field(default=0.0, ge=0)
    reputation: float = Field(default=0.5, ge=0, le=1)
    battery: Optional[float] = None

    @property
    def accepts_tasks(self) -> bool:
        return self.kind is not NodeKind.TASK_VEHICLE and self.cpu_freq > 0

    @property
    def is_vehicle(self) -> bool:
        return self.kind in (NodeKind.TASK_VEHICLE, NodeKind.SERVING_VEHICLE)

    @property
    def is_zone_manager(self) -> bool:
        return self.kind in (NodeKind.UAV, NodeKind.RSU)
