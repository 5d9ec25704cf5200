"""Radio channel: path loss, correlated shadowing, Rayleigh fading, SINR, capacity."""

import logging
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, Field

from skyfog.exceptions import UnstableQueueError
from skyfog.models import ChannelConfig, LinkMode, ModeChannelConfig

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]
CrossGain = Callable[[int, int], float]


def dbm_to_watts(power_dbm: ArrayLike) -> ArrayLike:
    return 10.0 ** ((np.asarray(power_dbm, dtype=float) - 30.0) / 10.0)


def path_loss_db(
    d: ArrayLike,
    A: ArrayLike,
    B: ArrayLike,
    C: ArrayLike,
    D: ArrayLike,
    fc: ArrayLike,
    d_min: float = 1.0,
) -> ArrayLike:
    """A*log10(d) + B + C*log10(fc/D), with d clamped to at least `d_min`."""
    distance = np.asarray(d, dtype=float)
    clamped = distance < d_min
    if np.any(clamped):
        logger.debug("Clamped %d link distance(s) to d_min=%s m", int(np.count_nonzero(clamped)), d_min)
        distance = np.maximum(distance, d_min)
    loss = A * np.log10(distance) + B + C * np.log10(np.asarray(fc, dtype=float) / D)
    return float(loss) if np.ndim(loss) == 0 else loss


def mode_path_loss(d: ArrayLike, params: ModeChannelConfig, d_min: float = 1.0) -> ArrayLike:
    return path_loss_db(d, params.A, params.B, params.C, params.D, params.fc, d_min)


def update_shadowing(
    s_db: ArrayLike,
    delta_d: ArrayLike,
    d_corr: ArrayLike,
    sigma_db: ArrayLike,
    rng: np.random.Generator,
) -> ArrayLike:
    """Distance-correlated shadowing update, mixed in the linear domain.

    S' = 10*log10(exp(-dd/dc) * 10^(S/10) + sqrt(1 - exp(-2dd/dc)) * 10^(N/10)),
    N ~ Normal(0, sigma). With dd = 0 the value is unchanged.
    """
    s = np.asarray(s_db, dtype=float)
    correlation = np.exp(-np.asarray(delta_d, dtype=float) / d_corr)
    innovation = rng.normal(0.0, 1.0, size=np.shape(np.broadcast_arrays(s, correlation)[0])) * sigma_db
    mixed = correlation * 10.0 ** (s / 10.0) + np.sqrt(1.0 - correlation**2) * 10.0 ** (innovation / 10.0)
    updated = 10.0 * np.log10(mixed)
    return float(updated) if np.ndim(updated) == 0 else updated


def sample_fast_fading(
    rng: np.random.Generator,
    size: Optional[Union[int, Sequence[int]]] = None,
) -> ArrayLike:
    """Rayleigh power gain: unit-mean exponential."""
    return rng.exponential(1.0, size=size)


def channel_gain_linear(s_db: ArrayLike, pl_db: ArrayLike, h: ArrayLike) -> ArrayLike:
    return 10.0 ** (np.asarray(s_db) / 10.0) / 10.0 ** (np.asarray(pl_db) / 10.0) * h


class LinkState(BaseModel):
    """One active radio link in the current TTI."""

    tx: int
    rx: int
    mode: LinkMode
    zone: Optional[int] = None
    path_loss_db: float = 0.0
    shadow_db: float = 0.0
    fast_fading: float = 1.0
    tx_power_dbm: float = 23.0
    rb_set: List[int] = Field(default_factory=list)
    sinr_per_rb: List[float] = Field(default_factory=list)
    sinr_linear: float = 0.0
    capacity: float = 0.0

    @property
    def gain(self) -> float:
        return float(channel_gain_linear(self.shadow_db, self.path_loss_db, self.fast_fading))

    @property
    def rx_power_w(self) -> float:
        return float(dbm_to_watts(self.tx_power_dbm)) * self.gain


class RbPlan(BaseModel):
    """Resource blocks of one zone manager's band and who holds them."""

    total_bandwidth: float = Field(gt=0)
    rb_count: int = Field(ge=1)
    occupancy: Dict[int, List[str]] = Field(default_factory=dict)

    @property
    def rb_bandwidth(self) -> float:
        return self.total_bandwidth / self.rb_count

    @property
    def used(self) -> int:
        return len(self.occupancy)

    def rb_sets(self) -> Dict[str, List[int]]:
        """Inverse of `occupancy`: the RBs each link holds."""
        sets: Dict[str, List[int]] = {}
        for rb in sorted(self.occupancy):
            for link in self.occupancy[rb]:
                sets.setdefault(link, []).append(rb)
        return sets


def allocate_rbs(shares: Dict[str, float], total_bandwidth: float, rb_count: int) -> RbPlan:
    """Turn bandwidth shares into whole RBs by largest remainder.

    Every link with a positive share gets at least one RB while any are left.
    RBs are handed out contiguously in the order of `shares`, one link per RB.
    """
    plan = RbPlan(total_bandwidth=total_bandwidth, rb_count=rb_count)
    links = [link for link, share in shares.items() if share > 0]
    if not links:
        return plan
    quotas = np.array([shares[link] * rb_count for link in links])
    target = min(rb_count, max(int(round(float(quotas.sum()))), len(links)))
    counts = np.floor(quotas + 1e-9).astype(int)
    by_quota = sorted(range(len(links)), key=lambda i: (-quotas[i], i))
    for i in by_quota:
        if counts[i] == 0 and counts.sum() < target:
            counts[i] = 1
    remainders = quotas - np.floor(quotas + 1e-9)
    for i in sorted(range(len(links)), key=lambda i: (-remainders[i], i)):
        if counts.sum() >= target:
            break
        counts[i] += 1
    rb = 0
    for link, count in zip(links, counts):
        for _ in range(int(count)):
            plan.occupancy[rb] = [link]
            rb += 1
    return plan


def sinr(
    link: LinkState,
    links: Iterable[LinkState],
    noise_dbm: float,
    cross_gain: Optional[CrossGain] = None,
) -> List[float]:
    """Per-RB SINR of `link` against every other link sharing one of its RBs.

    An interferer contributes its transmit power times the gain from its
    transmitter to this link's receiver; without `cross_gain` its own link
    gain stands in.
    """
    noise = float(dbm_to_watts(noise_dbm))
    signal = link.rx_power_w
    values = []
    for rb in link.rb_set:
        interference = 0.0
        for other in links:
            if other is link or rb not in other.rb_set:
                continue
            gain = cross_gain(other.tx, link.rx) if cross_gain is not None else other.gain
            interference += float(dbm_to_watts(other.tx_power_dbm)) * gain
        values.append(signal / (noise + interference))
    return values


def capacity(sinr_per_rb: Sequence[float], rb_bandwidth: float) -> float:
    """Shannon rate summed over the link's RBs (bits/s); no RBs means no rate."""
    return float(sum(rb_bandwidth * np.log2(1.0 + gamma) for gamma in sinr_per_rb))


def evaluate_links(
    links: List[LinkState],
    noise_dbm: float,
    rb_bandwidth: float,
    cross_gain: Optional[CrossGain] = None,
) -> List[LinkState]:
    """Fill SINR and capacity for every link, grouping by RB index."""
    by_rb: Dict[int, List[LinkState]] = {}
    for link in links:
        for rb in link.rb_set:
            by_rb.setdefault(rb, []).append(link)
    for link in links:
        neighbours = {id(other): other for rb in link.rb_set for other in by_rb[rb]}
        per_rb = sinr(link, list(neighbours.values()), noise_dbm, cross_gain)
        link.sinr_per_rb = per_rb
        link.sinr_linear = float(np.mean(per_rb)) if per_rb else 0.0
        link.capacity = capacity(per_rb, rb_bandwidth)
    return links


def wired_delay(
    arrival_rate: float,
    service_rate: float,
    size_bits: float = 0.0,
    rate_bits_s: Optional[float] = None,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """M/M/1 sojourn time plus serialization on the wire.

    Without an RNG the expected sojourn 1/(mu - lambda) is returned; with one,
    a sample from the exponential sojourn distribution.
    """
    if arrival_rate >= service_rate:
        raise UnstableQueueError(arrival_rate, service_rate)
    mean = 1.0 / (service_rate - arrival_rate)
    sojourn = mean if rng is None else float(rng.exponential(mean))
    serialization = size_bits / rate_bits_s if rate_bits_s else 0.0
    return sojourn + serialization


class ChannelModel:
    """Matrices of path loss, shadowing, and fading between task vehicles and fog radios.

    Rows are task vehicles, columns are fog radio endpoints (serving vehicles,
    UAVs, RSUs). Path loss and shadowing change at mobility steps, fast fading
    every TTI.
    """

    def __init__(
        self,
        config: ChannelConfig,
        column_modes: Sequence[LinkMode],
        n_rows: int,
        rng: np.random.Generator,
    ):
        self.config = config
        self.column_modes = list(column_modes)
        params = [config.modes[mode] for mode in self.column_modes]
        self.A = np.array([p.A for p in params], dtype=float)
        self.B = np.array([p.B for p in params], dtype=float)
        self.C = np.array([p.C for p in params], dtype=float)
        self.D = np.array([p.D for p in params], dtype=float)
        self.fc = np.array([p.fc for p in params], dtype=float)
        self.sigma = np.array([p.sigma_db for p in params], dtype=float)
        self.d_corr = np.array([p.d_corr for p in params], dtype=float)
        self.power_dbm = np.array([p.tx_power_dbm for p in params], dtype=float)
        shape = (n_rows, len(self.column_modes))
        self.path_loss = np.zeros(shape)
        self.shadow = rng.normal(0.0, 1.0, size=shape) * self.sigma[None, :]
        self.fading = np.ones(shape)

    @property
    def shape(self) -> tuple:
        return self.path_loss.shape

    def update_geometry(
        self,
        row_positions: np.ndarray,
        column_positions: np.ndarray,
        rng: np.random.Generator,
        row_moved: Optional[np.ndarray] = None,
        column_moved: Optional[np.ndarray] = None,
    ) -> None:
        """Recompute path loss from positions; evolve shadowing by distance moved."""
        rows = np.asarray(row_positions, dtype=float).reshape(-1, 3)
        cols = np.asarray(column_positions, dtype=float).reshape(-1, 3)
        d = np.linalg.norm(rows[:, None, :] - cols[None, :, :], axis=-1)
        self.path_loss = path_loss_db(d, self.A, self.B, self.C, self.D, self.fc, self.config.d_min)
        if row_moved is not None:
            moved_cols = np.zeros(cols.shape[0]) if column_moved is None else column_moved
            delta = np.add.outer(np.asarray(row_moved, dtype=float), np.asarray(moved_cols, dtype=float))
            self.shadow = update_shadowing(self.shadow, delta, self.d_corr[None, :], self.sigma[None, :], rng)

    def refresh_fast_fading(self, rng: np.random.Generator) -> None:
        self.fading = sample_fast_fading(rng, self.shape)

    def gain(self) -> np.ndarray:
        return channel_gain_linear(self.shadow, self.path_loss, self.fading)

    def full_band_capacity(self) -> np.ndarray:
        """Rate each link would get with the whole band and no interference."""
        noise = float(dbm_to_watts(self.config.noise_dbm)) * self.config.rb_count
        snr = dbm_to_watts(self.power_dbm)[None, :] * self.gain() / noise
        return self.config.total_bandwidth * np.log2(1.0 + snr)

    def link_state(self, row: int, column: int, tx: int, rx: int, rb_set: List[int], zone: Optional[int]) -> LinkState:
        return LinkState(
            tx=tx,
            rx=rx,
            mode=self.column_modes[column],
            zone=zone,
            path_loss_db=float(self.path_loss[row, column]),
            shadow_db=float(self.shadow[row, column]),
            fast_fading=float(self.fading[row, column]),
            tx_power_dbm=float(self.power_dbm[column]),
            rb_set=rb_set,
        )

    def state(self) -> Dict[str, list]:
        return {
            "path_loss": self.path_loss.tolist(),
            "shadow": self.shadow.tolist(),
            "fading": self.fading.tolist(),
        }

    def set_state(self, state: Dict[str, list]) -> None:
        self.path_loss = np.asarray(state["path_loss"], dtype=float).reshape(self.shape)
        self.shadow = np.asarray(state["shadow"], dtype=float).reshape(self.shape)
        self.fading = np.asarray(state["fading"], dtype=float).reshape(self.shape)
