"""System-level harness: hexagonal layout with wrap-around, user drops,
random-walk mobility and the TTI loop.

Single-cell runs (``cells=1``) have no inter-cell interference. With
``cells=19`` every cell is scheduled independently and sees the other
cells' transmissions of the previous TTI as external interference.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from .channel import (
    ChannelParams,
    McsTable,
    ShadowField,
    dbm_to_watt,
    draw_fading,
    link_gain_matrix,
    sinr_to_efficiency,
)
from .model import (
    Allocation,
    CueUser,
    D2dPair,
    GainTensor,
    NetworkState,
    RateVector,
    update_avg_rates,
    validate_allocation,
)
from .scheduler import (
    EnumerationTooLarge,
    SchedulerConfig,
    ScheduleOutcome,
    complexity_estimate,
    count_block_patterns,
    optimal_pf,
    phpfs_schedule,
)

SQRT3 = math.sqrt(3.0)
SCHEDULERS = ("phpfs", "optimal")

# purpose ids for independent random streams derived from one seed
_DROP_CUE, _DROP_D2D, _MOVE_CUE, _MOVE_D2D = 0, 1, 2, 3
_FADE_CUE_BS, _FADE_D2D_LINK, _FADE_CUE_RX, _FADE_D2D_BS, _FADE_D2D_RX = 4, 5, 6, 7, 8
_SHADOW_BS, _SHADOW_UE = 9, 10


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))


# --------------------------------------------------------------------------
# layout


@dataclass(frozen=True)
class Layout:
    """19 hexagonal cells (centre cell plus two rings) on a torus.

    ``wrap_shifts`` holds the zero shift and the six translations that map
    the cluster onto its neighbouring copies.
    """

    inter_site_distance: float
    centers: np.ndarray
    wrap_shifts: np.ndarray

    @property
    def n_cells(self) -> int:
        return len(self.centers)

    @property
    def cell_radius(self) -> float:
        return self.inter_site_distance / SQRT3

    def wrap_vector(self, a, b) -> np.ndarray:
        """Shortest displacement from ``a`` to any image of ``b``."""
        d = np.asarray(b, dtype=float) - np.asarray(a, dtype=float)
        cand = d[..., None, :] + self.wrap_shifts
        best = np.argmin(np.einsum("...ij,...ij->...i", cand, cand), axis=-1)
        return np.take_along_axis(cand, best[..., None, None], axis=-2)[..., 0, :]

    def wrap_distance(self, a, b):
        return np.linalg.norm(self.wrap_vector(a, b), axis=-1)

    def in_hex(self, offset) -> np.ndarray:
        """Whether points given relative to a cell centre lie in that cell."""
        off = np.asarray(offset, dtype=float)
        half = self.inter_site_distance / 2 * (1 + 1e-12)
        ok = np.abs(off[..., 0]) <= half
        for ang in (math.pi / 3, 2 * math.pi / 3):
            ok &= np.abs(off[..., 0] * math.cos(ang) + off[..., 1] * math.sin(ang)) <= half
        return ok

    def cell_of(self, points) -> np.ndarray:
        """Index of the cell (after wrapping) containing each point."""
        pts = np.asarray(points, dtype=float)
        d = np.stack([self.wrap_distance(c, pts) for c in self.centers], axis=-1)
        return np.argmin(d, axis=-1)


def build_layout(inter_site_distance: float = 500.0) -> Layout:
    if not inter_site_distance > 0:
        raise ValueError("inter_site_distance must be > 0")
    isd = float(inter_site_distance)
    a1 = np.array([isd, 0.0])
    a2 = np.array([isd / 2, isd * SQRT3 / 2])
    axial = [(0, 0)]
    for ring in (1, 2):
        # walk the ring starting east, counter-clockwise
        q, r = ring, 0
        for dq, dr in ((-1, 1), (-1, 0), (0, -1), (1, -1), (1, 0), (0, 1)):
            for _ in range(ring):
                axial.append((q, r))
                q, r = q + dq, r + dr
    centers = np.array([q * a1 + r * a2 for q, r in axial])
    base = np.array([4.0, -SQRT3]) * isd
    shifts = [np.zeros(2)]
    for m in range(6):
        c, s = math.cos(m * math.pi / 3), math.sin(m * math.pi / 3)
        shifts.append(np.array([c * base[0] - s * base[1], s * base[0] + c * base[1]]))
    return Layout(isd, centers, np.array(shifts))


# --------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class ScenarioConfig:
    scenario_id: str = "default"
    n_subchannels: int = 5  # K
    n_cue: int = 3  # N_C per cell
    n_d2d: int = 2  # N_D per cell
    window: int = 100  # T
    iterations: int = 2  # M
    seed: int = 0
    n_tti: int = 1000
    tti_seconds: float = 1e-3
    cue_budget: float = math.inf
    d2d_budget: float = math.inf
    scheduler: str = "phpfs"
    waterfill_mode: str = "optimal"
    max_patterns: int = 10**7
    channel: ChannelParams = ChannelParams()
    fading: str = "auto"  # auto: flat for K >= 25, rayleigh below
    mcs_table: str | None = None  # path; None selects the bundled table
    cells: int = 1
    inter_site_distance: float = 500.0
    min_bs_distance: float = 0.0
    d2d_min_distance: float = 3.0
    d2d_max_distance: float = 50.0
    max_power_dbm: float = 23.0
    mobility: bool = True
    speed_range: tuple[float, float] = (0.0, 10.0)
    flight_range: tuple[float, float] = (10.0, 30.0)
    initial_avg_rate: float = 1.0  # bit/s, keeps (T-1) R > 0 from the first TTI
    min_avg_rate: float = 1e-6
    validate: bool = False

    def __post_init__(self):
        if min(self.n_subchannels, self.window, self.iterations) < 1:
            raise ValueError("n_subchannels, window and iterations must be >= 1")
        if self.n_cue < 0 or self.n_d2d < 0 or self.n_tti < 0:
            raise ValueError("counts must be >= 0")
        if self.scheduler not in SCHEDULERS:
            raise ValueError(f"scheduler must be one of {SCHEDULERS}")
        if self.cells not in (1, 19):
            raise ValueError("cells must be 1 or 19")
        if self.fading not in ("auto", "flat", "rayleigh", "none"):
            raise ValueError(f"unknown fading mode {self.fading!r}")
        if not 0 < self.d2d_min_distance <= self.d2d_max_distance:
            raise ValueError("need 0 < d2d_min_distance <= d2d_max_distance")
        if self.tti_seconds <= 0 or self.initial_avg_rate <= 0:
            raise ValueError("tti_seconds and initial_avg_rate must be > 0")
        lo, hi = self.speed_range
        if not 0 <= lo <= hi:
            raise ValueError("speed_range must satisfy 0 <= lo <= hi")
        lo, hi = self.flight_range
        if not 0 < lo <= hi:
            raise ValueError("flight_range must satisfy 0 < lo <= hi")

    @property
    def fading_mode(self) -> str:
        if self.fading != "auto":
            return self.fading
        return "flat" if self.n_subchannels >= 25 else "rayleigh"

    @property
    def max_power(self) -> float:
        return float(dbm_to_watt(self.max_power_dbm))

    def scheduler_config(self) -> SchedulerConfig:
        return SchedulerConfig(
            window=self.window,
            iterations=self.iterations,
            cue_budget=self.cue_budget,
            d2d_budget=self.d2d_budget,
            waterfill_mode=self.waterfill_mode,
            max_patterns=self.max_patterns,
        )

    def load_mcs(self) -> McsTable:
        return McsTable.load(self.mcs_table) if self.mcs_table else McsTable.default()


# --------------------------------------------------------------------------
# drops and mobility


def _uniform_in_hex(rng: np.random.Generator, layout: Layout, min_center_distance: float):
    half_w, r = layout.inter_site_distance / 2, layout.cell_radius
    while True:
        p = np.array([rng.uniform(-half_w, half_w), rng.uniform(-r, r)])
        if layout.in_hex(p) and math.hypot(*p) >= min_center_distance:
            return p


def _uniform_in_annulus(rng: np.random.Generator, r_min: float, r_max: float):
    # area-uniform radius
    rad = math.sqrt(rng.uniform(r_min**2, r_max**2))
    ang = rng.uniform(0.0, 2 * math.pi)
    return np.array([rad * math.cos(ang), rad * math.sin(ang)])


@dataclass(frozen=True)
class Drop:
    """Positions of every UE across all simulated cells."""

    cue_pos: np.ndarray  # (cells * N_C, 2)
    cue_cell: np.ndarray
    tx_pos: np.ndarray  # (cells * N_D, 2)
    rx_pos: np.ndarray
    d2d_cell: np.ndarray


def drop_users(config: ScenarioConfig, layout: Layout) -> Drop:
    """Uniform drops per cell; D2D receivers in an annulus around their tx.

    Every UE draws from its own stream keyed by (cell, index), so adding
    users never moves the ones already there.
    """
    cue_pos, cue_cell, tx_pos, rx_pos, d2d_cell = [], [], [], [], []
    for c in range(config.cells):
        center = layout.centers[c]
        for i in range(config.n_cue):
            rng = _stream(config.seed, _DROP_CUE, c, i)
            cue_pos.append(center + _uniform_in_hex(rng, layout, config.min_bs_distance))
            cue_cell.append(c)
        for j in range(config.n_d2d):
            rng = _stream(config.seed, _DROP_D2D, c, j)
            tx = center + _uniform_in_hex(rng, layout, config.min_bs_distance)
            tx_pos.append(tx)
            rx_pos.append(tx + _uniform_in_annulus(rng, config.d2d_min_distance, config.d2d_max_distance))
            d2d_cell.append(c)
    as2d = lambda rows: np.array(rows, dtype=float).reshape(-1, 2)  # noqa: E731
    return Drop(
        as2d(cue_pos),
        np.array(cue_cell, dtype=int),
        as2d(tx_pos),
        as2d(rx_pos),
        np.array(d2d_cell, dtype=int),
    )


@dataclass(frozen=True)
class MobilityState:
    """Random-walk state of a group of UEs confined to their home cells."""

    position: np.ndarray  # (n, 2)
    home: np.ndarray  # (n, 2) centre of each UE's cell
    speed: np.ndarray  # m/s
    direction: np.ndarray  # rad
    timer: np.ndarray  # s until the next redraw
    rngs: tuple[np.random.Generator, ...] = field(repr=False, default=())
    speed_range: tuple[float, float] = (0.0, 10.0)
    flight_range: tuple[float, float] = (10.0, 30.0)


def _redraw(rng, speed_range, flight_range):
    return (
        rng.uniform(*speed_range),
        rng.uniform(0.0, 2 * math.pi),
        rng.uniform(*flight_range),
    )


def init_mobility(position, home, rngs, speed_range=(0.0, 10.0), flight_range=(10.0, 30.0)):
    n = len(position)
    draws = [_redraw(rngs[u], speed_range, flight_range) for u in range(n)]
    sp, di, ti = (np.array(col, dtype=float).reshape(n) for col in zip(*draws)) if n else (
        np.zeros(0),
        np.zeros(0),
        np.zeros(0),
    )
    return MobilityState(
        np.array(position, dtype=float).reshape(n, 2),
        np.array(home, dtype=float).reshape(n, 2),
        sp,
        di,
        ti,
        tuple(rngs),
        speed_range,
        flight_range,
    )


def step_mobility(state: MobilityState, dt: float, layout: Layout) -> MobilityState:
    """Advance every UE by ``speed * dt``.

    A UE whose step would leave its cell stays put; it and any UE whose
    flight timer ran out draw a fresh speed, direction and timer.
    """
    if not dt > 0:
        raise ValueError("dt must be > 0")
    step = (state.speed * dt)[:, None] * np.stack(
        [np.cos(state.direction), np.sin(state.direction)], axis=1
    )
    cand = state.position + step
    inside = layout.in_hex(cand - state.home)
    pos = np.where(inside[:, None], cand, state.position)
    speed, direction = state.speed.copy(), state.direction.copy()
    timer = state.timer - dt
    for u in np.flatnonzero(~inside | (timer <= 0)):
        speed[u], direction[u], timer[u] = _redraw(
            state.rngs[u], state.speed_range, state.flight_range
        )
    return dataclasses.replace(state, position=pos, speed=speed, direction=direction, timer=timer)


# --------------------------------------------------------------------------
# metrics


@dataclass
class MetricSeries:
    """Per-TTI delivered rates and scheduler work for one scenario run.

    User columns cover every cell; ``cue_cell``/``d2d_cell`` say which.
    """

    cue_rates: np.ndarray  # (n_tti, cells * N_C) bit/s
    d2d_rates: np.ndarray
    cue_avg: np.ndarray  # running average rates after the last TTI
    d2d_avg: np.ndarray
    wf_calls: np.ndarray  # (n_tti,)
    iterations_used: np.ndarray
    patterns: np.ndarray
    violations: np.ndarray
    cue_cell: np.ndarray
    d2d_cell: np.ndarray

    @property
    def n_tti(self) -> int:
        return self.cue_rates.shape[0]

    def mean_rates(self, tier: str) -> np.ndarray:
        r = self.cue_rates if tier == "cue" else self.d2d_rates
        return r.mean(axis=0) if r.shape[0] else np.zeros(r.shape[1])

    def logsum(self, tier: str) -> float:
        """Sum of ln(time-averaged rate); -inf if some user never got service."""
        m = self.mean_rates(tier)
        if np.any(m <= 0):
            return -math.inf
        return float(np.sum(np.log(m)))

    def throughput(self, tier: str) -> float:
        return float(self.mean_rates(tier).sum())


# --------------------------------------------------------------------------
# simulation


class _World:
    """Gains, interference and rate bookkeeping shared by run and compare."""

    def __init__(self, config: ScenarioConfig):
        self.cfg = config
        self.layout = build_layout(config.inter_site_distance)
        self.params = dataclasses.replace(config.channel, fading=config.fading_mode)
        self.mcs = config.load_mcs()
        self.drop = drop_users(config, self.layout)
        self.k = config.n_subchannels
        seed = config.seed
        nc, nd = len(self.drop.cue_pos), len(self.drop.tx_pos)
        self.bs = self.layout.centers[: config.cells]
        self.bs_fields = [
            ShadowField(
                np.random.SeedSequence(entropy=seed, spawn_key=(_SHADOW_BS, c)),
                self.params.cellular_shadow_std_db,
                self.params.decorrelation_length,
            )
            for c in range(config.cells)
        ]
        self.ue_field = ShadowField(
            np.random.SeedSequence(entropy=seed, spawn_key=(_SHADOW_UE,)),
            self.params.d2d_shadow_std_db,
            self.params.decorrelation_length,
        )
        self.fade_rng = {p: _stream(seed, p) for p in range(_FADE_CUE_BS, _FADE_D2D_RX + 1)}
        cue_home = self.layout.centers[self.drop.cue_cell] if nc else np.zeros((0, 2))
        d2d_home = self.layout.centers[self.drop.d2d_cell] if nd else np.zeros((0, 2))
        self.cue_mob = init_mobility(
            self.drop.cue_pos,
            cue_home,
            [_stream(seed, _MOVE_CUE, u) for u in range(nc)],
            config.speed_range,
            config.flight_range,
        )
        self.d2d_mob = init_mobility(
            self.drop.tx_pos,
            d2d_home,
            [_stream(seed, _MOVE_D2D, u) for u in range(nd)],
            config.speed_range,
            config.flight_range,
        )
        self.rx_pos = self.drop.rx_pos.copy()
        self.cue_avg = np.full(nc, config.initial_avg_rate)
        self.d2d_avg = np.full(nd, config.initial_avg_rate)
        # previous-TTI powers, for inter-cell interference
        self.prev_cue_power = np.zeros((nc, self.k))
        self.prev_d2d_power = np.zeros((nd, self.k))
        self.cells_cue = [np.flatnonzero(self.drop.cue_cell == c) for c in range(config.cells)]
        self.cells_d2d = [np.flatnonzero(self.drop.d2d_cell == c) for c in range(config.cells)]

    # distances honour wrap-around only when there are neighbours to wrap to
    def _dist(self, a, b):
        if self.cfg.cells == 1:
            return np.linalg.norm(np.asarray(b) - np.asarray(a), axis=-1)
        return self.layout.wrap_distance(a, b)

    def _bs_shadow(self, pos):
        # (n, cells): field of each eNB evaluated at the UE's offset from it
        out = np.empty((len(pos), len(self.bs)))
        for c, bs in enumerate(self.bs):
            off = pos - bs if self.cfg.cells == 1 else self.layout.wrap_vector(bs, pos)
            out[:, c] = self.bs_fields[c](off) if len(pos) else 0.0
        return out

    def _ue_shadow(self, a, b):
        # (len(a), len(b)) symmetric UE-UE shadowing
        if not len(a) or not len(b):
            return np.zeros((len(a), len(b)))
        return (self.ue_field(a)[:, None] + self.ue_field(b)[None, :]) / math.sqrt(2.0)

    def _fade(self, purpose, shape):
        n = int(np.prod(shape))
        return draw_fading(self.fade_rng[purpose], n, self.k, self.params.fading).reshape(
            *shape, self.k
        )

    def gains(self):
        """Draw this TTI's gains between every transmitter and receiver."""
        p = self.params
        cue, tx, rx = self.cue_mob.position, self.d2d_mob.position, self.rx_pos
        nc, nd, nb = len(cue), len(tx), len(self.bs)
        g = {}
        g["cue_bs"] = link_gain_matrix(
            self._dist(cue[:, None], self.bs[None]), p, "cellular", self._bs_shadow(cue),
            self._fade(_FADE_CUE_BS, (nc, nb)),
        )
        g["d2d_bs"] = link_gain_matrix(
            self._dist(tx[:, None], self.bs[None]), p, "cellular", self._bs_shadow(tx),
            self._fade(_FADE_D2D_BS, (nd, nb)),
        )
        g["link"] = link_gain_matrix(
            self._dist(tx, rx), p, "d2d", np.diagonal(self._ue_shadow(tx, rx)).copy(),
            self._fade(_FADE_D2D_LINK, (nd,)),
        )
        g["cue_rx"] = link_gain_matrix(
            self._dist(cue[:, None], rx[None]), p, "d2d", self._ue_shadow(cue, rx),
            self._fade(_FADE_CUE_RX, (nc, nd)),
        )
        if self.cfg.cells > 1:
            tx_rx = link_gain_matrix(
                self._dist(tx[:, None], rx[None]), p, "d2d", self._ue_shadow(tx, rx),
                self._fade(_FADE_D2D_RX, (nd, nd)),
            )
            idx = np.arange(nd)
            tx_rx[idx, idx] = g["link"]
            g["tx_rx"] = tx_rx
        return g

    def cell_state(self, c: int, g) -> NetworkState:
        ic, jc = self.cells_cue[c], self.cells_d2d[c]
        k = self.k
        ext_bs = ext_d2d = None
        if self.cfg.cells > 1:
            oc = self.drop.cue_cell != c
            od = self.drop.d2d_cell != c
            ext_bs = np.einsum("uk,uk->k", self.prev_cue_power[oc], g["cue_bs"][oc, c]) + np.einsum(
                "uk,uk->k", self.prev_d2d_power[od], g["d2d_bs"][od, c]
            )
            ext_d2d = np.einsum("uk,ujk->jk", self.prev_cue_power[oc], g["cue_rx"][oc][:, jc]) + np.einsum(
                "uk,ujk->jk", self.prev_d2d_power[od], g["tx_rx"][od][:, jc]
            )
        gt = GainTensor(
            cue_bs=g["cue_bs"][ic, c],
            d2d_link=g["link"][jc],
            cue_d2d=g["cue_rx"][np.ix_(ic, jc)],
            d2d_bs=g["d2d_bs"][jc, c],
            noise_density=self.params.noise_density,
            bandwidth=self.params.bandwidth,
            ext_bs=ext_bs if ext_bs is not None else np.zeros(k),
            ext_d2d=ext_d2d if ext_d2d is not None else np.zeros((len(jc), k)),
        )
        cues = [
            CueUser(n, tuple(self.cue_mob.position[u]), self.cfg.max_power, float(self.cue_avg[u]))
            for n, u in enumerate(ic)
        ]
        d2ds = [
            D2dPair(
                n,
                tuple(self.d2d_mob.position[u]),
                tuple(self.rx_pos[u]),
                self.cfg.max_power,
                float(self.d2d_avg[u]),
            )
            for n, u in enumerate(jc)
        ]
        return NetworkState(cues, d2ds, gt)

    def realized_capacity(self, g, cue_power, d2d_power):
        """MCS-quantised rates (bit/s) given everyone's current powers."""
        p = self.params
        noise = p.noise_density * p.bandwidth
        cc, dc = self.drop.cue_cell, self.drop.d2d_cell
        nc, nd = len(cc), len(dc)
        # received power at each eNB from all transmitters, (cells, K)
        at_bs = np.einsum("uk,uck->ck", cue_power, g["cue_bs"]) + np.einsum(
            "uk,uck->ck", d2d_power, g["d2d_bs"]
        )
        sig_c = cue_power * g["cue_bs"][np.arange(nc), cc]
        sinr_c = sig_c / (noise + np.maximum(at_bs[cc] - sig_c, 0.0))
        if self.cfg.cells > 1:
            at_rx = np.einsum("uk,ujk->jk", cue_power, g["cue_rx"]) + np.einsum(
                "uk,ujk->jk", d2d_power, g["tx_rx"]
            )
        else:
            at_rx = np.einsum("uk,ujk->jk", cue_power, g["cue_rx"]) + d2d_power * g["link"]
        sig_d = d2d_power * g["link"]
        sinr_d = sig_d / (noise + np.maximum(at_rx - sig_d, 0.0))
        return self._quantise(sinr_c, cue_power), self._quantise(sinr_d, d2d_power)

    def _quantise(self, sinr, power):
        if sinr.size == 0:
            return np.zeros(sinr.shape[0])
        with np.errstate(divide="ignore"):
            sinr_db = 10.0 * np.log10(sinr)
        eff = np.where(power > 0, sinr_to_efficiency(sinr_db, self.mcs), 0.0)
        return self.params.bandwidth * eff.sum(axis=1)

    def advance(self, delivered_c, delivered_d, cue_power, d2d_power):
        cfg = self.cfg
        self.cue_avg = np.maximum(update_avg_rates(self.cue_avg, delivered_c, cfg.window), cfg.min_avg_rate)
        self.d2d_avg = np.maximum(update_avg_rates(self.d2d_avg, delivered_d, cfg.window), cfg.min_avg_rate)
        self.prev_cue_power, self.prev_d2d_power = cue_power, d2d_power
        if cfg.mobility:
            old = self.d2d_mob.position
            self.cue_mob = step_mobility(self.cue_mob, cfg.tti_seconds, self.layout)
            self.d2d_mob = step_mobility(self.d2d_mob, cfg.tti_seconds, self.layout)
            # receivers travel with their transmitter
            self.rx_pos = self.rx_pos + (self.d2d_mob.position - old)

    def assemble(self, outcomes: list[ScheduleOutcome]):
        """Scatter per-cell outcomes into global power and rate arrays."""
        nc, nd = len(self.drop.cue_cell), len(self.drop.d2d_cell)
        cue_power, d2d_power = np.zeros((nc, self.k)), np.zeros((nd, self.k))
        sched_c, sched_d = np.zeros(nc), np.zeros(nd)
        for c, out in enumerate(outcomes):
            ic, jc = self.cells_cue[c], self.cells_d2d[c]
            cue_power[ic] = out.allocation.cue_power
            d2d_power[jc] = out.allocation.d2d_power
            sched_c[ic] = out.cue_rates.rates
            sched_d[jc] = out.d2d_rates.rates
        return cue_power, d2d_power, sched_c, sched_d


def _check_enumeration(config: ScenarioConfig) -> None:
    k = config.n_subchannels
    n_pat = count_block_patterns(config.n_cue, k) * count_block_patterns(config.n_d2d, k)
    if n_pat > config.max_patterns:
        raise EnumerationTooLarge(
            n_pat,
            config.max_patterns,
            complexity_estimate("optimal", max(config.n_cue, 1), max(config.n_d2d, 1), k),
        )


def run_scenario(config: ScenarioConfig) -> MetricSeries:
    """Simulate ``config.n_tti`` TTIs and return delivered rates and counters.

    Per TTI: draw gains, schedule every cell, quantise the realised SINR
    through the MCS table, deliver min(scheduled, quantised) and update the
    running averages.
    """
    if config.scheduler == "optimal":
        _check_enumeration(config)
    schedule = phpfs_schedule if config.scheduler == "phpfs" else optimal_pf
    sched_cfg = config.scheduler_config()
    w = _World(config)
    n = config.n_tti
    nc, nd = len(w.drop.cue_cell), len(w.drop.d2d_cell)
    rates_c, rates_d = np.zeros((n, nc)), np.zeros((n, nd))
    wf_calls = np.zeros(n, dtype=np.int64)
    iters = np.zeros(n, dtype=np.int64)
    patterns = np.zeros(n, dtype=np.int64)
    violations = np.zeros(n, dtype=np.int64)
    for t in range(n):
        g = w.gains()
        outcomes = []
        for c in range(config.cells):
            state = w.cell_state(c, g)
            if state.n_cue + state.n_d2d == 0:
                outcomes.append(_idle_outcome(state))
                continue
            out = schedule(state, sched_cfg)
            outcomes.append(out)
            wf_calls[t] += out.op_counter.wf_calls
            patterns[t] += out.op_counter.patterns
            iters[t] = max(iters[t], out.iterations_used)
            if config.validate:
                violations[t] += len(validate_allocation(out.allocation, state))
        cue_power, d2d_power, sched_c, sched_d = w.assemble(outcomes)
        cap_c, cap_d = w.realized_capacity(g, cue_power, d2d_power)
        rates_c[t] = np.minimum(sched_c, cap_c)
        rates_d[t] = np.minimum(sched_d, cap_d)
        w.advance(rates_c[t], rates_d[t], cue_power, d2d_power)
    return MetricSeries(
        rates_c, rates_d, w.cue_avg, w.d2d_avg, wf_calls, iters, patterns, violations,
        w.drop.cue_cell, w.drop.d2d_cell,
    )


def _idle_outcome(state: NetworkState) -> ScheduleOutcome:
    z = np.zeros(0)
    return ScheduleOutcome(
        Allocation.empty(0, 0, state.n_subchannels), RateVector(z, z), RateVector(z, z), 0.0, 1, None
    )


@dataclass(frozen=True)
class CompareRow:
    tti: int
    utility_phpfs: float
    utility_optimal: float

    @property
    def ratio(self) -> float:
        if self.utility_optimal == 0:
            return 1.0 if self.utility_phpfs == 0 else math.nan
        return self.utility_phpfs / self.utility_optimal

    @property
    def dominated(self) -> bool:
        return self.utility_phpfs <= self.utility_optimal + 1e-9


def compare_scenario(config: ScenarioConfig) -> list[CompareRow]:
    """Schedule every TTI with both schedulers on the same state.

    The system itself evolves with the heuristic's decisions; the exhaustive
    optimum is evaluated alongside as a reference. Single-cell only.
    """
    if config.cells != 1:
        raise ValueError("compare runs single-cell scenarios only")
    _check_enumeration(config)
    sched_cfg = config.scheduler_config()
    w = _World(config)
    rows = []
    for t in range(config.n_tti):
        g = w.gains()
        state = w.cell_state(0, g)
        h = phpfs_schedule(state, sched_cfg)
        o = optimal_pf(state, sched_cfg)
        rows.append(CompareRow(t, h.utility, o.utility))
        cue_power, d2d_power, sched_c, sched_d = w.assemble([h])
        cap_c, cap_d = w.realized_capacity(g, cue_power, d2d_power)
        w.advance(np.minimum(sched_c, cap_c), np.minimum(sched_d, cap_d), cue_power, d2d_power)
    return rows


def random_state(
    rng: np.random.Generator,
    n_cue: int,
    n_d2d: int,
    k: int,
    fading: str = "flat",
    params: ChannelParams = ChannelParams(),
    max_power_dbm: float = 23.0,
    avg_rate_range: tuple[float, float] = (1e5, 1e7),
) -> NetworkState:
    """One independent single-cell snapshot: uniform drop, fresh shadowing
    and fading, log-uniform running averages."""
    layout = build_layout(500.0)
    pmax = float(dbm_to_watt(max_power_dbm))
    cue = np.array([_uniform_in_hex(rng, layout, 0.0) for _ in range(n_cue)]).reshape(-1, 2)
    tx = np.array([_uniform_in_hex(rng, layout, 0.0) for _ in range(n_d2d)]).reshape(-1, 2)
    rx = tx + np.array([_uniform_in_annulus(rng, 3.0, 50.0) for _ in range(n_d2d)]).reshape(-1, 2)

    def shadow(std, shape):
        return rng.normal(0.0, std, size=shape)

    s_c, s_d = params.cellular_shadow_std_db, params.d2d_shadow_std_db
    norm = lambda a: np.linalg.norm(a, axis=-1)  # noqa: E731
    gt = GainTensor(
        cue_bs=link_gain_matrix(norm(cue), params, "cellular", shadow(s_c, n_cue), draw_fading(rng, n_cue, k, fading)),
        d2d_link=link_gain_matrix(norm(rx - tx), params, "d2d", shadow(s_d, n_d2d), draw_fading(rng, n_d2d, k, fading)),
        cue_d2d=link_gain_matrix(
            norm(cue[:, None] - rx[None]),
            params,
            "d2d",
            shadow(s_d, (n_cue, n_d2d)),
            draw_fading(rng, n_cue * n_d2d, k, fading).reshape(n_cue, n_d2d, k),
        ),
        d2d_bs=link_gain_matrix(norm(tx), params, "cellular", shadow(s_c, n_d2d), draw_fading(rng, n_d2d, k, fading)),
        noise_density=params.noise_density,
        bandwidth=params.bandwidth,
    )
    lo, hi = np.log10(avg_rate_range)
    cues = [CueUser(i, tuple(cue[i]), pmax, float(10 ** rng.uniform(lo, hi))) for i in range(n_cue)]
    d2ds = [
        D2dPair(j, tuple(tx[j]), tuple(rx[j]), pmax, float(10 ** rng.uniform(lo, hi)))
        for j in range(n_d2d)
    ]
    return NetworkState(cues, d2ds, gt)
