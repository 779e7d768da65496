"""Domain types shared by the schedulers, plus the PF utility metric.

Indices are dense and 0-based throughout: CUE ``i`` is row ``i`` of every
CUE-indexed array, subchannel ``k`` is column ``k``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

Point = tuple[float, float]


class StructuralError(ValueError):
    """Array shapes of an allocation do not match the network."""


@dataclass(frozen=True)
class CueUser:
    id: int
    position: Point
    max_power: float  # W
    avg_rate: float  # bit/s

    def __post_init__(self):
        if self.max_power <= 0:
            raise ValueError(f"CUE {self.id}: max_power must be > 0")
        if self.avg_rate < 0:
            raise ValueError(f"CUE {self.id}: avg_rate must be >= 0")


@dataclass(frozen=True)
class D2dPair:
    id: int
    tx_position: Point
    rx_position: Point
    max_power: float
    avg_rate: float

    def __post_init__(self):
        if tuple(self.tx_position) == tuple(self.rx_position):
            raise ValueError(f"D2D pair {self.id}: tx and rx coincide")
        if self.max_power <= 0:
            raise ValueError(f"D2D pair {self.id}: max_power must be > 0")
        if self.avg_rate < 0:
            raise ValueError(f"D2D pair {self.id}: avg_rate must be >= 0")


@dataclass(frozen=True)
class GainTensor:
    """Linear power gains of every link the schedulers look at.

    ``cue_bs[i, k]``      CUE i -> eNB
    ``d2d_link[j, k]``    D2D tx j -> D2D rx j
    ``cue_d2d[i, j, k]``  CUE i -> D2D rx j (interference)
    ``d2d_bs[j, k]``      D2D tx j -> eNB (interference)

    ``ext_bs`` and ``ext_d2d`` hold interference power (W) arriving from
    outside the cell, zero in single-cell runs.
    """

    cue_bs: np.ndarray
    d2d_link: np.ndarray
    cue_d2d: np.ndarray
    d2d_bs: np.ndarray
    noise_density: float  # W/Hz, noise figure included
    bandwidth: float  # Hz per subchannel
    ext_bs: np.ndarray | None = None
    ext_d2d: np.ndarray | None = None

    def __post_init__(self):
        if self.cue_bs.ndim != 2 or self.d2d_link.ndim != 2:
            raise ValueError("cue_bs and d2d_link must be 2-D (users x subchannels)")
        k = self.cue_bs.shape[1]
        if k < 1:
            raise ValueError("need at least one subchannel")
        n_c, n_d = self.cue_bs.shape[0], self.d2d_link.shape[0]
        expected = {
            "cue_bs": (n_c, k),
            "d2d_link": (n_d, k),
            "cue_d2d": (n_c, n_d, k),
            "d2d_bs": (n_d, k),
        }
        for name, shape in expected.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)) or np.any(arr < 0):
                raise ValueError(f"{name} must be finite and non-negative")
        if self.noise_density <= 0 or self.bandwidth <= 0:
            raise ValueError("noise_density and bandwidth must be positive")
        if self.ext_bs is None:
            object.__setattr__(self, "ext_bs", np.zeros(k))
        if self.ext_d2d is None:
            object.__setattr__(self, "ext_d2d", np.zeros((n_d, k)))

    @property
    def n_subchannels(self) -> int:
        return self.cue_bs.shape[1]

    @property
    def noise_power(self) -> float:
        """Thermal noise per subchannel, N_0 * B."""
        return self.noise_density * self.bandwidth


@dataclass(frozen=True)
class NetworkState:
    """Everything a scheduler needs for one scheduling instant in one cell."""

    cues: tuple[CueUser, ...]
    d2ds: tuple[D2dPair, ...]
    gains: GainTensor

    def __post_init__(self):
        object.__setattr__(self, "cues", tuple(self.cues))
        object.__setattr__(self, "d2ds", tuple(self.d2ds))
        if [c.id for c in self.cues] != list(range(len(self.cues))):
            raise ValueError("CUE ids must be 0..N_C-1 in order")
        if [d.id for d in self.d2ds] != list(range(len(self.d2ds))):
            raise ValueError("D2D ids must be 0..N_D-1 in order")
        if self.gains.cue_bs.shape[0] != len(self.cues):
            raise ValueError("gain tensor CUE dimension mismatch")
        if self.gains.d2d_link.shape[0] != len(self.d2ds):
            raise ValueError("gain tensor D2D dimension mismatch")

    @property
    def n_cue(self) -> int:
        return len(self.cues)

    @property
    def n_d2d(self) -> int:
        return len(self.d2ds)

    @property
    def n_subchannels(self) -> int:
        return self.gains.n_subchannels

    def cue_avg_rates(self) -> np.ndarray:
        return np.array([c.avg_rate for c in self.cues], dtype=float)

    def d2d_avg_rates(self) -> np.ndarray:
        return np.array([d.avg_rate for d in self.d2ds], dtype=float)


@dataclass(frozen=True)
class Allocation:
    """Per-tier binary assignment matrices and per-subchannel powers (W)."""

    cue_assign: np.ndarray
    d2d_assign: np.ndarray
    cue_power: np.ndarray
    d2d_power: np.ndarray

    @classmethod
    def empty(cls, n_cue: int, n_d2d: int, k: int) -> "Allocation":
        return cls(
            np.zeros((n_cue, k), dtype=bool),
            np.zeros((n_d2d, k), dtype=bool),
            np.zeros((n_cue, k)),
            np.zeros((n_d2d, k)),
        )

    def cue_block(self, i: int) -> range:
        return _block_of(self.cue_assign[i])

    def d2d_block(self, j: int) -> range:
        return _block_of(self.d2d_assign[j])

    def same_pattern(self, other: "Allocation") -> bool:
        return bool(
            np.array_equal(self.cue_assign, other.cue_assign)
            and np.array_equal(self.d2d_assign, other.d2d_assign)
        )


def _block_of(row: np.ndarray) -> range:
    idx = np.flatnonzero(row)
    if idx.size == 0:
        return range(0)
    return range(int(idx[0]), int(idx[-1]) + 1)


@dataclass(frozen=True)
class RateVector:
    """Post-adjustment rates, the caps they were clamped against, and the
    set of users whose rate ended up pinned at its cap."""

    rates: np.ndarray
    caps: np.ndarray
    clamped_set: frozenset[int] = field(default_factory=frozenset)
    rounds: int = 0

    def __post_init__(self):
        object.__setattr__(self, "rates", np.asarray(self.rates, dtype=float))
        object.__setattr__(self, "caps", np.asarray(self.caps, dtype=float))


@dataclass(frozen=True)
class Violation:
    kind: str  # "exclusivity" | "adjacency" | "power" | "budget"
    tier: str  # "cue" | "d2d"
    user: int | None
    subchannel: int | None
    detail: str = ""

    def __str__(self) -> str:
        where = []
        if self.user is not None:
            where.append(f"user {self.user}")
        if self.subchannel is not None:
            where.append(f"subchannel {self.subchannel}")
        return f"{self.kind} ({self.tier}, {', '.join(where)}) {self.detail}".strip()


def validate_allocation(
    alloc: Allocation, state: NetworkState, rtol: float = 1e-9
) -> list[Violation]:
    """List every constraint an allocation breaks; empty means valid.

    Checks per-tier exclusivity, contiguity of each user's subchannels,
    power only where assigned, and each user's total power cap.
    """
    k = state.n_subchannels
    tiers = (
        ("cue", alloc.cue_assign, alloc.cue_power, [c.max_power for c in state.cues]),
        ("d2d", alloc.d2d_assign, alloc.d2d_power, [d.max_power for d in state.d2ds]),
    )
    out: list[Violation] = []
    for tier, assign, power, caps in tiers:
        n = len(caps)
        if assign.shape != (n, k) or power.shape != (n, k):
            raise StructuralError(
                f"{tier} arrays have shapes {assign.shape}/{power.shape}, expected {(n, k)}"
            )
        assign = assign.astype(bool)
        holders = assign.sum(axis=0)
        for sc in np.flatnonzero(holders > 1):
            users = np.flatnonzero(assign[:, sc]).tolist()
            out.append(Violation("exclusivity", tier, None, int(sc), f"held by {users}"))
        for u in range(n):
            idx = np.flatnonzero(assign[u])
            if idx.size and idx[-1] - idx[0] + 1 != idx.size:
                gaps = sorted(set(range(idx[0], idx[-1] + 1)) - set(idx.tolist()))
                out.append(Violation("adjacency", tier, u, int(gaps[0]), f"gaps at {gaps}"))
            for sc in np.flatnonzero((power[u] != 0) & ~assign[u]):
                out.append(Violation("power", tier, u, int(sc), "power on unassigned subchannel"))
            for sc in np.flatnonzero(power[u] < 0):
                out.append(Violation("power", tier, u, int(sc), "negative power"))
            total = float(power[u].sum())
            if total > caps[u] * (1 + rtol):
                out.append(Violation("budget", tier, u, None, f"{total:g} W > {caps[u]:g} W"))
    return out


NEG_INF = -math.inf


def pf_utility(
    rates_cue: Sequence[float],
    rates_d2d: Sequence[float],
    avg_cue: Sequence[float] | None = None,
    avg_d2d: Sequence[float] | None = None,
    window: int = 1,
) -> float:
    """Proportional-fair objective of one schedule.

    ``window == 1``: sum of ln(r); any zero rate gives ``-inf``.
    ``window >= 2``: sum of ln(1 + r / ((T - 1) * avg)).
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    rates = np.concatenate([np.asarray(rates_cue, float), np.asarray(rates_d2d, float)])
    if np.any(rates < 0) or np.any(np.isnan(rates)):
        raise ValueError("rates must be non-negative")
    if window == 1:
        if np.any(rates == 0):
            return NEG_INF
        return float(np.sum(np.log(rates)))
    if avg_cue is None or avg_d2d is None:
        raise ValueError("average rates are required when window >= 2")
    avg = np.concatenate([np.asarray(avg_cue, float), np.asarray(avg_d2d, float)])
    if avg.shape != rates.shape:
        raise ValueError("rates and average rates differ in length")
    if np.any(avg <= 0):
        raise ValueError("average rates must be > 0 when window >= 2")
    return float(np.sum(np.log1p(rates / ((window - 1) * avg))))


def update_avg_rates(avg, achieved, window: int) -> np.ndarray:
    """Exponential moving average with time constant ``window`` TTIs."""
    if window < 1:
        raise ValueError("window must be >= 1")
    avg = np.asarray(avg, dtype=float)
    achieved = np.asarray(achieved, dtype=float)
    return (1.0 - 1.0 / window) * avg + achieved / window
