"""PF schedulers for an SC-FDMA cell with underlay D2D pairs.

``phpfs_schedule`` is the four-phase heuristic: water-filling subchannel
allocation for CUEs, geometric water-filling rate adjustment for CUEs, then
the same two phases for D2D pairs, iterated up to ``M`` times.
``optimal_pf`` searches every per-tier-exclusive contiguous block pattern and
serves as the quality oracle on small instances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .model import (
    Allocation,
    NetworkState,
    RateVector,
    pf_utility,
)
from .waterfill import (
    BLOCKED,
    NoFeasibleChannel,
    StairProfile,
    adjacent_waterfill,
    best_start,
    capped_rate_adjust,
)


class EnumerationTooLarge(RuntimeError):
    def __init__(self, patterns: int, limit: int, estimate: float):
        super().__init__(
            f"optimal PF would enumerate {patterns} block patterns (limit {limit}); "
            f"closed-form complexity {estimate:.3g}"
        )
        self.patterns = patterns
        self.limit = limit
        self.estimate = estimate


class InstrumentationDisabled(RuntimeError):
    pass


@dataclass(frozen=True)
class SchedulerConfig:
    window: int = 100  # T, averaging window in TTIs
    iterations: int = 2  # M
    cue_budget: float = math.inf  # tier rate budget r_c
    d2d_budget: float = math.inf  # tier rate budget r_d
    waterfill_mode: str = "optimal"
    instrument: bool = True
    max_patterns: int = 10**7

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.cue_budget < 0 or self.d2d_budget < 0:
            raise ValueError("tier budgets must be >= 0")


@dataclass
class OpCounter:
    """Work done by one scheduling call."""

    phase1_wf: list[int] = field(default_factory=list)  # per outer iteration
    phase3_wf: list[int] = field(default_factory=list)
    rate_rounds: list[int] = field(default_factory=list)
    patterns: int = 0

    @property
    def wf_calls(self) -> int:
        return sum(self.phase1_wf) + sum(self.phase3_wf)


@dataclass(frozen=True)
class ScheduleOutcome:
    allocation: Allocation
    cue_rates: RateVector
    d2d_rates: RateVector
    utility: float
    iterations_used: int
    op_counter: OpCounter | None = None


def selection_order(avg_rates, window: int) -> list[int]:
    """Users by ascending (T-1) * avg rate, index order on ties.

    At T = 1 every weight is zero, so the averages themselves are used.
    """
    avg = np.asarray(avg_rates, dtype=float)
    key = (window - 1) * avg if window >= 2 else avg
    return [int(u) for u in np.argsort(key, kind="stable")]


def cue_noise_interference(state: NetworkState, d2d_power: np.ndarray) -> np.ndarray:
    """Noise plus interference at the eNB per subchannel, shape (K,)."""
    g = state.gains
    return g.noise_power + g.ext_bs + np.sum(d2d_power * g.d2d_bs, axis=0)


def d2d_noise_interference(state: NetworkState, cue_power: np.ndarray) -> np.ndarray:
    """Noise plus interference at every D2D receiver, shape (N_D, K)."""
    g = state.gains
    cross = np.einsum("ik,ijk->jk", cue_power, g.cue_d2d) if cue_power.size else 0.0
    return g.noise_power + g.ext_d2d + cross


def _depths(noise_interf: np.ndarray, gain: np.ndarray, usable: np.ndarray) -> np.ndarray:
    d = np.full(gain.shape, BLOCKED)
    ok = usable & (gain > 0)
    d[ok] = noise_interf[ok] / gain[ok]
    return d


def _allocate_tier(order, gain, noise_interf, max_power, bandwidth, mode):
    """Sequential water-filling allocation for one tier.

    Each user in ``order`` takes its best contiguous run among subchannels not
    yet taken in this tier. Returns (assign, power, caps, wf_calls).
    """
    n, k = gain.shape
    assign = np.zeros((n, k), dtype=bool)
    power = np.zeros((n, k))
    caps = np.zeros(n)
    free = np.ones(k, dtype=bool)
    calls = [0]
    for u in order:
        depths = _depths(noise_interf[u], gain[u], free)
        try:
            _, res = best_start(depths, max_power[u], bandwidth, mode, counter=calls)
        except NoFeasibleChannel:
            continue
        blk = slice(res.block.start, res.block.stop)
        assign[u, blk] = True
        power[u] = res.powers
        caps[u] = res.rate
        free[blk] = False
    return assign, power, caps, calls[0]


def phpfs_schedule(state: NetworkState, config: SchedulerConfig = SchedulerConfig()) -> ScheduleOutcome:
    """Heuristic PF schedule of one TTI.

    Per outer iteration: CUE subchannel allocation (interference from the
    previous iteration's D2D powers, none on the first pass), CUE rate
    adjustment, D2D subchannel allocation against the fresh CUE powers, D2D
    rate adjustment. Stops after ``config.iterations`` passes or once both
    tiers' assignment matrices repeat.
    """
    k = state.n_subchannels
    if k < 1 or state.n_cue + state.n_d2d < 1:
        raise ValueError("need at least one subchannel and one user")
    T = config.window
    g = state.gains
    bw = g.bandwidth
    avg_c, avg_d = state.cue_avg_rates(), state.d2d_avg_rates()
    pmax_c = [c.max_power for c in state.cues]
    pmax_d = [d.max_power for d in state.d2ds]
    order_c = selection_order(avg_c, T)
    order_d = selection_order(avg_d, T)
    counter = OpCounter() if config.instrument else None

    history: list[Allocation] = []
    d2d_power = np.zeros((state.n_d2d, k))
    t = 1
    while t <= config.iterations:
        if len(history) >= 2 and history[-1].same_pattern(history[-2]):
            break
        ni_c = np.broadcast_to(cue_noise_interference(state, d2d_power), (state.n_cue, k))
        a_c, p_c, caps_c, calls_c = _allocate_tier(
            order_c, g.cue_bs, ni_c, pmax_c, bw, config.waterfill_mode
        )
        rv_c = capped_rate_adjust(caps_c, config.cue_budget, avg_c, T)

        ni_d = d2d_noise_interference(state, p_c)
        a_d, p_d, caps_d, calls_d = _allocate_tier(
            order_d, g.d2d_link, ni_d, pmax_d, bw, config.waterfill_mode
        )
        rv_d = capped_rate_adjust(caps_d, config.d2d_budget, avg_d, T)

        d2d_power = p_d
        history.append(Allocation(a_c, a_d, p_c, p_d))
        if counter is not None:
            counter.phase1_wf.append(calls_c)
            counter.phase3_wf.append(calls_d)
            counter.rate_rounds.append(rv_c.rounds + rv_d.rounds)
        t += 1

    utility = pf_utility(rv_c.rates, rv_d.rates, avg_c, avg_d, T) if T >= 2 else pf_utility(
        rv_c.rates, rv_d.rates, window=1
    )
    return ScheduleOutcome(history[-1], rv_c, rv_d, utility, len(history), counter)


# --------------------------------------------------------------------------
# exhaustive optimum


def count_block_patterns(n_users: int, k: int) -> int:
    """Ways to give each of ``n_users`` labelled users an empty or contiguous
    block of ``k`` subchannels, blocks pairwise disjoint.

    m served users: n!/(n-m)! labelings times C(k+m, 2m) placements of m
    disjoint non-empty intervals.
    """
    total = 0
    for m in range(0, min(n_users, k) + 1):
        total += math.perm(n_users, m) * math.comb(k + m, 2 * m)
    return total


def enumerate_block_patterns(n_users: int, k: int) -> Iterator[tuple]:
    """Yield tuples of per-user blocks ``(start, stop)`` or ``None``.

    User 0 varies slowest; the all-empty pattern comes first.
    """

    def rec(u: int, free: tuple[bool, ...]):
        if u == n_users:
            yield ()
            return
        for rest in rec(u + 1, free):
            yield (None,) + rest
        for a in range(k):
            if not free[a]:
                continue
            for b in range(a + 1, k + 1):
                if not free[b - 1]:
                    break
                taken = free[:a] + (False,) * (b - a) + free[b:]
                for rest in rec(u + 1, taken):
                    yield ((a, b),) + rest

    yield from rec(0, (True,) * k)


def _block_fill(noise_interf_row, gain_row, block, max_power, bandwidth):
    usable = np.zeros(gain_row.size, dtype=bool)
    usable[block[0] : block[1]] = True
    depths = _depths(noise_interf_row, gain_row, usable)
    try:
        return adjacent_waterfill(StairProfile(depths, max_power, block[0], bandwidth))
    except NoFeasibleChannel:
        return None


def _tier_utility(rates, avg, T) -> float:
    if T >= 2:
        return float(np.sum(np.log1p(rates / ((T - 1) * avg))))
    if np.any(rates == 0):
        return -math.inf
    return float(np.sum(np.log(rates)))


def optimal_pf(state: NetworkState, config: SchedulerConfig = SchedulerConfig()) -> ScheduleOutcome:
    """Exhaustive PF optimum over contiguous, per-tier-exclusive blocks.

    Each pattern is evaluated with one interference sweep: CUE powers are
    water-filled inside their blocks first, then D2D powers against that
    CUE interference; rates go through the same capped adjustment as the
    heuristic. The first pattern (enumeration order) attaining the maximum
    wins.
    """
    k = state.n_subchannels
    n_c, n_d = state.n_cue, state.n_d2d
    n_pat = count_block_patterns(n_c, k) * count_block_patterns(n_d, k)
    if n_pat > config.max_patterns:
        raise EnumerationTooLarge(
            n_pat, config.max_patterns, complexity_estimate("optimal", n_c, n_d, k)
        )
    T = config.window
    g = state.gains
    bw = g.bandwidth
    avg_c, avg_d = state.cue_avg_rates(), state.d2d_avg_rates()
    pmax_c = [c.max_power for c in state.cues]
    pmax_d = [d.max_power for d in state.d2ds]
    ni_c = np.broadcast_to(cue_noise_interference(state, np.zeros((n_d, k))), (n_c, k))
    d_patterns = list(enumerate_block_patterns(n_d, k))

    cue_cache: dict = {}
    best = None
    best_val = -math.inf
    evaluated = 0
    for c_pat in enumerate_block_patterns(n_c, k):
        p_c = np.zeros((n_c, k))
        a_c = np.zeros((n_c, k), dtype=bool)
        caps_c = np.zeros(n_c)
        for i, blk in enumerate(c_pat):
            if blk is None:
                continue
            key = (i, blk)
            if key not in cue_cache:
                cue_cache[key] = _block_fill(ni_c[i], g.cue_bs[i], blk, pmax_c[i], bw)
            res = cue_cache[key]
            if res is None:
                continue
            p_c[i] = res.powers
            a_c[i, res.block.start : res.block.stop] = True
            caps_c[i] = res.rate
        rv_c = capped_rate_adjust(caps_c, config.cue_budget, avg_c, T)
        u_c = _tier_utility(rv_c.rates, avg_c, T)

        ni_d = d2d_noise_interference(state, p_c)
        d2d_cache: dict = {}
        for d_pat in d_patterns:
            evaluated += 1
            caps_d = np.zeros(n_d)
            for j, blk in enumerate(d_pat):
                if blk is None:
                    continue
                key = (j, blk)
                if key not in d2d_cache:
                    d2d_cache[key] = _block_fill(ni_d[j], g.d2d_link[j], blk, pmax_d[j], bw)
                res = d2d_cache[key]
                if res is not None:
                    caps_d[j] = res.rate
            rv_d = capped_rate_adjust(caps_d, config.d2d_budget, avg_d, T)
            val = u_c + _tier_utility(rv_d.rates, avg_d, T)
            if best is None or val > best_val:
                best_val = val
                best = (c_pat, d_pat, p_c, a_c, rv_c, rv_d, d2d_cache)

    c_pat, d_pat, p_c, a_c, rv_c, rv_d, d2d_cache = best
    p_d = np.zeros((n_d, k))
    a_d = np.zeros((n_d, k), dtype=bool)
    for j, blk in enumerate(d_pat):
        res = d2d_cache.get((j, blk)) if blk is not None else None
        if res is not None:
            p_d[j] = res.powers
            a_d[j, res.block.start : res.block.stop] = True
    counter = OpCounter(patterns=evaluated) if config.instrument else None
    utility = pf_utility(rv_c.rates, rv_d.rates, avg_c, avg_d, T) if T >= 2 else pf_utility(
        rv_c.rates, rv_d.rates, window=1
    )
    return ScheduleOutcome(Allocation(a_c, a_d, p_c, p_d), rv_c, rv_d, utility, 1, counter)


# --------------------------------------------------------------------------
# complexity accounting


def complexity_estimate(kind: str, n_cue: int, n_d2d: int, k: int, m: int = 1) -> float:
    """Closed-form worst-case operation counts.

    optimal: (N_C + N_D)^K
    phpfs:   (K log2 K + 5K) * (N_C^2 (N_C+1)/2 + N_D^2 (N_D+1)/2) * M
    """
    if kind == "optimal":
        return float((n_cue + n_d2d) ** k)
    if kind == "phpfs":
        per_iter = k * math.log2(k) + 5 * k
        users = n_cue**2 * (n_cue + 1) / 2 + n_d2d**2 * (n_d2d + 1) / 2
        return per_iter * users * m
    raise ValueError(f"unknown scheduler kind {kind!r}")


def count_wf_calls(outcome: ScheduleOutcome) -> dict[str, list[int]]:
    """Per-iteration water-filling calls of the CUE and D2D allocation phases."""
    if outcome.op_counter is None:
        raise InstrumentationDisabled("outcome was produced with instrument=False")
    return {
        "phase1": list(outcome.op_counter.phase1_wf),
        "phase3": list(outcome.op_counter.phase3_wf),
    }
