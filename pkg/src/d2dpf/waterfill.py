"""Water-filling kernels.

Two problems are solved here:

* ``adjacent_waterfill`` / ``best_start``: spread one user's power budget
  over a frequency-contiguous run of subchannels ("stairs") that begins at a
  given start index, with water heights ``p_k + d_k`` non-decreasing along the
  run. ``d_k`` is the stair depth, (noise + interference) / gain.
* ``geometric_waterfill`` / ``capped_rate_adjust``: divide a tier's rate
  budget among users to maximise sum(ln(1 + r_i / w_i)), then clamp users at
  their achievable-rate caps.

Blocked stairs (zero gain, or subchannel already taken) carry depth ``inf``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .model import RateVector

BLOCKED = math.inf
_LN2 = math.log(2.0)


class NoFeasibleChannel(Exception):
    """No stair at or after the start can carry power."""


class OracleTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class StairProfile:
    depths: np.ndarray
    budget: float
    start: int = 0
    bandwidth: float = 1.0

    def __post_init__(self):
        d = np.asarray(self.depths, dtype=float)
        if d.ndim != 1 or d.size < 1:
            raise ValueError("depths must be a non-empty 1-D array")
        if np.any(np.isnan(d)) or np.any(d <= 0):
            raise ValueError("depths must be > 0 (use BLOCKED for unusable stairs)")
        if not self.budget > 0:
            raise ValueError("budget must be > 0")
        if not 0 <= self.start < d.size:
            raise ValueError(f"start {self.start} outside 0..{d.size - 1}")
        if self.bandwidth <= 0:
            raise ValueError("bandwidth must be > 0")
        object.__setattr__(self, "depths", d)


@dataclass(frozen=True)
class WaterfillResult:
    powers: np.ndarray
    water_level: float
    rate: float
    block: range

    @property
    def start(self) -> int:
        return self.block.start


def stair_rate(powers, depths, bandwidth: float = 1.0) -> float:
    """B * sum(log2(1 + p_k / d_k)); blocked stairs contribute nothing."""
    p = np.asarray(powers, dtype=float)
    d = np.asarray(depths, dtype=float)
    used = p > 0
    return float(bandwidth * np.sum(np.log1p(p[used] / d[used])) / _LN2)


def _fill_run(d: list[float], budget: float, s: int):
    """Best monotone-height fill over every run [s..e].

    For a fixed run the feasible heights are exactly the non-decreasing
    sequences lying above the running maximum ``L_k`` of the depths, so the
    optimum is ``h_k = max(mu, L_k)`` with ``mu`` set by the budget. Runs whose
    mandatory fill ``sum(L_k - d_k)`` exceeds the budget are infeasible, and
    so is every longer run. Returns ``(mu, e, m, running_max)`` for the run
    with the highest rate (shortest on ties), where stairs ``s..m`` sit below
    the water level.
    """
    if d[s] == BLOCKED:
        raise NoFeasibleChannel(f"start stair {s} is blocked")
    running = []
    log_d = []
    log_l = []
    cost = 0.0
    sum_d = 0.0
    best = None
    best_val = -math.inf
    cur = 0.0
    for e in range(s, len(d)):
        de = d[e]
        if de == BLOCKED:
            break
        cur = de if de > cur else cur
        cost += cur - de
        if cost > budget:
            break
        running.append(cur)
        log_d.append(math.log(de))
        log_l.append(math.log(cur))
        sum_d += de
        # largest m whose running max stays below the level
        suffix_l = 0.0
        m = e
        while True:
            n_below = m - s + 1
            mu = (budget + sum_d - suffix_l) / n_below
            if mu >= running[m - s] or m == s:
                break
            suffix_l += running[m - s]
            m -= 1
        val = n_below * math.log(mu) - sum(log_d[: n_below]) + sum(
            log_l[n_below:]
        ) - sum(log_d[n_below:])
        # val >= 0; near-ties keep the shorter run
        if best is None or val > best_val * (1 + 1e-12):
            best_val = val
            best = (mu, e, m, list(running))
    if best is None:
        raise NoFeasibleChannel(f"no affordable run from stair {s}")
    return best


def _result_from_fill(d, s, fill, bandwidth) -> WaterfillResult:
    mu, e, _m, running = fill
    powers = np.zeros(len(d))
    for k in range(s, e + 1):
        h = running[k - s]
        h = mu if mu > h else h
        powers[k] = h - d[k]
    depths = np.asarray(d, dtype=float)
    return WaterfillResult(powers, mu, stair_rate(powers, depths, bandwidth), range(s, e + 1))


def _literal_powers(d: list[float], s: int, mu: float) -> np.ndarray:
    p = np.zeros(len(d))
    for k in range(s, len(d)):
        if d[k] == BLOCKED:
            break
        if k == s:
            val = mu - d[k]
        else:
            val = mu - p[k - 1] - d[k - 1] + d[k]
        if val <= 0:
            break
        p[k] = val
    return p


def _literal_waterfill(d: list[float], budget: float, s: int, bandwidth: float):
    if d[s] == BLOCKED:
        raise NoFeasibleChannel(f"start stair {s} is blocked")
    lo, hi = d[s], d[s] + budget
    while _literal_powers(d, s, hi).sum() < budget:
        hi = d[s] + 2 * (hi - d[s])
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        total = _literal_powers(d, s, mid).sum()
        if abs(total - budget) <= 1e-12 * budget:
            lo = hi = mid
            break
        if total < budget:
            lo = mid
        else:
            hi = mid
    # total power is not monotone in mu under this recurrence, so the midpoint
    # can sit past a jump; lo always satisfies total <= budget
    mu = lo
    p = _literal_powers(d, s, mu)
    pos = np.flatnonzero(p > 0)
    block = range(s, int(pos[-1]) + 1) if pos.size else range(s, s)
    return WaterfillResult(p, mu, stair_rate(p, np.asarray(d), bandwidth), block)


def adjacent_waterfill(profile: StairProfile, mode: str = "optimal") -> WaterfillResult:
    """Contiguous, height-monotone water-filling from ``profile.start``.

    ``mode="optimal"`` (default) returns the rate-maximising power vector
    among runs starting at ``start``. ``mode="literal"`` evaluates the
    stair-by-stair recurrence p_k = [mu - p_{k-1} - d_{k-1} + d_k]^+ with
    ``mu`` bisected to spend the budget; kept for comparison only, it
    alternates on flat stairs.
    """
    d = profile.depths.tolist()
    if mode == "optimal":
        fill = _fill_run(d, profile.budget, profile.start)
        return _result_from_fill(d, profile.start, fill, profile.bandwidth)
    if mode == "literal":
        return _literal_waterfill(d, profile.budget, profile.start, profile.bandwidth)
    raise ValueError(f"unknown mode {mode!r}")


def best_start(
    depths,
    budget: float,
    bandwidth: float = 1.0,
    mode: str = "optimal",
    counter: list[int] | None = None,
) -> tuple[int, WaterfillResult]:
    """Try every start index and keep the highest-rate case.

    Ties go to the smallest start. ``counter[0]`` (if given) is incremented
    once per start tried, feasible or not.
    """
    d = np.asarray(depths, dtype=float)
    d_list = d.tolist()
    best: WaterfillResult | None = None
    best_k = -1
    for s in range(len(d_list)):
        if counter is not None:
            counter[0] += 1
        try:
            if mode == "optimal":
                res = _result_from_fill(d_list, s, _fill_run(d_list, budget, s), bandwidth)
            else:
                res = _literal_waterfill(d_list, budget, s, bandwidth)
        except NoFeasibleChannel:
            continue
        if best is None or res.rate > best.rate * (1 + 1e-12):
            best, best_k = res, s
    if best is None:
        raise NoFeasibleChannel("every start is blocked")
    return best_k, best


def unconstrained_waterfill(depths, budget: float) -> np.ndarray:
    """Classic water-filling over all unblocked stairs (no order, no contiguity)."""
    d = np.asarray(depths, dtype=float)
    p = np.zeros_like(d)
    idx = np.flatnonzero(np.isfinite(d))
    if idx.size == 0:
        raise NoFeasibleChannel("every stair is blocked")
    order = idx[np.argsort(d[idx], kind="stable")]
    ds = d[order]
    csum = np.cumsum(ds)
    for n in range(len(ds), 0, -1):
        mu = (budget + csum[n - 1]) / n
        if mu > ds[n - 1]:
            p[order[:n]] = mu - ds[:n]
            break
    return p


class PreconditionError(ValueError):
    pass


def geometric_waterfill(sorted_weights, budget: float) -> np.ndarray:
    """Split a rate budget to maximise sum(ln(1 + r_i / w_i)).

    ``sorted_weights`` must be ascending; they play the role of stair depths.
    The ``i_hat`` lowest-weight users are served, each filled to a common
    level ``w_i + r_i``; the rest get nothing.
    """
    w = np.asarray(sorted_weights, dtype=float)
    if w.ndim != 1:
        raise PreconditionError("weights must be 1-D")
    if np.any(np.diff(w) < 0):
        raise PreconditionError("weights must be sorted ascending")
    if np.any(w < 0) or np.any(np.isnan(w)):
        raise PreconditionError("weights must be non-negative")
    if budget < 0 or math.isnan(budget):
        raise PreconditionError("budget must be >= 0")
    n = w.size
    rates = np.zeros(n)
    if n == 0 or budget == 0:
        return rates
    if math.isinf(budget):
        rates[:] = math.inf
        return rates
    # shortfall[i] = sum_{n<i} (w_i - w_n), built from consecutive gaps
    shortfall = 0.0
    i_hat = 0
    for i in range(1, n):
        shortfall += i * (w[i] - w[i - 1])
        if budget - shortfall > 0:
            i_hat = i
        else:
            break
    gaps = w[i_hat] - w[: i_hat + 1]
    r_top = (budget - gaps.sum()) / (i_hat + 1)
    rates[: i_hat + 1] = r_top + gaps
    return rates


def capped_rate_adjust(caps, budget: float, avg_rates, window: int) -> RateVector:
    """Geometric water-filling with per-user caps.

    Users whose share exceeds their cap are pinned to it and leave the pool;
    the budget shrinks by what they took and the rest is re-divided. Stops
    when no share exceeds its cap or nobody is left.
    """
    caps = np.asarray(caps, dtype=float)
    avg = np.asarray(avg_rates, dtype=float)
    if caps.shape != avg.shape:
        raise PreconditionError("caps and avg_rates differ in length")
    if np.any(caps < 0) or budget < 0:
        raise PreconditionError("caps and budget must be >= 0")
    if window < 1:
        raise PreconditionError("window must be >= 1")
    weights = (window - 1) * avg
    if math.isinf(budget) and np.all(np.isfinite(caps)):
        # every share is unbounded, so everyone is pinned in the first round
        return RateVector(caps.copy(), caps, frozenset(range(caps.size)), 1 if caps.size else 0)
    active = [int(u) for u in np.argsort(weights, kind="stable")]
    rates = np.zeros(caps.size)
    clamped: set[int] = set()
    rounds = 0
    while active:
        rounds += 1
        share = geometric_waterfill(weights[active], budget)
        over = [u for u, r in zip(active, share) if r > caps[u]]
        if not over:
            rates[active] = share
            break
        for u in over:
            rates[u] = caps[u]
            clamped.add(u)
        over_set = set(over)
        active = [u for u in active if u not in over_set]
        budget = max(budget - float(caps[over].sum()), 0.0)
    return RateVector(rates, caps, frozenset(clamped), rounds)


@lru_cache(maxsize=32)
def _cut_points(n: int, length: int) -> np.ndarray:
    """All strictly increasing ``length``-tuples from 1..n, one per row."""
    flat = np.fromiter(
        itertools.chain.from_iterable(itertools.combinations(range(1, n + 1), length)),
        dtype=np.int64,
    )
    return flat.reshape(-1, length)


_ORACLE_STEPS = {1: 2000, 2: 600, 3: 100, 4: 50}


def _oracle_feasible_rates(p: np.ndarray, d: np.ndarray, bandwidth: float) -> np.ndarray:
    h = p + d
    ok = np.all(np.diff(h, axis=1) >= -1e-12 * h[:, 1:], axis=1) if p.shape[1] > 1 else np.ones(len(p), bool)
    rate = bandwidth * np.sum(np.log1p(p / d), axis=1) / _LN2
    return np.where(ok, rate, -np.inf)


def waterfill_grid_oracle(profile: StairProfile, refine: int = 2) -> WaterfillResult:
    """Brute-force reference for ``adjacent_waterfill`` (tests only).

    Enumerates every power vector on a grid of ``budget / n`` steps whose
    positive entries form a run starting at ``profile.start`` with
    non-decreasing heights, then polishes the best point with ``refine``
    rounds of a 10x finer local grid. Limited to K <= 4.
    """
    d_all = profile.depths
    k_total = d_all.size
    if k_total > 4:
        raise OracleTooLarge(f"grid oracle handles K <= 4, got {k_total}")
    s = profile.start
    usable = []
    for k in range(s, k_total):
        if not np.isfinite(d_all[k]):
            break
        usable.append(k)
    if not usable:
        raise NoFeasibleChannel("start stair is blocked")
    budget = profile.budget
    best_rate, best_p = -np.inf, None
    for length in range(1, len(usable) + 1):
        d = d_all[s : s + length]
        n = _ORACLE_STEPS[length]
        step = budget / n
        p = _cut_points(n, length).astype(float)
        p[:, 1:] = np.diff(p, axis=1)
        p *= step
        rates = _oracle_feasible_rates(p, d, profile.bandwidth)
        i = int(np.argmax(rates))
        if rates[i] > best_rate:
            best_rate, best_p, best_step = rates[i], p[i].copy(), step
    for _ in range(refine):
        length = best_p.size
        d = d_all[s : s + length]
        fine = best_step / 10
        offsets = np.arange(-10, 11) * fine
        grids = np.meshgrid(*([offsets] * length), indexing="ij")
        cand = best_p + np.stack([g.ravel() for g in grids], axis=1)
        cand = cand[np.all(cand > 0, axis=1) & (cand.sum(axis=1) <= budget * (1 + 1e-12))]
        if cand.size:
            rates = _oracle_feasible_rates(cand, d, profile.bandwidth)
            i = int(np.argmax(rates))
            if rates[i] > best_rate:
                best_rate, best_p = rates[i], cand[i].copy()
        best_step = fine
    powers = np.zeros(k_total)
    powers[s : s + best_p.size] = best_p
    block = range(s, s + best_p.size)
    level = float(np.max(powers[s : s + best_p.size] + d_all[s : s + best_p.size]))
    return WaterfillResult(powers, level, float(best_rate), block)
