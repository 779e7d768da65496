import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize

from d2dpf.waterfill import (
    BLOCKED,
    NoFeasibleChannel,
    OracleTooLarge,
    PreconditionError,
    StairProfile,
    adjacent_waterfill,
    best_start,
    capped_rate_adjust,
    geometric_waterfill,
    stair_rate,
    unconstrained_waterfill,
    waterfill_grid_oracle,
)

depths_st = st.lists(
    st.one_of(st.floats(0.01, 100.0), st.just(BLOCKED)), min_size=1, max_size=6
)


def heights_ok(res, depths):
    h = res.powers[res.block.start : res.block.stop] + depths[res.block.start : res.block.stop]
    return bool(np.all(np.diff(h) >= -1e-12 * h[1:]))


class TestAdjacentWaterfill:
    def test_single_stair(self):
        res = adjacent_waterfill(StairProfile([1.0], 3.0))
        assert res.powers.tolist() == [3.0]
        assert res.water_level == 4.0
        assert res.rate == pytest.approx(2.0)

    def test_two_stairs_match_classic_waterfilling(self):
        res = adjacent_waterfill(StairProfile([1.0, 2.0], 3.0))
        np.testing.assert_allclose(res.powers, [2.0, 1.0])
        assert res.water_level == pytest.approx(3.0)

    def test_flat_stairs_split_equally(self):
        res = adjacent_waterfill(StairProfile([1.0, 1.0, 1.0], 3.0))
        np.testing.assert_allclose(res.powers, [1.0, 1.0, 1.0])

    def test_bandwidth_scales_rate(self):
        res = adjacent_waterfill(StairProfile([1.0], 3.0, bandwidth=180e3))
        assert res.rate == pytest.approx(360e3)

    def test_stairs_before_start_get_nothing(self):
        res = adjacent_waterfill(StairProfile([0.1, 1.0, 1.0], 2.0, start=1))
        assert res.powers[0] == 0.0 and res.block == range(1, 3)

    def test_blocked_start_raises(self):
        with pytest.raises(NoFeasibleChannel):
            adjacent_waterfill(StairProfile([BLOCKED, 1.0], 1.0))

    def test_block_stops_at_blocked_stair(self):
        res = adjacent_waterfill(StairProfile([1.0, BLOCKED, 0.1], 5.0))
        assert res.block == range(0, 1) and res.powers[2] == 0.0

    def test_descending_depth_is_filled_to_the_running_max(self):
        # the second stair can only be used at height >= 5
        res = adjacent_waterfill(StairProfile([5.0, 0.5], 1.0))
        assert res.block == range(0, 1)
        res = adjacent_waterfill(StairProfile([5.0, 0.5], 20.0))
        h = res.powers + np.array([5.0, 0.5])
        assert res.block == range(0, 2) and h[1] >= h[0] - 1e-12

    def test_interior_zero_power_stair_stays_in_block(self):
        # the middle stair sits above the water level; skipping it beats stopping
        d = np.array([1.0, 5.0, 0.01])
        res = adjacent_waterfill(StairProfile(d, 6.0))
        np.testing.assert_allclose(res.powers, [1.01, 0.0, 4.99], atol=1e-12)
        assert res.block == range(0, 3)
        oracle = waterfill_grid_oracle(StairProfile(d, 6.0))
        assert res.rate >= oracle.rate

    def test_literal_mode_alternates_on_flat_stairs(self):
        res = adjacent_waterfill(StairProfile([1.0, 1.0, 1.0], 6.0), mode="literal")
        np.testing.assert_allclose(res.powers, [2.5, 1.0, 2.5], rtol=1e-9)

    @settings(max_examples=300, deadline=None)
    @given(depths_st, st.floats(0.01, 100.0), st.data())
    def test_literal_mode_never_exceeds_budget(self, depths, budget, data):
        d = np.array(depths)
        start = data.draw(st.integers(0, len(d) - 1))
        assume(np.isfinite(d[start]))
        res = adjacent_waterfill(StairProfile(d, budget, start), mode="literal")
        assert np.all(res.powers >= 0)
        assert res.powers.sum() <= budget * (1 + 1e-12)

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            adjacent_waterfill(StairProfile([1.0], 1.0), mode="fast")

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(depths=[], budget=1.0),
            dict(depths=[0.0], budget=1.0),
            dict(depths=[1.0], budget=0.0),
            dict(depths=[1.0], budget=1.0, start=1),
            dict(depths=[np.nan], budget=1.0),
        ],
    )
    def test_profile_validation(self, kwargs):
        with pytest.raises(ValueError):
            StairProfile(**kwargs)

    @settings(max_examples=300, deadline=None)
    @given(depths_st, st.floats(0.01, 100.0), st.data())
    def test_invariants(self, depths, budget, data):
        d = np.array(depths)
        start = data.draw(st.integers(0, len(d) - 1))
        assume(np.isfinite(d[start]))
        res = adjacent_waterfill(StairProfile(d, budget, start))
        assert np.all(res.powers >= 0)
        assert np.all(res.powers[:start] == 0)
        outside = np.ones(len(d), bool)
        outside[res.block.start : res.block.stop] = False
        assert np.all(res.powers[outside] == 0)
        assert res.block.start == start
        assert res.powers.sum() == pytest.approx(budget, rel=1e-9)
        assert heights_ok(res, d)
        assert res.rate == pytest.approx(stair_rate(res.powers, d), rel=1e-9)
        # dropping the ordering and contiguity constraints can only help
        free = d.copy()
        free[:start] = BLOCKED
        p_free = unconstrained_waterfill(free, budget)
        assert res.rate <= stair_rate(p_free, d) * (1 + 1e-9)


class TestBestStart:
    def test_blocked_first_stair(self):
        k, res = best_start([BLOCKED, 1.0, 1.0], 2.0)
        assert k == 1 and res.block == range(1, 3)

    def test_flat_depths_prefer_first_start(self):
        k, res = best_start([1.0, 1.0, 1.0, 1.0], 2.0)
        assert k == 0 and res.block == range(0, 4)

    def test_avoids_deep_first_stair(self):
        k, res = best_start([10.0, 0.1, 0.1], 1.0)
        assert k == 1
        assert res.powers[0] == 0.0
        oracle = max(
            (waterfill_grid_oracle(StairProfile([10.0, 0.1, 0.1], 1.0, s)).rate for s in range(3))
        )
        assert res.rate >= oracle * (1 - 1e-3)

    def test_all_blocked(self):
        with pytest.raises(NoFeasibleChannel):
            best_start([BLOCKED, BLOCKED], 1.0)

    def test_counter_counts_every_start(self):
        calls = [0]
        best_start([BLOCKED, 1.0, BLOCKED, 2.0], 1.0, counter=calls)
        assert calls[0] == 4


class TestGridOracle:
    def test_single_stair_takes_whole_budget(self):
        res = waterfill_grid_oracle(StairProfile([2.0], 5.0))
        assert res.powers[0] == pytest.approx(5.0)

    def test_blocked_only(self):
        with pytest.raises(NoFeasibleChannel):
            waterfill_grid_oracle(StairProfile([BLOCKED, BLOCKED], 1.0))

    def test_refuses_large_profiles(self):
        with pytest.raises(OracleTooLarge):
            waterfill_grid_oracle(StairProfile(np.ones(5), 1.0))

    @pytest.mark.parametrize(
        "depths,budget,expected",
        [([1.0, 2.0], 3.0, [2.0, 1.0]), ([1.0, 1.0, 1.0], 3.0, [1.0, 1.0, 1.0])],
    )
    def test_agrees_with_documented_examples(self, depths, budget, expected):
        res = waterfill_grid_oracle(StairProfile(depths, budget))
        np.testing.assert_allclose(res.powers, expected, atol=budget / 500)


def convex_oracle(weights, budget):
    """SLSQP on max sum ln(1 + r/w) s.t. sum r <= budget, r >= 0."""
    w = np.asarray(weights, float)
    x0 = np.full(w.size, budget / w.size)
    res = minimize(
        lambda r: -np.sum(np.log1p(r / w)),
        x0,
        jac=lambda r: -1.0 / (w + r),
        bounds=[(0, None)] * w.size,
        constraints=[{"type": "ineq", "fun": lambda r: budget - r.sum(), "jac": lambda r: -np.ones_like(r)}],
        method="SLSQP",
        options={"ftol": 1e-14, "maxiter": 500},
    )
    return res.x


class TestGeometricWaterfill:
    def test_two_users(self):
        np.testing.assert_allclose(geometric_waterfill([1.0, 2.0], 10.0), [5.5, 4.5])
        np.testing.assert_allclose(convex_oracle([1.0, 2.0], 10.0), [5.5, 4.5], atol=1e-5)

    def test_equal_weights_split_equally(self):
        np.testing.assert_allclose(geometric_waterfill([3.0] * 4, 8.0), [2.0] * 4)

    def test_zero_budget(self):
        assert geometric_waterfill([1.0, 2.0, 3.0], 0.0).tolist() == [0.0, 0.0, 0.0]

    def test_high_weight_user_left_out(self):
        r = geometric_waterfill([1.0, 100.0], 10.0)
        assert r.tolist() == [10.0, 0.0]

    def test_unsorted_rejected(self):
        with pytest.raises(PreconditionError):
            geometric_waterfill([2.0, 1.0], 1.0)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(0.1, 100.0), min_size=1, max_size=6), st.floats(0.1, 500.0))
    def test_matches_convex_oracle(self, weights, budget):
        w = sorted(weights)
        r = geometric_waterfill(w, budget)
        f = lambda x: np.sum(np.log1p(np.asarray(x) / np.asarray(w)))  # noqa: E731
        assert f(r) >= f(convex_oracle(w, budget)) - 1e-7

    @settings(max_examples=300, deadline=None)
    @given(st.lists(st.floats(0.0, 1e6), min_size=1, max_size=8), st.floats(1e-3, 1e7))
    def test_kkt_and_saturation(self, weights, budget):
        w = np.sort(np.array(weights))
        r = geometric_waterfill(w, budget)
        assert r.sum() == pytest.approx(budget, rel=1e-9)
        assert np.all(np.diff(r) <= 1e-9 * budget)
        served = r > 0
        level = w[served] + r[served]
        np.testing.assert_allclose(level, level[0], rtol=1e-9)
        # unserved users sit at or above the common level
        assert np.all(w[~served] >= level[0] * (1 - 1e-9))


class TestCappedRateAdjust:
    def test_clamp_then_redistribute(self):
        rv = capped_rate_adjust([3.0, 10.0], 10.0, [1.0, 1.0], 2)
        np.testing.assert_allclose(rv.rates, [3.0, 7.0])
        assert rv.clamped_set == frozenset({0})

    def test_infinite_caps_equal_plain_geometric(self):
        w = np.array([1.0, 2.0, 5.0])
        rv = capped_rate_adjust([math.inf] * 3, 9.0, w, 2)
        np.testing.assert_allclose(rv.rates, geometric_waterfill(w, 9.0))

    def test_budget_above_total_caps(self):
        rv = capped_rate_adjust([1.0, 2.0, 3.0], 100.0, [5.0, 1.0, 2.0], 10)
        np.testing.assert_allclose(rv.rates, [1.0, 2.0, 3.0])

    def test_infinite_budget_gives_caps(self):
        rv = capped_rate_adjust([1.0, 0.0, 3.0], math.inf, [5.0, 1.0, 2.0], 10)
        assert rv.rates.tolist() == [1.0, 0.0, 3.0]

    def test_window_one_splits_equally(self):
        rv = capped_rate_adjust([10.0, 10.0], 8.0, [1.0, 50.0], 1)
        np.testing.assert_allclose(rv.rates, [4.0, 4.0])

    @settings(max_examples=300, deadline=None)
    @given(
        st.lists(st.tuples(st.floats(0, 1e3), st.floats(0.01, 1e3)), min_size=1, max_size=8),
        st.floats(0, 5e3),
        st.integers(1, 100),
    )
    def test_caps_respected_and_terminates(self, users, budget, window):
        caps = np.array([c for c, _ in users])
        avg = np.array([a for _, a in users])
        rv = capped_rate_adjust(caps, budget, avg, window)
        assert np.all(rv.rates <= caps * (1 + 1e-12))
        assert np.all(rv.rates >= 0)
        assert rv.rates.sum() <= budget * (1 + 1e-9) + 1e-12
        assert rv.rounds <= len(caps)

    def test_permuting_equal_weight_users(self):
        caps = np.array([2.0, 9.0, 4.0])
        a = capped_rate_adjust(caps, 10.0, [1.0, 1.0, 1.0], 3)
        perm = [2, 0, 1]
        b = capped_rate_adjust(caps[perm], 10.0, [1.0, 1.0, 1.0], 3)
        np.testing.assert_allclose(a.rates[perm], b.rates)
