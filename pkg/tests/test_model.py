import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from d2dpf.model import (
    Allocation,
    CueUser,
    D2dPair,
    GainTensor,
    NetworkState,
    StructuralError,
    pf_utility,
    update_avg_rates,
    validate_allocation,
)

from conftest import make_state


def alloc_from_sets(state, cue_sets, power=0.1):
    k = state.n_subchannels
    a = Allocation.empty(state.n_cue, state.n_d2d, k)
    for i, s in enumerate(cue_sets):
        for sc in s:
            a.cue_assign[i, sc] = True
            a.cue_power[i, sc] = power
    return a


@pytest.fixture
def two_cue_state():
    return make_state(np.ones((2, 5)), np.zeros((0, 5)))


def test_contiguous_disjoint_blocks_are_valid(two_cue_state):
    # 1-based {2,3,4} and {5}
    a = alloc_from_sets(two_cue_state, [{1, 2, 3}, {4}])
    assert validate_allocation(a, two_cue_state) == []


def test_gap_is_an_adjacency_violation(two_cue_state):
    a = alloc_from_sets(two_cue_state, [{0, 2}, set()])
    v = validate_allocation(a, two_cue_state)
    assert [(x.kind, x.user, x.subchannel) for x in v] == [("adjacency", 0, 1)]


def test_shared_subchannel_is_an_exclusivity_violation(two_cue_state):
    a = alloc_from_sets(two_cue_state, [{1}, {1}])
    v = validate_allocation(a, two_cue_state)
    assert [(x.kind, x.subchannel) for x in v] == [("exclusivity", 1)]


def test_budget_and_stray_power(two_cue_state):
    a = alloc_from_sets(two_cue_state, [{0, 1}, set()], power=0.6)
    a.cue_power[1, 3] = 0.1
    kinds = sorted(x.kind for x in validate_allocation(a, two_cue_state))
    assert kinds == ["budget", "power"]


def test_shape_mismatch_is_structural(two_cue_state):
    a = Allocation.empty(3, 0, 5)
    with pytest.raises(StructuralError):
        validate_allocation(a, two_cue_state)


def naive_violations(assign, power, caps):
    """Independent pairwise check: (kind, user-or-None, subchannel-or-None) set."""
    out = set()
    n, k = assign.shape
    for sc in range(k):
        if sum(assign[u, sc] for u in range(n)) > 1:
            out.add(("exclusivity", None, sc))
    for u in range(n):
        held = [sc for sc in range(k) if assign[u, sc]]
        if held:
            for sc in range(held[0], held[-1] + 1):
                if not assign[u, sc]:
                    out.add(("adjacency", u))
                    break
        for sc in range(k):
            if power[u, sc] != 0 and not assign[u, sc]:
                out.add(("power", u, sc))
        if sum(power[u]) > caps[u] * (1 + 1e-9):
            out.add(("budget", u))
    return out


@settings(max_examples=200, deadline=None)
@given(
    st.integers(1, 4).flatmap(
        lambda n: st.integers(1, 5).flatmap(
            lambda k: st.tuples(
                st.lists(st.lists(st.booleans(), min_size=k, max_size=k), min_size=n, max_size=n),
                st.lists(
                    st.lists(st.sampled_from([0.0, 0.2, 0.5]), min_size=k, max_size=k),
                    min_size=n,
                    max_size=n,
                ),
            )
        )
    )
)
def test_validator_agrees_with_naive_check(data):
    assign_l, power_l = data
    assign = np.array(assign_l, dtype=bool)
    power = np.array(power_l)
    n, k = assign.shape
    state = make_state(np.ones((n, k)), np.zeros((0, k)))
    alloc = Allocation(assign, np.zeros((0, k), bool), power, np.zeros((0, k)))
    got = set()
    for v in validate_allocation(alloc, state):
        if v.kind == "exclusivity":
            got.add((v.kind, None, v.subchannel))
        elif v.kind == "power":
            got.add((v.kind, v.user, v.subchannel))
        else:
            got.add((v.kind, v.user))
    assert got == naive_violations(assign, power, [1.0] * n)


class TestPfUtility:
    def test_window_one_sum_of_logs(self):
        assert pf_utility([math.e, math.e], []) == pytest.approx(2.0)

    def test_window_two_rates_equal_averages(self):
        u = pf_utility([3.0, 5.0], [], [3.0, 5.0], [], window=2)
        assert u == pytest.approx(2 * math.log(2))

    def test_window_two_all_zero(self):
        assert pf_utility([0.0, 0.0], [0.0], [1.0, 2.0], [3.0], window=2) == 0.0

    def test_zero_rate_at_window_one_is_minus_inf(self):
        assert pf_utility([1.0, 0.0], []) == -math.inf

    def test_negative_rate_rejected(self):
        with pytest.raises(ValueError):
            pf_utility([-1.0], [])

    def test_nonpositive_average_rejected(self):
        with pytest.raises(ValueError):
            pf_utility([1.0], [], [0.0], [], window=3)

    @settings(max_examples=100, deadline=None)
    @given(
        st.lists(st.floats(0.01, 1e6), min_size=1, max_size=5),
        st.integers(1, 50),
        st.data(),
    )
    def test_strictly_increasing_in_each_rate(self, rates, window, data):
        avg = [1.0 + r for r in rates]
        i = data.draw(st.integers(0, len(rates) - 1))
        bumped = list(rates)
        bumped[i] *= 1.01
        assert pf_utility(bumped, [], avg, [], window) > pf_utility(rates, [], avg, [], window)


class TestAverageUpdate:
    @pytest.mark.parametrize(
        "avg,r,T,expected", [(0.0, 10.0, 10, 1.0), (5.0, 5.0, 7, 5.0), (4.0, 8.0, 2, 6.0)]
    )
    def test_examples(self, avg, r, T, expected):
        assert update_avg_rates([avg], [r], T)[0] == pytest.approx(expected)

    def test_window_zero_rejected(self):
        with pytest.raises(ValueError):
            update_avg_rates([1.0], [1.0], 0)

    @given(st.floats(0, 1e9), st.floats(0, 1e9), st.integers(1, 1000))
    def test_convex_combination(self, avg, r, T):
        out = update_avg_rates([avg], [r], T)[0]
        assert min(avg, r) * (1 - 1e-12) <= out <= max(avg, r) * (1 + 1e-12)
        assert out >= 0


class TestDomainTypes:
    def test_user_invariants(self):
        with pytest.raises(ValueError):
            CueUser(0, (0, 0), 0.0, 1.0)
        with pytest.raises(ValueError):
            CueUser(0, (0, 0), 1.0, -1.0)
        with pytest.raises(ValueError):
            D2dPair(0, (1, 1), (1, 1), 1.0, 1.0)

    def test_gain_tensor_rejects_bad_gains(self):
        with pytest.raises(ValueError):
            GainTensor(np.array([[-1.0]]), np.zeros((0, 1)), np.zeros((1, 0, 1)), np.zeros((0, 1)), 1.0, 1.0)
        with pytest.raises(ValueError):
            GainTensor(np.array([[np.inf]]), np.zeros((0, 1)), np.zeros((1, 0, 1)), np.zeros((0, 1)), 1.0, 1.0)
        with pytest.raises(ValueError):
            GainTensor(np.zeros((1, 0)), np.zeros((0, 0)), np.zeros((1, 0, 0)), np.zeros((0, 0)), 1.0, 1.0)

    def test_ids_must_be_dense(self):
        g = GainTensor(np.ones((1, 2)), np.zeros((0, 2)), np.zeros((1, 0, 2)), np.zeros((0, 2)), 1.0, 1.0)
        with pytest.raises(ValueError):
            NetworkState([CueUser(1, (0, 0), 1.0, 1.0)], [], g)
