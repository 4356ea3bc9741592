import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from harvestmdp.model import (
    InvalidActionError,
    InvalidSpecError,
    Pmf,
    ProblemSpec,
    RewardPropertyError,
    State,
    check_reward_properties,
    log_reward,
    next_energy,
    reward,
    transition_prob,
)


def make_spec(cap=5, recharge=(0.5, 0.3, 0.2), channels=(5.0, 10.0, 15.0), noise=10.0, discount=0.9):
    n = len(channels)
    return ProblemSpec(cap, Pmf(recharge), channels, Pmf((1 / n,) * n), noise, discount)


class TestPmf:
    def test_accepts_normalized(self):
        assert Pmf((0.25, 0.75)).probabilities == (0.25, 0.75)

    @pytest.mark.parametrize("probs", [(0.5, 0.4), (1.2, -0.2), (0.5, float("nan"), 0.5), ()])
    def test_rejects_bad(self, probs):
        with pytest.raises(InvalidSpecError):
            Pmf(probs)

    def test_tolerance_is_absolute_1e9(self):
        Pmf((0.5, 0.5 + 5e-10))
        with pytest.raises(InvalidSpecError):
            Pmf((0.5, 0.5 + 5e-9))

    def test_mean_and_tail(self):
        p = Pmf((0.5, 0.3, 0.2))
        assert p.mean() == pytest.approx(0.7)
        assert p.mean(start=1) == pytest.approx(1.7)
        assert p.tail(0) == 1.0
        assert p.tail(2) == pytest.approx(0.2)
        assert p.tail(5) == 0.0


class TestProblemSpec:
    def test_fields_and_shape(self):
        spec = make_spec()
        assert spec.shape == (6, 3)
        assert spec.n_states == 18
        assert spec.max_recharge == 2

    @pytest.mark.parametrize(
        "kwargs, field",
        [
            (dict(channels=(5.0, 5.0, 6.0)), "channel_states"),
            (dict(channels=(0.0, 1.0, 2.0)), "channel_states"),
            (dict(noise=0.0), "noise"),
            (dict(discount=1.0), "discount"),
            (dict(discount=0.0), "discount"),
            (dict(cap=-1), "battery_capacity"),
            (dict(cap=2.5), "battery_capacity"),
        ],
    )
    def test_invariants(self, kwargs, field):
        with pytest.raises(InvalidSpecError) as err:
            make_spec(**kwargs)
        assert err.value.field == field

    def test_channel_pmf_length(self):
        with pytest.raises(InvalidSpecError) as err:
            ProblemSpec(3, Pmf((1.0,)), (1.0, 2.0), Pmf((1.0,)), 1.0, 0.5)
        assert err.value.field == "channel_pmf"

    def test_zero_probability_channel_warns(self):
        with pytest.warns(UserWarning, match="zero probability"):
            ProblemSpec(3, Pmf((1.0,)), (1.0, 2.0), Pmf((1.0, 0.0)), 1.0, 0.5)

    def test_immutable(self):
        spec = make_spec()
        with pytest.raises(Exception):
            spec.discount = 0.5
        with pytest.raises(ValueError):
            spec.reward_table[0, 0] = 1.0

    def test_state_validation(self):
        spec = make_spec()
        assert State(5, 3).validate(spec) == (5, 3)
        with pytest.raises(InvalidSpecError):
            State(6, 1).validate(spec)
        with pytest.raises(InvalidSpecError):
            State(0, 0).validate(spec)


class TestReward:
    def test_zero_power(self):
        spec = make_spec()
        assert reward(spec, 2, 0) == 0.0

    def test_reference_parameters(self):
        # noise 10, gain 10, power 10 -> log(11)
        spec = make_spec()
        assert reward(spec, 2, 10) == pytest.approx(math.log(11), abs=1e-12)
        assert reward(spec, 2, 10) == pytest.approx(2.397895, abs=1e-6)

    @pytest.mark.parametrize("power", [1, 2, 7, 50])
    def test_strict_in_channel(self, power):
        spec = make_spec()
        assert reward(spec, 1, power) < reward(spec, 3, power)

    def test_out_of_range_channel(self):
        spec = make_spec()
        with pytest.raises(InvalidActionError):
            reward(spec, 0, 1)
        with pytest.raises(InvalidActionError):
            reward(spec, 4, 1)

    def test_custom_reward_is_used(self):
        spec = make_spec().with_reward(lambda h, p: 2.0 * np.sqrt(np.multiply(h, p)))
        assert reward(spec, 1, 5) == pytest.approx(10.0)
        assert spec.reward_table[0, 5] == pytest.approx(10.0)


class TestNextEnergy:
    @pytest.mark.parametrize(
        "args, expected", [((5, 3, 2, 50), 4), ((50, 0, 56, 50), 50), ((0, 0, 0, 50), 0)]
    )
    def test_examples(self, args, expected):
        assert next_energy(*args) == expected

    def test_overspend(self):
        with pytest.raises(InvalidActionError):
            next_energy(2, 3, 0, 5)

    @given(
        cap=st.integers(0, 30),
        data=st.data(),
    )
    def test_monotone(self, cap, data):
        e = data.draw(st.integers(0, cap))
        p = data.draw(st.integers(0, e))
        x = data.draw(st.integers(0, 40))
        n = next_energy(e, p, x, cap)
        assert 0 <= n <= cap
        if e < cap:
            assert next_energy(e + 1, p, x, cap) >= n
        assert next_energy(e, p, x + 1, cap) >= n
        if p < e:
            assert next_energy(e, p + 1, x, cap) <= n


class TestTransition:
    def test_uniform_recharge_example(self):
        spec = ProblemSpec(4, Pmf((1 / 3, 1 / 3, 1 / 3)), (1.0,), Pmf((1.0,)), 1.0, 0.5)
        # residual 0: next=0 needs X=0
        assert transition_prob(spec, 1, 1, 0) == pytest.approx(1 / 3)
        # enumeration over the support of X
        for n in range(5):
            expected = sum(1 / 3 for x in range(3) if min(0 + x, 4) == n)
            assert transition_prob(spec, 1, 1, n) == pytest.approx(expected)

    def test_full_battery_stays_full_at_zero_power(self):
        spec = make_spec()
        assert transition_prob(spec, 5, 0, 5) == 1.0

    def test_cap_collects_tail(self):
        spec = make_spec(cap=3, recharge=(0.1, 0.2, 0.3, 0.4))
        # residual 2: next 3 when X >= 1
        assert transition_prob(spec, 2, 0, 3) == pytest.approx(0.9)
        assert transition_prob(spec, 2, 0, 2) == pytest.approx(0.1)
        assert transition_prob(spec, 2, 0, 1) == 0.0

    def test_invalid_action(self):
        spec = make_spec()
        with pytest.raises(InvalidActionError):
            transition_prob(spec, 2, 3, 0)
        with pytest.raises(InvalidActionError):
            transition_prob(spec, 2, 1, 6)

    @settings(max_examples=60)
    @given(
        cap=st.integers(0, 12),
        weights=st.lists(st.floats(0.0, 1.0), min_size=1, max_size=15).filter(lambda w: sum(w) > 0.1),
        data=st.data(),
    )
    def test_normalized_and_residual_only(self, cap, weights, data):
        probs = np.asarray(weights) / sum(weights)
        spec = ProblemSpec(cap, Pmf(tuple(probs)), (1.0,), Pmf((1.0,)), 1.0, 0.5)
        e = data.draw(st.integers(0, cap))
        p = data.draw(st.integers(0, e))
        row = [transition_prob(spec, e, p, n) for n in range(cap + 1)]
        assert math.fsum(row) == pytest.approx(1.0, abs=1e-12)
        # shift both energy and power: the kernel only sees e - p
        if e < cap:
            assert [transition_prob(spec, e + 1, p + 1, n) for n in range(cap + 1)] == row
        np.testing.assert_allclose(spec.energy_kernel[e - p], row, atol=1e-15)


class TestRewardProperties:
    H = list(range(1, 18))
    P = list(range(51))

    def test_log_reward_passes_all(self):
        rep = check_reward_properties(log_reward(10.0), self.H, self.P)
        assert rep.passed
        assert rep.independent_of_energy and rep.concave_in_power
        assert rep.increasing_in_channel and rep.increasing_differences

    def test_convex_reward_fails_concavity(self):
        rep = check_reward_properties(lambda h, p: h * p**2, self.H, self.P)
        assert not rep.concave_in_power
        assert rep.concave_witness is not None
        assert rep.increasing_in_channel

    def test_decreasing_in_channel(self):
        rep = check_reward_properties(lambda h, p: -h * p, self.H, self.P)
        assert not rep.increasing_in_channel
        # violation appears only at positive power
        assert rep.channel_witness[2] > 0

    def test_wrong_arity_rejected(self):
        with pytest.raises(TypeError, match="channel_value, power"):
            check_reward_properties(lambda e, h, p: h * p, self.H, self.P)

    def test_non_finite_reports_location(self):
        with pytest.raises(RewardPropertyError, match="channel=1"):
            check_reward_properties(lambda h, p: math.log(p) if p > 0 else float("-inf"), self.H, self.P)

    def test_grids_too_small(self):
        with pytest.raises(ValueError):
            check_reward_properties(log_reward(1.0), [1, 2], self.P)
