import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from obcsaa import channel as ch
from obcsaa.errors import ChannelError, ConstraintError, InfeasibleError, ParameterError, ShapeError


def workers_of(ks, pmax=10.0):
    return [ch.WorkerProfile(int(k), pmax) for k in ks]


def test_gains_are_deterministic_and_positive():
    a = ch.draw_channel_gains(10, seed=3, round_index=4)
    b = ch.draw_channel_gains(10, seed=3, round_index=4)
    np.testing.assert_array_equal(a.gains, b.gains)
    assert np.all(a.gains > 0)
    assert not np.array_equal(a.gains, ch.draw_channel_gains(10, seed=3, round_index=5).gains)


def test_gain_mean_matches_folded_normal():
    g = ch.draw_channel_gains(100_000, seed=1).gains
    assert abs(g.mean() / math.sqrt(2 / math.pi) - 1) < 0.01


def test_gains_reject_empty():
    with pytest.raises(ParameterError):
        ch.draw_channel_gains(0, seed=1)


def test_power_factor_examples():
    w = ch.WorkerProfile(3000, 10.0)
    assert ch.power_control_factor(w, 0, 1e-4, 0.3) == 0.0
    b = 0.1 * math.sqrt(10) / 3000
    p = ch.power_control_factor(w, 1, b, 0.1)
    assert p == pytest.approx(math.sqrt(10), rel=1e-12)
    assert p**2 <= 10 + ch.POWER_TOL
    p = ch.power_control_factor(w, 1, 1.054e-4, 0.1)
    assert p == pytest.approx(3.162, abs=1e-3)


def test_power_factor_rejects_bad_gain():
    with pytest.raises(ChannelError):
        ch.power_control_factor(ch.WorkerProfile(1), 1, 1.0, 0.0)


def test_single_worker_superposition():
    chan = ch.ChannelRound(np.array([1.0]), 0.0)
    d = ch.SchedulingDecision(np.array([1]), 0.01)
    y = ch.aggregate_over_air([np.array([1.0, -1.0])], chan, workers_of([10]), d, noise_seed=0)
    np.testing.assert_allclose(y, [0.1, -0.1], rtol=1e-15)


def test_opposite_updates_cancel():
    c = np.array([1.0, -1.0, 1.0, 1.0])
    chan = ch.ChannelRound(np.array([1.0, 2.0]), 0.0)
    d = ch.SchedulingDecision(np.array([1, 1]), 1e-3)
    y = ch.aggregate_over_air([c, -c], chan, workers_of([50, 50]), d, noise_seed=0)
    np.testing.assert_array_equal(y, 0.0)


def test_noise_variance_matches_configuration():
    s = 100_000
    c = np.ones(s)
    chan = ch.ChannelRound(np.array([1.0]), 1e-4)
    d = ch.SchedulingDecision(np.array([1]), 1e-4)
    y = ch.aggregate_over_air([c], chan, workers_of([3000]), d, noise_seed=12)
    noise = y - 3000 * 1e-4 * c
    assert abs(noise.var() / 1e-4 - 1) < 0.05


def test_infeasible_decision_is_refused():
    chan = ch.ChannelRound(np.array([0.1]), 0.0)
    d = ch.SchedulingDecision(np.array([1]), 2e-4)
    with pytest.raises(ConstraintError):
        ch.aggregate_over_air([np.ones(3)], chan, workers_of([3000]), d, noise_seed=0)


def test_length_mismatch_is_refused():
    chan = ch.ChannelRound(np.array([1.0, 1.0]), 0.0)
    d = ch.SchedulingDecision(np.array([1, 0]), 1e-4)
    with pytest.raises(ShapeError):
        ch.aggregate_over_air([np.ones(3)], chan, workers_of([1, 1]), d, noise_seed=0)
    with pytest.raises(ShapeError):
        ch.aggregate_over_air([np.ones(3), None], chan, workers_of([1]), d, noise_seed=0)


def test_empty_schedule_is_not_a_decision():
    with pytest.raises(InfeasibleError):
        ch.SchedulingDecision(np.array([0, 0]), 1.0)


def test_post_process_single_worker_returns_signs():
    c = np.array([1.0, -1.0, -1.0])
    w = workers_of([37])
    d = ch.SchedulingDecision(np.array([1]), 0.02)
    y = ch.aggregate_over_air([c], ch.ChannelRound(np.array([1.0]), 0.0), w, d, 0)
    np.testing.assert_allclose(ch.post_process(y, w, d), c, rtol=1e-15)


def test_post_process_with_noise_matches_formula():
    rng = np.random.default_rng(0)
    u, s = 4, 50
    ks = rng.integers(10, 100, u)
    w = workers_of(ks)
    gains = rng.uniform(0.5, 1.5, u)
    beta = np.array([1, 0, 1, 1])
    b = 1e-3
    d = ch.SchedulingDecision(beta, b)
    cs = [np.where(rng.random(s) < 0.5, -1.0, 1.0) for _ in range(u)]
    sigma2 = 0.3
    y = ch.aggregate_over_air(cs, ch.ChannelRound(gains, sigma2), w, d, noise_seed=77)
    z = np.random.default_rng(77).normal(0.0, math.sqrt(sigma2), s)
    denom = sum(ks[i] * beta[i] * b for i in range(u))
    expected = sum(ks[i] * beta[i] * cs[i] for i in range(u)) / sum(ks[i] * beta[i] for i in range(u)) + z / denom
    np.testing.assert_allclose(ch.post_process(y, w, d), expected, rtol=1e-10, atol=1e-12)


def test_unscheduled_updates_are_ignored():
    w = workers_of([5, 7])
    chan = ch.ChannelRound(np.array([1.0, 1.0]), 0.2)
    d = ch.SchedulingDecision(np.array([1, 0]), 1e-2)
    a = ch.aggregate_over_air([np.ones(4), None], chan, w, d, 3)
    b = ch.aggregate_over_air([np.ones(4), -np.ones(4)], chan, w, d, 3)
    np.testing.assert_array_equal(a, b)


def test_snr_conversion():
    assert ch.snr_db_to_noise_variance(5.0, 10.0) == pytest.approx(10 / 10**0.5)
    assert ch.snr_db_to_noise_variance(0.0, 10.0) == pytest.approx(10.0)


@st.composite
def noise_free_round(draw):
    u = draw(st.integers(1, 6))
    s = draw(st.integers(1, 30))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    ks = rng.integers(1, 5000, u)
    gains = rng.uniform(0.01, 3.0, u)
    beta = rng.integers(0, 2, u)
    beta[rng.integers(u)] = 1
    pmax = rng.uniform(0.5, 20.0, u)
    sel = beta.astype(bool)
    b_max = float(np.min(gains[sel] * np.sqrt(pmax[sel]) / ks[sel]))
    b = b_max * draw(st.floats(0.01, 1.0))
    cs = [np.where(rng.random(s) < 0.5, -1.0, 1.0) for _ in range(u)]
    w = [ch.WorkerProfile(int(k), float(p)) for k, p in zip(ks, pmax)]
    return w, ch.ChannelRound(gains, 0.0), ch.SchedulingDecision(beta, b), cs, b_max


@settings(max_examples=100, deadline=None)
@given(noise_free_round())
def test_noise_free_end_to_end_identity(case):
    w, chan, d, cs, _ = case
    out = ch.post_process(ch.aggregate_over_air(cs, chan, w, d, 0), w, d)
    target = ch.desired_average(cs, w, d.selected)
    np.testing.assert_allclose(out, target, rtol=1e-12, atol=1e-12)
    assert np.all(np.abs(out) <= 1 + 1e-12)


@settings(max_examples=100, deadline=None)
@given(noise_free_round())
def test_power_never_exceeds_budget(case):
    w, chan, _, _, b_max = case
    d = ch.SchedulingDecision(case[2].selected, b_max)
    power = ch.transmit_powers(w, d, chan.gains)
    assert np.all(power <= np.array([x.max_power for x in w]) + 1e-12)
    ch.check_feasible(w, d, chan.gains)


@settings(max_examples=60, deadline=None)
@given(noise_free_round())
def test_scale_equivariance(case):
    w, chan, d, cs, b_max = case
    half = ch.SchedulingDecision(d.selected, b_max / 2)
    full = ch.SchedulingDecision(d.selected, b_max)
    y1 = ch.aggregate_over_air(cs, chan, w, half, 0)
    y2 = ch.aggregate_over_air(cs, chan, w, full, 0)
    np.testing.assert_allclose(y2, 2 * y1, rtol=1e-14)
    np.testing.assert_allclose(ch.post_process(y2, w, full), ch.post_process(y1, w, half), rtol=1e-12, atol=1e-15)
