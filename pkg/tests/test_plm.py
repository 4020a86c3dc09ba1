import dataclasses
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scfreq.domain import LinkSpec, SubchannelSpec, SuperchannelPlan, min_distance, shift_subchannel
from scfreq.plm import (
    PlmModel,
    SurrogateMonitor,
    crosstalk_coefficient,
    filter_gain,
    filter_loss_db,
    rrc_psd,
    snr,
    snr_batch,
    snr_components,
)

SPEC = SubchannelSpec(32.0, 0.1)
B2B = LinkSpec(span_count=0, filter_count=1)


def riemann(func, lo, hi, step=0.001):
    """Midpoint Riemann sum, the independent oracle for the spectral integrals."""
    x = np.arange(lo + step / 2, hi, step)
    return float(np.sum(func(x)) * step)


def plain_rrc(x, rs=32.0, a=0.1):
    # written out independently of the package implementation
    x = np.abs(x)
    lo, hi = (1 - a) * rs / 2, (1 + a) * rs / 2
    out = np.zeros_like(x)
    out[x <= lo] = 1.0
    mid = (x > lo) & (x < hi)
    out[mid] = np.cos(np.pi / (2 * a * rs) * (x[mid] - lo)) ** 2
    return out / rs


# -- spectra and filters ------------------------------------------------------------

@pytest.mark.parametrize("alpha", [0.0, 0.1, 0.15, 0.5, 1.0])
def test_psd_has_unit_integral(alpha):
    spec = SubchannelSpec(32.0, alpha)
    total = riemann(lambda x: rrc_psd(x, spec), -40, 40)
    assert abs(total - 1.0) < 1e-6


def test_psd_shape_points():
    assert rrc_psd(0.0, SPEC) == pytest.approx(1 / 32)
    assert rrc_psd(17.6, SPEC) == 0.0
    assert rrc_psd(25.0, SPEC) == 0.0
    x = np.linspace(-20, 20, 401)
    assert np.allclose(rrc_psd(x, SPEC), plain_rrc(x), atol=1e-15)


@given(st.floats(-30, 30))
def test_psd_even_and_non_negative(x):
    assert rrc_psd(x, SPEC) == rrc_psd(-x, SPEC) >= 0.0


def test_filter_gain_points():
    assert filter_gain(0.0, 137.5, 3.5, 2) == 1.0
    assert filter_gain(137.5 / 2, 137.5, 3.5, 1) == pytest.approx(0.5, abs=1e-15)
    mpmath.mp.dps = 40
    exact = mpmath.exp(-2 * mpmath.log(2) * (2 * mpmath.mpf(80) / mpmath.mpf("137.5")) ** 7)
    assert filter_gain(80.0, 137.5, 3.5, 2) == pytest.approx(float(exact), rel=1e-12)


@given(st.floats(0, 200), st.floats(0, 200))
def test_filter_gain_even_monotone_bounded(a, b):
    ga, gb = filter_gain(a, 137.5, 3.5, 2), filter_gain(b, 137.5, 3.5, 2)
    assert 0.0 <= ga <= 1.0
    assert filter_gain(-a, 137.5, 3.5, 2) == ga
    if a < b:
        assert ga >= gb


def test_filter_gain_validation():
    with pytest.raises(ValueError):
        filter_gain(0.0, 0.0, 3.5)
    with pytest.raises(ValueError):
        filter_gain(0.0, 100.0, 3.5, cascades=0)


# -- crosstalk ------------------------------------------------------------------------

def three_carriers(gap, bandwidth=1000.0):
    return SuperchannelPlan.from_offsets([-gap, 0.0, gap], bandwidth, subchannels=(SPEC,), laser_granularity=0.0)


@pytest.mark.parametrize("gap", [35.2, 36.0, 50.0])
def test_crosstalk_zero_beyond_min_distance(gap, quiet_model):
    assert crosstalk_coefficient(three_carriers(gap), 0, 1, quiet_model) == 0.0


def test_crosstalk_colocated_matches_riemann_oracle():
    model = PlmModel(link=B2B, monitor_noise_sigma=0)
    bw = 137.5
    # two carriers at the same frequency cannot form a plan; evaluate the pair directly
    from scfreq.plm import _pair_crosstalk

    value = _pair_crosstalk(0.0, 0.0, SPEC, SPEC, bw, model)
    g = lambda x: np.exp(-math.log(2) * np.abs(2 * x / bw) ** 7)
    num = riemann(lambda x: plain_rrc(x) ** 3 * g(x), -20, 20)
    ref = riemann(lambda x: plain_rrc(x) ** 3, -20, 20)
    assert value == pytest.approx(num / ref, rel=1e-6)
    assert 0.99 < value <= 1.0


def test_crosstalk_offset_pair_matches_riemann_oracle():
    model = PlmModel(link=LinkSpec(), monitor_noise_sigma=0)
    bw = 137.5
    plan = SuperchannelPlan.from_offsets([-50.0, -17.0, 15.0, 50.0], bw, laser_granularity=0.0)
    value = crosstalk_coefficient(plan, 1, 2, model)
    g = lambda x: np.exp(-2 * math.log(2) * np.abs(2 * x / bw) ** 7)
    num = riemann(lambda x: plain_rrc(x + 17.0) * plain_rrc(x - 15.0) ** 2 * g(x), -10, 10, step=0.0001)
    ref = riemann(lambda x: plain_rrc(x) ** 3, -20, 20)
    assert value == pytest.approx(num / ref, rel=1e-5)


def test_crosstalk_grows_as_gap_shrinks(quiet_model):
    gaps = [35.0, 34.5, 34.0, 33.0, 32.0, 30.0, 25.0, 20.0]
    values = [crosstalk_coefficient(three_carriers(g), 0, 1, quiet_model) for g in gaps]
    assert all(b > a for a, b in zip(values, values[1:]))


def test_crosstalk_symmetric_for_uniform_superchannel(quiet_model):
    centred = SuperchannelPlan.from_offsets([-40.0, -16.0, 16.0, 40.0], 137.5)
    assert crosstalk_coefficient(centred, 1, 2, quiet_model) == \
        pytest.approx(crosstalk_coefficient(centred, 2, 1, quiet_model), rel=1e-12)
    wide = three_carriers(30.0)
    assert crosstalk_coefficient(wide, 0, 1, quiet_model) == \
        pytest.approx(crosstalk_coefficient(wide, 1, 0, quiet_model), rel=1e-12)
    # near a filter edge the cascade weights the two tails differently, slightly
    edge = SuperchannelPlan((17.0, 33.0, 34.5, 36.0, 17.0), 137.5)
    assert crosstalk_coefficient(edge, 0, 1, quiet_model) == \
        pytest.approx(crosstalk_coefficient(edge, 1, 0, quiet_model), rel=5e-3)


def test_crosstalk_needs_distinct_channels(plan, quiet_model):
    with pytest.raises(ValueError):
        crosstalk_coefficient(plan, 1, 1, quiet_model)


# -- snr ------------------------------------------------------------------------------

def test_mirror_symmetry_without_ripple(plan):
    model = PlmModel(ripple_amplitude=0.0, monitor_noise_sigma=0)
    s = snr(plan, model).snr
    assert abs(s[0] - s[3]) < 1e-9 and abs(s[1] - s[2]) < 1e-9


def test_isolated_carriers_hit_the_floor():
    model = PlmModel(link=B2B, monitor_noise_sigma=0)
    wide = SuperchannelPlan.equidistant(filter_bandwidth=400.0, spacing=50.0)
    for value in snr(wide, model).snr:
        assert abs(value - (model.ase_floor_snr - 0.0)) < 0.01
    qam = SuperchannelPlan.equidistant(filter_bandwidth=400.0, spacing=50.0, spec=SubchannelSpec(modulation="16QAM"))
    for value in snr(qam, model).snr:
        assert abs(value - (model.ase_floor_snr - 0.5)) < 0.01


def test_filter_penalty_vanishes_for_broad_filter(quiet_model):
    plan = SuperchannelPlan.equidistant()
    occupied = 3 * 34.5 + min_distance(plan.spec)
    broad = SuperchannelPlan.equidistant(filter_bandwidth=3 * occupied + 0.5)
    assert np.all(snr_components(broad, quiet_model)["filter_loss"] <= 0.01)


def test_filter_loss_grows_towards_the_edge(quiet_model):
    losses = [filter_loss_db(x, SPEC, 137.5, quiet_model) for x in (0.0, 30.0, 45.0, 51.75, 55.0, 60.0)]
    assert losses[0] < 1e-3
    assert all(b > a for a, b in zip(losses, losses[1:]))


def test_more_spans_lower_every_snr(plan):
    # ripple off: it only appears once amplifiers are present and may lift one channel
    values = [np.array(snr(plan, PlmModel(link=LinkSpec(span_count=k), ripple_amplitude=0.0,
                                          monitor_noise_sigma=0)).snr)
              for k in (0, 1, 2, 5, 10)]
    for lo, hi in zip(values[1:], values):
        assert np.all(lo < hi)


@pytest.mark.parametrize("gap", [35.0, 34.0, 33.0])
def test_squeezing_an_interior_distance_hurts_both_neighbours(plan, gap):
    model = PlmModel(ripple_amplitude=0.0, monitor_noise_sigma=0)
    # carriers 1 and 2 move towards each other, the outer ones stay put
    narrow = plan.with_offsets([-51.75, -gap / 2, gap / 2, 51.75])
    narrower = plan.with_offsets([-51.75, -gap / 2 + 0.5, gap / 2 - 0.5, 51.75])
    a, b = snr(narrow, model).snr, snr(narrower, model).snr
    assert b[1] < a[1] and b[2] < a[2]


def test_pushing_against_the_filter_edge_hurts(plan, quiet_model):
    pushed = shift_subchannel(plan, 0, -2.0)
    assert snr(pushed, quiet_model).snr[0] < snr(plan, quiet_model).snr[0]


def test_default_inner_channels_near_17_db(plan, quiet_model):
    inner = snr(plan, quiet_model).snr[1:3]
    assert all(16.5 < x < 17.5 for x in inner)


def test_gain_ripple_needs_amplifiers(plan):
    b2b = PlmModel(link=B2B, monitor_noise_sigma=0)
    flat = dataclasses.replace(b2b, ripple_amplitude=0.0)
    assert snr(plan, b2b).snr == snr(plan, flat).snr
    amplified = PlmModel(monitor_noise_sigma=0)
    assert snr(plan, amplified).snr != snr(plan, dataclasses.replace(amplified, ripple_amplitude=0.0)).snr


def test_noise_free_is_bit_identical(plan, quiet_model):
    fresh = PlmModel(monitor_noise_sigma=0)
    assert snr(plan, quiet_model).snr == snr(plan, quiet_model).snr == snr(plan, fresh).snr


def test_batch_matches_single_evaluation(quiet_model):
    plan = SuperchannelPlan.equidistant()
    rng = np.random.default_rng(7)
    layouts = plan.offsets + rng.integers(-8, 9, size=(25, 4)) * 0.25
    batch = snr_batch(plan, quiet_model, layouts)
    for row, off in zip(batch, layouts):
        single = snr(plan.with_offsets(off), PlmModel(monitor_noise_sigma=0)).snr
        assert np.allclose(row, single, atol=1e-12)


def test_three_carrier_peak_at_symmetric_point():
    model = PlmModel(link=B2B, ripple_amplitude=0.0, monitor_noise_sigma=0)
    d1 = np.arange(30.5, 38.51, 0.25)
    values = [snr(SuperchannelPlan((34.5, x, 69 - x, 34.5), 138.0, subchannels=(SPEC,)), model).snr[1] for x in d1]
    assert abs(d1[int(np.argmax(values))] - 34.5) <= 0.25


def test_broadening_spreads_crosstalk_beyond_min_distance():
    broad = PlmModel(link=LinkSpec(span_count=2), broadening_sigma_per_span=0.5, monitor_noise_sigma=0)
    assert crosstalk_coefficient(three_carriers(36.0), 0, 1, broad) > 0.0
    shape = broad.shape(SPEC)
    x = np.arange(-shape.support, shape.support, 0.001)
    assert abs(float(np.sum(shape(x)) * 0.001) - 1.0) < 1e-3


@pytest.mark.parametrize("kwargs", [dict(xpm_coefficient=-1), dict(ripple_amplitude=-0.1), dict(ripple_period=0),
                                    dict(monitor_noise_sigma=-0.1), dict(broadening_sigma_per_span=-1)])
def test_model_validation(kwargs):
    with pytest.raises(ValueError):
        PlmModel(**kwargs)


# -- monitor --------------------------------------------------------------------------

def test_monitor_without_noise_equals_snr(plan, quiet_model):
    mon = SurrogateMonitor(quiet_model)
    first = mon.measure(plan)
    assert first == mon.measure(plan) == snr(plan, quiet_model)
    assert not first.noise_applied and mon.calls == 2


def test_monitor_noise_statistics(plan):
    model = PlmModel(monitor_noise_sigma=0.05, rng_seed=11)
    mon = SurrogateMonitor(model)
    clean = np.array(snr(plan, model).snr)
    draws = np.array([mon.measure(plan).snr for _ in range(1000)])
    std = draws.std(axis=0, ddof=1)
    assert np.all((std >= 0.04) & (std <= 0.06))
    assert np.all(np.abs(draws.mean(axis=0) - clean) < 0.01)


def test_monitors_with_same_seed_agree(plan):
    model = PlmModel(monitor_noise_sigma=0.05)
    a, b = SurrogateMonitor(model, seed=5), SurrogateMonitor(model, seed=5)
    seq_a = [a.measure(plan).snr for _ in range(5)]
    seq_b = [b.measure(plan).snr for _ in range(5)]
    assert seq_a == seq_b
    assert SurrogateMonitor(model, seed=6).measure(plan).snr != seq_a[0]
    assert len(set(seq_a)) == 5


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(-6, 6), min_size=4, max_size=4))
def test_snr_finite_for_drifted_plans(steps):
    plan = SuperchannelPlan.equidistant()
    model = PlmModel(monitor_noise_sigma=0)
    drifted = plan.with_offsets(plan.offsets + 0.25 * np.array(steps))
    assert all(math.isfinite(x) for x in snr(drifted, model).snr)
