from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nearfar.errors import ConfigError
from nearfar.sampler import (
    SamplerConfig,
    WeightedItem,
    bootstrap_variance_interval,
    clipped_probabilities,
    draw_sample,
    efficiency_curve,
    estimator_variance_mc,
    fraction_grid,
    m_for_fraction,
    normalized_weights,
    paired_series_fit,
    plan_sample,
    relative_variance,
    relative_variance_split,
    standardize,
)


def exact_relative_variance(w, m):
    """Rational-arithmetic oracle for the clipped-probability ratio."""
    w = [Fraction(v) for v in w]
    total = sum(w)
    s = [min(Fraction(1), m * v / total) for v in w]
    return float(sum(v * v for v in w) / sum(v * v / si for v, si in zip(w, s) if v > 0))


def test_normalized_weights_examples():
    np.testing.assert_array_equal(normalized_weights([1, 3]), [0.25, 0.75])
    np.testing.assert_array_equal(normalized_weights([2, 2, 2, 2]), [0.25] * 4)
    np.testing.assert_array_equal(normalized_weights([0, 5]), [0, 1])
    with pytest.raises(ValueError):
        normalized_weights([0, 0])


def test_standardize_examples():
    np.testing.assert_array_equal(standardize([0, 2]), [-1, 1])
    with pytest.raises(ValueError):
        standardize([3, 3, 3])


@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=40), st.floats(0.1, 100), st.floats(-100, 100))
@settings(max_examples=80)
def test_standardize_affine_invariant(f, a, b):
    f = np.asarray(f)
    if f.std() < 1e-3:
        return
    np.testing.assert_allclose(standardize(a * f + b), standardize(f), atol=1e-6)


def test_clipped_probability_examples():
    np.testing.assert_allclose(clipped_probabilities([1, 1, 8], 2), [0.2, 0.2, 1.0], rtol=0, atol=1e-12)
    np.testing.assert_array_equal(clipped_probabilities([3, 3, 3], 3), [1, 1, 1])
    np.testing.assert_array_equal(clipped_probabilities([1, 1], 1), [0.5, 0.5])


@pytest.mark.parametrize("w,m", [([1, 2], 0), ([1, 2], 3), ([-1, 2], 1), ([0, 0], 1)])
def test_clipped_probability_rejects(w, m):
    with pytest.raises(ValueError):
        clipped_probabilities(w, m)


def test_relative_variance_examples():
    assert relative_variance([1, 1, 2], 2) == pytest.approx(0.75, abs=1e-12)
    assert relative_variance([1, 1, 2], 3) == pytest.approx(0.9, abs=1e-12)
    assert relative_variance([2, 2, 2], 3) == 1.0


@given(st.lists(st.floats(0, 100), min_size=1, max_size=30), st.data())
@settings(max_examples=150)
def test_relative_variance_matches_rational_oracle_and_split(w, data):
    if sum(w) <= 0:
        return
    m = data.draw(st.integers(1, len(w)))
    r = relative_variance(w, m)
    assert 0.0 < r <= 1.0 + 1e-12
    assert r == pytest.approx(exact_relative_variance(w, m), rel=1e-9)
    assert relative_variance_split(w, m) == pytest.approx(r, rel=1e-9)


def test_m_for_fraction():
    assert m_for_fraction(0.6, 324) == 194
    assert m_for_fraction(0.5, 5) == 3
    assert m_for_fraction(0.01, 10) == 1
    assert m_for_fraction(1.0, 7) == 7
    with pytest.raises(ValueError):
        m_for_fraction(0.0, 10)


def test_fraction_grid():
    g = fraction_grid(0.05)
    assert len(g) == 20 and g[0] == 0.05 and g[-1] == 1.0


def test_efficiency_curve_properties():
    losses = np.random.default_rng(7).exponential(1.0, 5000)
    curve = efficiency_curve(losses, fraction_grid(0.05))
    rs = [r for _, _, r in curve.points]
    assert rs[-1] == 1.0
    assert all(b >= a for a, b in zip(rs, rs[1:]))
    first = curve.first_reaching(0.9)
    assert first == efficiency_curve(losses, fraction_grid(0.05)).first_reaching(0.9)
    assert first == 0.8


def test_efficiency_curve_degenerate_losses():
    with pytest.raises(ValueError):
        efficiency_curve([1.0] * 10, [0.5])


def test_draw_sample_extremes():
    items = list(range(10))
    assert draw_sample(items, [1.0] * 10, 0) == items
    assert draw_sample(items, [0.0] * 10, 0) == []
    assert draw_sample(items, [0.3] * 10, 5) == draw_sample(items, [0.3] * 10, 5)


def test_draw_sample_concentration():
    s = np.random.default_rng(1).uniform(0, 1, 50)
    sizes = np.array([len(draw_sample(range(50), s, seed)) for seed in range(10_000)])
    expect = s.sum()
    assert abs(sizes.mean() - expect) <= 3 * np.sqrt(np.sum(s * (1 - s)))
    # stricter: the mean of 10^4 sizes concentrates at 1/100 of that spread
    assert abs(sizes.mean() - expect) <= 3 * np.sqrt(np.sum(s * (1 - s)) / 10_000)


def test_plan_sample_modes():
    items = [WeightedItem(i, float(v)) for i, v in enumerate(np.random.default_rng(2).exponential(1, 40))]
    plan = plan_sample(items, 10, 3)
    assert plan.s.sum() == pytest.approx(10) or plan.s.max() == 1.0
    np.testing.assert_allclose(plan.q_star.sum(), 1.0)
    multi = plan_sample(items, 10, 3, SamplerConfig(mode="multinomial"))
    assert 1 <= len(multi.subset) <= 10
    full = plan_sample([WeightedItem(i, 0.0) for i in range(4)], 4, 0)
    assert len(full.subset) == 4


def test_sampler_config_validation():
    with pytest.raises(ConfigError):
        SamplerConfig(weighting="abs")


def test_constant_f_has_zero_variance_under_q_star():
    f = np.full(50, 3.0)
    q = normalized_weights(f)
    np.testing.assert_array_equal(q, np.full(50, 1 / 50))
    res = estimator_variance_mc(f, q, 2000, 0)
    assert res.variance == pytest.approx(0.0, abs=1e-20)
    assert res.mean == pytest.approx(3.0)


def test_q_star_beats_uniform_on_spike():
    f = np.ones(100)
    f[-1] = 100.0
    uni = estimator_variance_mc(f, np.full(100, 0.01), 100_000, 1)
    opt = estimator_variance_mc(f, normalized_weights(f), 100_000, 2)
    lo_u, _ = bootstrap_variance_interval(uni.estimates, seed=3)
    _, hi_o = bootstrap_variance_interval(opt.estimates, seed=4)
    assert hi_o < lo_u
    truth = f.mean()
    for res in (uni, opt):
        assert abs(res.mean - truth) <= 3 * res.std_error + 1e-15


def test_support_violation():
    with pytest.raises(ValueError):
        estimator_variance_mc([1.0, 2.0], [1.0, 0.0], 10, 0)


def test_mc_chunking_invariant():
    f = np.random.default_rng(0).exponential(1, 30)
    q = normalized_weights(f + 0.1)
    a = estimator_variance_mc(f, q, 5000, 9, chunk=5000)
    b = estimator_variance_mc(f, q, 5000, 9, chunk=700)
    np.testing.assert_array_equal(a.estimates, b.estimates)


def test_paired_series_fit_examples():
    fit = paired_series_fit([1, 2, 3, 4], [2, 4, 6, 8])
    assert fit.slope == pytest.approx(2) and fit.r == pytest.approx(1)
    flat = paired_series_fit([1, 2, 3], [5, 5, 5])
    assert flat.r == 0.0 and flat.slope == 0.0
    fit = paired_series_fit([1, 2, 3], [1, 3, 2])
    assert (fit.slope, fit.intercept, fit.r) == pytest.approx((0.5, 1.0, 0.5))
    with pytest.raises(ValueError):
        paired_series_fit([1, 1, 1], [1, 2, 3])
