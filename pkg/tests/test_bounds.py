import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tsustat.bounds import (BernsteinParams, BoundConstants, TailPoint,
                            bernstein_envelope, bias_bound, calibrate_constants,
                            combine_bernstein_params, empirical_log_mgf,
                            hoeffding_bound, log_factor, mixing_sum_logmgf_bound,
                            mixing_sum_tail_bound, ustat_tail_bound, bias_offset,
                            variance_logmgf_bound)

pos = st.floats(min_value=1e-3, max_value=1e3, allow_nan=False, allow_infinity=False)


def test_hoeffding_bound_examples():
    assert hoeffding_bound(0.0, 100, 1.0) == 2.0
    assert hoeffding_bound(1.0, 100, 1.0, c0=1.0) == pytest.approx(2.0 * math.exp(-50.0))
    xs = np.linspace(0, 5, 60)
    vals = [hoeffding_bound(x, 50, 1.0) for x in xs]
    assert all(b <= a for a, b in zip(vals, vals[1:]))
    assert vals[-1] < 1e-20
    with pytest.raises(ValueError):
        hoeffding_bound(-0.1, 10, 1.0)


def test_mixing_sum_forms():
    assert mixing_sum_tail_bound(0.0, 100, 1.0) == 2.0
    limit = 1.0 / log_factor(100)
    assert mixing_sum_logmgf_bound(1e-9, 100, 1.0) == pytest.approx(
        1e-18 * 100 / (1 - 1e-9 * log_factor(100)), rel=1e-9)
    assert mixing_sum_logmgf_bound(0.99 * limit, 100, 1.0) > 0
    with pytest.raises(ValueError):
        mixing_sum_logmgf_bound(limit, 100, 1.0)
    with pytest.raises(ValueError):
        mixing_sum_logmgf_bound(0.0, 100, 1.0)
    with pytest.raises(ValueError):
        log_factor(1)


def test_ustat_tail_bound_basics():
    assert ustat_tail_bound(0.0, 100, 1.0) == 2.0
    assert bias_offset(100, 2.0, c4=1.5) == pytest.approx(0.3)
    xs = np.linspace(0.0, 1.0, 101)
    vals = [ustat_tail_bound(x, 500, 1.0) for x in xs]
    assert all(b <= a for a, b in zip(vals, vals[1:]))


def test_ustat_tail_doubling_t_squares_ratio_in_quadratic_regime():
    # with M x logfactor << M^2 the exponent is linear in T
    x, M, T = 1e-5, 1.0, 1000
    r1 = ustat_tail_bound(x, T, M) / 2.0
    r2 = ustat_tail_bound(x, 2 * T, M) / 2.0
    assert abs(r2 - r1 * r1) < 1e-10


def test_ustat_tail_monotone_in_t_for_moderate_x():
    for x in (0.01, 0.1, 0.5, 1.0):
        vals = [ustat_tail_bound(x, T, 1.0) for T in (10, 20, 50, 100, 400, 1600)]
        assert all(b <= a + 1e-15 for a, b in zip(vals, vals[1:]))


def test_variance_logmgf_admissible_range_grows_with_t():
    lo = 0.5
    assert variance_logmgf_bound(lo, 100, 1.0) > 0
    big_eta = 50.0  # admissible at T=10^4 but not at T=100
    assert variance_logmgf_bound(big_eta, 10_000, 1.0) > 0
    with pytest.raises(ValueError):
        variance_logmgf_bound(big_eta, 100, 1.0)


def test_bias_bound():
    assert bias_bound(4, 1.0) == 0.5
    assert bias_bound(16, 1.0) == pytest.approx(bias_bound(4, 1.0) / 2.0)


def test_bernstein_params_validation_and_combination():
    with pytest.raises(ValueError):
        BernsteinParams(-1.0, 0.0)
    single = BernsteinParams(1.5, 0.25)
    assert combine_bernstein_params([single]) == single
    combined = combine_bernstein_params([BernsteinParams(1, 1), BernsteinParams(2, 3)])
    assert combined == BernsteinParams(3.0, 4.0)
    n_copies = combine_bernstein_params([single] * 7)
    assert n_copies.sigma == pytest.approx(7 * 1.5)
    assert n_copies.kappa == pytest.approx(7 * 0.25)
    with pytest.raises(ValueError):
        combine_bernstein_params([])


@given(st.lists(st.tuples(pos, pos), min_size=2, max_size=6))
@settings(max_examples=100, deadline=None)
def test_combination_commutative_associative(params):
    ps = [BernsteinParams(s, k) for s, k in params]
    forward = combine_bernstein_params(ps)
    backward = combine_bernstein_params(ps[::-1])
    assert forward.sigma == pytest.approx(backward.sigma, rel=1e-12)
    assert forward.kappa == pytest.approx(backward.kappa, rel=1e-12)
    split = combine_bernstein_params(
        [combine_bernstein_params(ps[:1]), combine_bernstein_params(ps[1:])])
    assert split.sigma == pytest.approx(forward.sigma, rel=1e-12)


def test_envelope_domain():
    p = BernsteinParams(1.0, 2.0)
    assert bernstein_envelope(p, 0.0) == 0.0
    assert bernstein_envelope(p, 0.25) == pytest.approx(0.0625 / 0.5)
    with pytest.raises(ValueError):
        bernstein_envelope(p, 0.5)


def test_empirical_log_mgf():
    assert empirical_log_mgf([0.0, 0.0, 0.0], 3.0) == 0.0
    v = empirical_log_mgf([-1.0, 1.0], 1.0)
    assert v == pytest.approx(math.log(math.cosh(1.0)))
    with pytest.raises(ValueError):
        empirical_log_mgf([], 1.0)
    with pytest.raises(ValueError):
        empirical_log_mgf([100.0], 10.0)


def test_rademacher_sum_dominated_by_hoeffding_envelope():
    rng = np.random.default_rng(0)
    n = 10
    sums = rng.choice([-1.0, 1.0], size=(200_000, n)).sum(axis=1)
    combined = combine_bernstein_params([BernsteinParams(1.0, 0.0)] * n)
    for eta in np.linspace(0.01, 0.5, 20):
        assert empirical_log_mgf(sums, eta) <= bernstein_envelope(combined, eta)


def test_bound_constants_dict_round_trip():
    c = BoundConstants(c5=2.5, r=3)
    again = BoundConstants.from_dict(c.to_dict())
    assert again == c
    with pytest.raises(ValueError):
        BoundConstants.from_dict({"c9": 1.0})
    with pytest.raises(ValueError):
        BoundConstants(c0=0.0)


def synthetic_points(c5, c4=0.0, M=1.0):
    pts = []
    for T in (250, 500):
        for x in (0.05, 0.1, 0.2, 0.4):
            x_eff = max(x - c4 * M / math.sqrt(T), 0.0)
            pts.append(TailPoint(x=x, T=T, M=M,
                                 probability=ustat_tail_bound(x_eff, T, M, c5)))
    return pts


def test_calibration_round_trip():
    result = calibrate_constants(synthetic_points(0.1), c4=0.0)
    assert result.constants.c5 == pytest.approx(0.1, abs=1e-6)
    assert not result.capped
    assert result.binding_point is not None


def test_calibration_with_offset_round_trip():
    result = calibrate_constants(synthetic_points(0.3, c4=1.0), c4=1.0)
    assert result.constants.c5 == pytest.approx(0.3, abs=1e-6)


def test_calibration_degenerate_all_zero():
    pts = [TailPoint(x=x, T=T, M=1.0, probability=0.0)
           for T in (100, 200) for x in (0.1, 0.2, 0.3)]
    result = calibrate_constants(pts, c4=0.0, cap=123.0)
    assert result.capped and result.constants.c5 == 123.0
    assert result.binding_point is None


def test_calibration_preconditions():
    pts = synthetic_points(0.1)[:4]
    with pytest.raises(ValueError):
        calibrate_constants(pts, c4=0.0)
    same_t = [TailPoint(x=x, T=100, M=1.0, probability=0.5)
              for x in (0.1, 0.2, 0.3, 0.4, 0.5)]
    with pytest.raises(ValueError):
        calibrate_constants(same_t, c4=0.0)


def test_calibration_result_dominates_training_points():
    pts = synthetic_points(0.37)
    result = calibrate_constants(pts, c4=0.0)
    for p in pts:
        assert result.dominates(p, tol=1e-12)
