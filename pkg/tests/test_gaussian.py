"""Normal quantile and tail-ratio kernel against high-precision oracles.

Frozen expectations were computed with mpmath at 50 digits (bisection on
the erfc-based CDF for quantiles, direct tail-integral ratios for F).
"""

import numpy as np
import pytest

from merton_risk import AlphaOutOfRange, mills_bounds, normal_quantile, tail_ratio
from merton_risk.errors import NegativeArgument
from merton_risk.gaussian import (
    gauss_hazard,
    log_gauss_tail,
    log_tail_ratio,
    norm_cdf,
    norm_sf,
)

# mpmath, 50 digits
Z_005 = -1.6448536269514727149
Z_001 = -2.3263478740408411009
Z_0001 = -3.0902323061678135415
F_001_PLUS_1 = 0.043996018047378587714


@pytest.mark.parametrize("alpha,expected", [
    (0.05, Z_005), (0.01, Z_001), (0.001, Z_0001),
])
def test_quantile_frozen_values(alpha, expected):
    q = normal_quantile(alpha)
    assert q.z_alpha == pytest.approx(expected, abs=5e-15)
    assert q.abs_z == -q.z_alpha


def test_quantile_near_median():
    q = normal_quantile(0.4999999)
    assert q.z_alpha < 0
    assert q.z_alpha == pytest.approx(0.0, abs=1e-6)


def test_quantile_round_trip_1e12():
    for alpha in np.geomspace(1e-8, 0.4999, 200):
        q = normal_quantile(float(alpha))
        assert abs(float(norm_cdf(q.z_alpha)) - alpha) <= 1e-12


@pytest.mark.parametrize("alpha", [0.0, 0.5, 0.7, -0.1, 1.0])
def test_alpha_out_of_range(alpha):
    with pytest.raises(AlphaOutOfRange):
        normal_quantile(alpha)


def test_tail_ratio_at_quantile_is_one():
    q = normal_quantile(0.01)
    assert tail_ratio(q, q.abs_z) == 1.0


def test_tail_ratio_frozen_value():
    q = normal_quantile(0.01)
    assert tail_ratio(q, q.abs_z + 1.0) == pytest.approx(F_001_PLUS_1,
                                                         rel=1e-12)


def test_tail_ratio_vanishes_far_out():
    # ratio underflows the double range around z ~ 26 for alpha = 0.01;
    # the log form carries the accuracy out to z = 40 (mpmath oracles)
    q = normal_quantile(0.01)
    assert 0.0 < tail_ratio(q, 20.0) < 1e-80
    assert tail_ratio(q, 20.0) == pytest.approx(2.7536241e-87, rel=1e-7)
    assert log_tail_ratio(q, 40.0) == pytest.approx(-800.0032718277657,
                                                    rel=1e-13)


def test_tail_ratio_monotone_grids():
    for alpha in (0.001, 0.01, 0.05, 0.25):
        q = normal_quantile(alpha)
        zs = np.linspace(q.abs_z, 20.0, 1000)
        vals = tail_ratio(q, zs)
        assert vals[0] == 1.0
        assert np.all(np.diff(vals) < 0)
        assert np.all((vals > 0) & (vals <= 1.0))
        # the log form stays strictly decreasing out to z = 40
        logs = log_tail_ratio(q, np.linspace(q.abs_z, 40.0, 1000))
        assert np.all(np.diff(logs) < 0)


def test_tail_ratio_rejects_negative():
    q = normal_quantile(0.05)
    with pytest.raises(NegativeArgument):
        tail_ratio(q, -0.5)
    with pytest.raises(NegativeArgument):
        log_tail_ratio(q, np.array([0.5, -1.0]))


def test_mills_bounds_against_tail_oracle():
    for x in (2.0, 10.0):
        lower, upper = mills_bounds(x)
        target = x * np.sqrt(2 * np.pi) * float(norm_sf(x))
        assert lower < target < upper
    lower, upper = mills_bounds(2.0)
    assert lower == pytest.approx(0.75 * np.exp(-2.0), rel=1e-15)
    assert upper == pytest.approx(np.exp(-2.0), rel=1e-15)


def test_mills_bounds_vacuous_at_one():
    lower, upper = mills_bounds(1.0)
    assert lower == 0.0
    assert upper > 0.0


def test_mills_sandwich_log_grid():
    # compared in log space so the e^{-x^2/2} scale cannot underflow
    for x in np.geomspace(1.01, 40.0, 200):
        log_target = np.log(x) + float(log_gauss_tail(x))
        log_lower = np.log1p(-x ** -2) - 0.5 * x * x
        log_upper = -0.5 * x * x
        assert log_lower < log_target < log_upper


def test_mills_sandwich_moderate_grid_direct():
    for x in np.geomspace(1.01, 25.0, 100):
        lower, upper = mills_bounds(float(x))
        target = x * np.exp(float(log_gauss_tail(x)))
        assert lower < target < upper


def test_hazard_consistent_with_log_tail():
    # d/dz (-log tail) equals the hazard; check by central differences
    for z in (0.0, 1.3, 4.0, 12.0):
        h = 1e-6
        fd = -(log_gauss_tail(z + h) - log_gauss_tail(z - h)) / (2 * h)
        assert gauss_hazard(z) == pytest.approx(float(fd), rel=1e-8)
