import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robustlab.gaussian import (
    ClampedDistanceWarning,
    DomainError,
    halfspace_distance,
    halfspace_error_rate,
    iso_extension_lower_bound,
    isoperimetric_median_bound,
    optimal_curve_csv,
    optimal_curve_table,
    std_normal_cdf,
    std_normal_cdf_inv,
    typical_noise_radius,
)

from helpers import normal_cdf_quadrature


class TestStdNormalCdf:
    def test_symmetry_point(self):
        assert std_normal_cdf(0.0) == pytest.approx(0.5, abs=1e-15)

    # Expected values frozen from the quadrature oracle in helpers.py.
    @pytest.mark.parametrize(
        "t, expected",
        [
            (-2.3263479, 0.009999999308132826),
            (1.0, 0.841344746068543),
            (-10.0, 7.61985302416043e-24),
        ],
    )
    def test_against_quadrature_oracle_frozen(self, t, expected):
        assert std_normal_cdf(t) == pytest.approx(expected, rel=1e-10, abs=1e-30)

    def test_against_quadrature_oracle_live(self):
        for t in np.linspace(-8.0, 8.0, 33):
            assert std_normal_cdf(t) == pytest.approx(
                normal_cdf_quadrature(t), rel=1e-11, abs=1e-16
            )

    def test_symmetry_identity(self):
        t = np.linspace(-8.0, 8.0, 2001)
        total = std_normal_cdf(t) + std_normal_cdf(-t)
        np.testing.assert_allclose(total, 1.0, atol=1e-12)

    def test_monotone(self):
        t = np.linspace(-12.0, 12.0, 4001)
        vals = std_normal_cdf(t)
        assert np.all(np.diff(vals) >= 0.0)

    def test_rejects_non_finite(self):
        for bad in (math.nan, math.inf, -math.inf):
            with pytest.raises(DomainError):
                std_normal_cdf(bad)


class TestStdNormalCdfInv:
    def test_median(self):
        assert std_normal_cdf_inv(0.5) == pytest.approx(0.0, abs=1e-15)

    # Frozen from bisection against the quadrature oracle.
    @pytest.mark.parametrize(
        "p, expected, tol",
        [
            (0.01, -2.3263478740408408, 1e-6),
            (0.8413447, 0.9999998096111058, 1e-6),
        ],
    )
    def test_against_bisection_oracle(self, p, expected, tol):
        assert std_normal_cdf_inv(p) == pytest.approx(expected, abs=tol)

    def test_sign_convention(self):
        assert std_normal_cdf_inv(0.2) < 0.0
        assert std_normal_cdf_inv(0.8) > 0.0

    def test_round_trip_grid(self):
        # log-spaced in both tails, as fine as 1e-12 from either end
        p = np.concatenate(
            [np.logspace(-12, -0.302, 100), 1.0 - np.logspace(-12, -0.302, 100)]
        )
        round_tripped = std_normal_cdf(std_normal_cdf_inv(p))
        assert np.max(np.abs(round_tripped - p)) <= 1e-9

    @pytest.mark.parametrize("bad", [0.0, 1.0, -0.1, 1.1])
    def test_rejects_saturated(self, bad):
        with pytest.raises(DomainError):
            std_normal_cdf_inv(bad)

    @given(st.floats(min_value=1e-12, max_value=1.0 - 1e-12))
    @settings(max_examples=200, deadline=None)
    def test_round_trip_property(self, p):
        assert abs(std_normal_cdf(std_normal_cdf_inv(p)) - p) <= 1e-9


class TestHalfspaceDistance:
    def test_small_rate_small_sigma(self):
        # 1% error rate at sigma = 0.1 puts the boundary ~0.23 away
        assert halfspace_distance(0.1, 0.01) == pytest.approx(0.2326, abs=0.0005)

    def test_published_operating_point(self):
        assert halfspace_distance(0.08, 0.001) == pytest.approx(0.2472, abs=0.002)

    def test_rate_half_is_zero(self):
        assert halfspace_distance(0.1, 0.5) == 0.0

    def test_rate_above_half_clamps_and_warns(self):
        with pytest.warns(ClampedDistanceWarning):
            assert halfspace_distance(0.1, 0.9) == 0.0

    def test_rejects_saturated_rates(self):
        for mu in (0.0, 1.0):
            with pytest.raises(DomainError):
                halfspace_distance(0.1, mu)

    def test_dimension_free(self):
        # the relation reads no dimension; only the typical radius does
        assert halfspace_distance(0.1, 0.01) == halfspace_distance(0.1, 0.01)
        r1 = typical_noise_radius(0.1, 100)
        r4 = typical_noise_radius(0.1, 400)
        assert r4 / r1 == pytest.approx(2.0, rel=1e-12)


class TestHalfspaceErrorRate:
    def test_round_trip_of_operating_point(self):
        assert halfspace_error_rate(0.1, 0.2326) == pytest.approx(0.01, abs=1e-4)

    def test_boundary_through_center(self):
        assert halfspace_error_rate(1.0, 0.0) == 0.5

    def test_deep_tail(self):
        rate = halfspace_error_rate(0.1, 1.0)
        assert rate < 1e-20
        # frozen quadrature oracle value for Phi(-10)
        assert rate == pytest.approx(7.61985302416043e-24, rel=1e-9)

    def test_rejects_negative_distance(self):
        with pytest.raises(DomainError):
            halfspace_error_rate(0.1, -0.5)

    def test_eq_round_trip_relative(self):
        for mu in np.logspace(-9, math.log10(0.5) - 1e-12, 40):
            for sigma in (0.05, 0.1, 1.0):
                back = halfspace_error_rate(sigma, halfspace_distance(sigma, mu))
                assert back == pytest.approx(mu, rel=1e-6)


class TestIsoperimetricMedianBound:
    def test_rate_above_half_is_zero(self):
        assert isoperimetric_median_bound(0.1, 0.6) == 0.0

    def test_boundary_case(self):
        assert isoperimetric_median_bound(0.5, 0.5) == 0.0

    def test_equals_halfspace_below_half(self):
        for mu in (1e-6, 0.01, 0.2, 0.49):
            assert isoperimetric_median_bound(0.1, mu) == halfspace_distance(0.1, mu)

    def test_oracle_value(self):
        assert isoperimetric_median_bound(0.1, 0.01) == pytest.approx(0.2326, abs=0.0005)


class TestIsoExtensionLowerBound:
    def test_zero_extension_is_identity(self):
        assert iso_extension_lower_bound(0.3, 0.0, 1.0) == pytest.approx(0.3, rel=1e-12)

    def test_reaches_half_at_median_bound(self):
        eps = isoperimetric_median_bound(0.1, 0.01)
        assert iso_extension_lower_bound(0.01, eps, 0.1) == pytest.approx(0.5, abs=1e-3)

    def test_oracle_value(self):
        # Phi(1), frozen from the quadrature oracle
        assert iso_extension_lower_bound(0.5, 0.1, 0.1) == pytest.approx(
            0.841344746068543, rel=1e-9
        )

    def test_monotone_in_eps(self):
        vals = [iso_extension_lower_bound(0.01, e, 0.1) for e in np.linspace(0, 1, 50)]
        assert all(b >= a for a, b in zip(vals, vals[1:]))


class TestTypicalNoiseRadius:
    def test_cifar_scale(self):
        assert typical_noise_radius(0.1, 3072) == pytest.approx(5.543, abs=0.01)

    def test_three_dims(self):
        assert typical_noise_radius(0.1, 3) == pytest.approx(0.173, abs=0.005)

    def test_one_dim(self):
        assert typical_noise_radius(0.25, 1) == 0.25

    def test_rejects_bad_dimension(self):
        with pytest.raises(DomainError):
            typical_noise_radius(0.25, 0)


class TestOptimalCurveTable:
    def test_single_row(self):
        rows = optimal_curve_table([0.1], [0.01])
        assert len(rows) == 1
        s, m, d = rows[0]
        assert (s, m) == (0.1, 0.01)
        assert d == pytest.approx(0.2326, abs=0.0005)

    def test_extreme_rate_magnitude(self):
        # at sigma=0.6 a 1e-15 error rate pushes the boundary out near 5
        ((_, _, d),) = optimal_curve_table([0.6], [1e-15])
        assert d == pytest.approx(4.7648, abs=0.01)
        assert 4.0 < d < 5.5

    def test_distance_vanishes_toward_half(self):
        ((_, _, d),) = optimal_curve_table([0.3], [0.5 - 1e-12])
        assert d == pytest.approx(0.0, abs=1e-9)

    def test_rejects_mu_above_half(self):
        with pytest.raises(DomainError):
            optimal_curve_table([0.1], [0.6])

    def test_csv_format(self):
        rows = optimal_curve_table([0.1, 0.2], [0.01, 0.001])
        text = optimal_curve_csv(rows)
        lines = text.strip().split("\n")
        assert lines[0] == "sigma,mu,distance"
        assert len(lines) == 5
        first = lines[1].split(",")
        assert float(first[0]) == 0.1
        assert float(first[1]) == 0.01
        # at least 9 significant digits survive the round trip
        assert abs(float(first[2]) - halfspace_distance(0.1, 0.01)) < 1e-10


class TestKnownCaptionDiscrepancy:
    def test_value_at_low_sigma_operating_point(self):
        """At (sigma=0.04, mu=0.0021) the formula gives ~0.1145.

        A figure reporting 0.081 for these inputs is not reproducible
        from the relation itself; the formula value is the authoritative
        one here (frozen from the quadrature oracle).
        """
        assert halfspace_distance(0.04, 0.0021) == pytest.approx(0.11450945, abs=1e-4)
