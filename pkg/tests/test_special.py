"""Accuracy and domain checks for the hand-rolled special functions.

Reference values come from mpmath at 50 digits, so any systematic error
in the Lanczos constants or the asymptotic tail shows up directly.
"""

import mpmath
import numpy as np
import pytest

from poismult.special import digamma, log_factorial, log_gamma

mpmath.mp.dps = 50

GRID = np.concatenate([
    np.geomspace(1e-8, 0.5, 25),
    np.linspace(0.5, 12.0, 40),
    np.geomspace(12.0, 1e8, 25),
])


class TestLogGamma:
    def test_matches_mpmath_over_grid(self):
        want = np.array([float(mpmath.loggamma(v)) for v in GRID])
        got = log_gamma(GRID)
        scale = np.maximum(1.0, np.abs(want))
        np.testing.assert_allclose(got, want, rtol=0, atol=1e-13 * scale.max())
        assert np.max(np.abs(got - want) / scale) < 5e-15

    @pytest.mark.parametrize("x", [1.0, 2.0])
    def test_zeros(self, x):
        assert abs(log_gamma(x)) < 1e-14

    def test_recurrence(self):
        x = np.linspace(0.1, 30.0, 77)
        lhs = log_gamma(x + 1.0)
        rhs = log_gamma(x) + np.log(x)
        np.testing.assert_allclose(lhs, rhs, rtol=1e-13, atol=1e-13)

    def test_scalar_in_scalar_out(self):
        assert isinstance(log_gamma(3.5), float)
        assert log_gamma(np.array([3.5])).shape == (1,)

    @pytest.mark.parametrize("bad", [0.0, -1.0, np.nan, np.inf])
    def test_domain(self, bad):
        with pytest.raises(ValueError, match="domain"):
            log_gamma(bad)


class TestDigamma:
    def test_matches_mpmath_over_grid(self):
        want = np.array([float(mpmath.digamma(v)) for v in GRID])
        got = digamma(GRID)
        scale = np.maximum(1.0, np.abs(want))
        assert np.max(np.abs(got - want) / scale) < 5e-14

    def test_recurrence(self):
        x = np.linspace(0.05, 25.0, 60)
        np.testing.assert_allclose(digamma(x + 1.0), digamma(x) + 1.0 / x,
                                   rtol=1e-12, atol=1e-12)

    def test_euler_mascheroni(self):
        assert abs(digamma(1.0) + 0.5772156649015329) < 1e-13

    @pytest.mark.parametrize("bad", [0.0, -2.5, np.inf])
    def test_domain(self, bad):
        with pytest.raises(ValueError, match="domain"):
            digamma(bad)


class TestLogFactorial:
    def test_small_exact(self):
        want = [0.0, 0.0, np.log(2.0), np.log(6.0), np.log(24.0)]
        np.testing.assert_allclose(log_factorial(np.arange(5)), want,
                                   rtol=0, atol=1e-13)

    def test_large_matches_mpmath(self):
        n = np.array([50, 170, 1000, 10**6])
        want = [float(mpmath.loggamma(v + 1)) for v in n]
        np.testing.assert_allclose(log_factorial(n), want, rtol=1e-14)

    def test_negative_rejected(self):
        with pytest.raises(ValueError, match="negative"):
            log_factorial(-1)
