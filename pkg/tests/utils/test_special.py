import math
import unittest

import numpy as np
import numpy.testing
import pytest
from scipy import special as sp

from smqtk_elbo.exceptions import DomainError
from smqtk_elbo.utils.special import (
    EULER_GAMMA,
    digamma,
    log_factorial,
    log_factorial_array,
    log_gamma,
    logsumexp,
    sigmoid,
    softplus,
    trigamma,
)


class TestGammaFunctions (unittest.TestCase):

    def test_log_gamma_reference_values(self) -> None:
        assert log_gamma(1.0) == 0.0
        assert log_gamma(2.0) == 0.0
        assert abs(log_gamma(0.5) - 0.5 * math.log(math.pi)) <= 1e-12
        assert abs(log_gamma(10.0) - math.log(362880.0)) <= 1e-12

    def test_log_gamma_recurrence(self) -> None:
        for a in (0.01, 0.3, 1.7, 4.2, 25.0, 140.5):
            assert abs(log_gamma(a + 1.0) - log_gamma(a) - math.log(a)) <= 1e-12 * max(1.0, abs(log_gamma(a)))

    def test_log_gamma_against_scipy(self) -> None:
        for a in np.linspace(0.05, 60.0, 37):
            assert abs(log_gamma(float(a)) - float(sp.gammaln(a))) <= 1e-12 * max(1.0, abs(float(sp.gammaln(a))))

    def test_digamma_reference_values(self) -> None:
        assert abs(digamma(1.0) + EULER_GAMMA) <= 1e-10
        assert abs(digamma(0.5) + EULER_GAMMA + 2 * math.log(2.0)) <= 1e-10

    def test_digamma_recurrence(self) -> None:
        for a in (0.02, 0.9, 3.3, 11.0):
            assert abs(digamma(a + 1.0) - digamma(a) - 1.0 / a) <= 1e-10 * max(1.0, 1.0 / a)

    def test_digamma_against_scipy(self) -> None:
        for a in np.linspace(0.1, 40.0, 25):
            assert abs(digamma(float(a)) - float(sp.digamma(a))) <= 1e-10

    def test_trigamma(self) -> None:
        assert abs(trigamma(1.0) - math.pi ** 2 / 6.0) <= 1e-10
        for a in np.linspace(0.2, 30.0, 15):
            assert abs(trigamma(float(a)) - float(sp.polygamma(1, a))) <= 1e-9 * max(1.0, float(sp.polygamma(1, a)))

    def test_domain_errors(self) -> None:
        for f in (log_gamma, digamma, trigamma):
            with pytest.raises(DomainError):
                f(0.0)
            with pytest.raises(DomainError):
                f(-1.5)
            with pytest.raises(DomainError):
                f(float("nan"))


class TestFactorials (unittest.TestCase):

    def test_small_table(self) -> None:
        assert log_factorial(0) == 0.0
        assert log_factorial(1) == 0.0
        self.assertAlmostEqual(log_factorial(5), math.log(120.0), places=14)

    def test_large(self) -> None:
        self.assertAlmostEqual(log_factorial(50), math.lgamma(51.0), places=9)

    def test_invalid(self) -> None:
        with pytest.raises(DomainError):
            log_factorial(-1)
        with pytest.raises(DomainError):
            log_factorial(2.5)  # type: ignore

    def test_array(self) -> None:
        k = np.array([[0, 3], [21, 7]])
        expected = [[0.0, math.log(6.0)], [math.lgamma(22.0), math.log(5040.0)]]
        numpy.testing.assert_allclose(log_factorial_array(k), expected, rtol=1e-12)
        with pytest.raises(DomainError):
            log_factorial_array(np.array([1.5]))


class TestStablePrimitives (unittest.TestCase):

    def test_logsumexp_axis(self) -> None:
        a = np.log(np.array([[1., 2.], [3., 4.]]))
        numpy.testing.assert_allclose(logsumexp(a, axis=1), np.log([3., 7.]), rtol=1e-14)
        numpy.testing.assert_allclose(logsumexp(a, axis=0), np.log([4., 6.]), rtol=1e-14)

    def test_logsumexp_large_values(self) -> None:
        self.assertAlmostEqual(float(logsumexp(np.array([1000., 1000.]))), 1000. + math.log(2.), places=10)

    def test_logsumexp_minus_infinity(self) -> None:
        self.assertAlmostEqual(float(logsumexp(np.array([-np.inf, 0.]))), 0.0, places=14)

    def test_sigmoid_softplus(self) -> None:
        a = np.array([-800., -2., 0., 3., 800.])
        s = sigmoid(a)
        assert np.isfinite(s).all()
        numpy.testing.assert_allclose(s, sp.expit(a), rtol=1e-14)
        numpy.testing.assert_allclose(softplus(a), np.logaddexp(0., a), rtol=1e-14)
        # d/da softplus = sigmoid
        h = 1e-6
        numpy.testing.assert_allclose((softplus(a[1:4] + h) - softplus(a[1:4] - h)) / (2 * h), s[1:4], rtol=1e-8)
