import math
import unittest

import numpy as np
import numpy.testing
import pytest
from scipy import stats

from smqtk_core.configuration import configuration_test_helper

from smqtk_elbo.exceptions import DomainError, UnsupportedError
from smqtk_elbo.interfaces.ef_distribution import PSEUDO_ENTROPY
from smqtk_elbo.impls.ef_distribution.poisson import PoissonProduct


class TestPoissonProduct (unittest.TestCase):

    def setUp(self) -> None:
        self.p = PoissonProduct.from_standard([0.5, 3.0])

    def test_base_measure_not_constant(self) -> None:
        assert PoissonProduct.constant_base_measure is False
        x = np.array([[0., 3.], [2., 1.]])
        numpy.testing.assert_allclose(self.p.log_base_measure(x), [-math.log(6.), -math.log(2.)])

    def test_log_density_matches_scipy(self) -> None:
        x = np.array([[0., 3.], [2., 1.], [7., 0.]])
        expected = stats.poisson(0.5).logpmf(x[:, 0]) + stats.poisson(3.0).logpmf(x[:, 1])
        numpy.testing.assert_allclose(self.p.log_density(x), expected, rtol=1e-12)

    def test_entropy_unsupported(self) -> None:
        with pytest.raises(UnsupportedError):
            self.p.entropy()

    def test_pseudo_entropy(self) -> None:
        h = self.p.pseudo_entropy()
        assert h.kind == PSEUDO_ENTROPY
        expected = sum(lam * (1. - math.log(lam)) for lam in (0.5, 3.0))
        self.assertAlmostEqual(h.value, expected, places=12)

    def test_weighted_fit(self) -> None:
        x = np.array([[1., 2.], [3., 4.], [100., 100.]])
        fit = PoissonProduct.weighted_fit(x, np.array([0.5, 0.5, 0.]))
        numpy.testing.assert_allclose(fit.rates, [2., 3.])

    def test_weighted_fit_zero_rate(self) -> None:
        with pytest.raises(DomainError):
            PoissonProduct.weighted_fit(np.array([[0., 1.]]), np.array([1.]))

    def test_invalid_data(self) -> None:
        with pytest.raises(DomainError):
            PoissonProduct.validate_data(np.array([[1.5, 2.]]))
        with pytest.raises(DomainError):
            PoissonProduct.validate_data(np.array([[-1., 2.]]))

    def test_configuration(self) -> None:
        for inst in configuration_test_helper(self.p):  # type: PoissonProduct
            numpy.testing.assert_allclose(inst.rates, [0.5, 3.0])
