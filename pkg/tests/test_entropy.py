import math
import unittest

import numpy as np
import numpy.testing
import pytest
from scipy import stats

from smqtk_elbo.entropy import (
    bernoulli_product_entropy,
    categorical_entropy,
    family_type,
    gamma_entropy,
    gaussian_entropy_diagonal,
    gaussian_entropy_full,
    gaussian_entropy_scalar,
    natural_params_and_jacobian,
    poisson_pseudo_entropy,
    pseudo_entropy_generic,
)
from smqtk_elbo.exceptions import DomainError, UnsupportedError
from smqtk_elbo.impls.ef_distribution.gamma import GammaDistribution
from smqtk_elbo.impls.ef_distribution.poisson import PoissonProduct
from smqtk_elbo.interfaces.ef_distribution import ENTROPY, PSEUDO_ENTROPY


class TestClosedFormEntropies (unittest.TestCase):

    def test_bernoulli(self) -> None:
        assert bernoulli_product_entropy([0.5, 0.5]).value == pytest.approx(2 * math.log(2.), abs=1e-15)
        with pytest.raises(DomainError):
            bernoulli_product_entropy([1.0])

    def test_categorical(self) -> None:
        assert categorical_entropy([0.25] * 4).value == pytest.approx(math.log(4.), abs=1e-15)
        with pytest.raises(DomainError):
            categorical_entropy([0.5, 0.4])
        with pytest.raises(DomainError):
            categorical_entropy([1.0, 0.0])

    def test_gaussians_agree(self) -> None:
        var = np.array([0.5, 2.0, 3.0])
        scalar = gaussian_entropy_scalar(3, 2.0).value
        assert scalar == pytest.approx(gaussian_entropy_diagonal([2.0] * 3).value, abs=1e-13)
        assert gaussian_entropy_diagonal(var).value == pytest.approx(gaussian_entropy_full(np.diag(var)).value,
                                                                      abs=1e-13)
        cov = np.array([[2., 0.5], [0.5, 1.]])
        assert gaussian_entropy_full(cov).value == pytest.approx(
            float(stats.multivariate_normal(np.zeros(2), cov).entropy()), abs=1e-12)

    def test_gaussian_invalid(self) -> None:
        with pytest.raises(DomainError):
            gaussian_entropy_scalar(2, 0.0)
        with pytest.raises(DomainError):
            gaussian_entropy_scalar(0, 1.0)
        with pytest.raises(DomainError):
            gaussian_entropy_diagonal([1.0, -1.0])
        with pytest.raises(DomainError):
            gaussian_entropy_full(np.diag([1.0, -1.0]))

    def test_gamma(self) -> None:
        assert gamma_entropy(1.0, 1.0).value == 1.0
        for alpha, beta in ((0.3, 2.0), (4.0, 0.5), (30.0, 7.0)):
            expected = float(stats.gamma(alpha, scale=1.0 / beta).entropy())
            assert gamma_entropy(alpha, beta).value == pytest.approx(expected, abs=1e-10)
        with pytest.raises(DomainError):
            gamma_entropy(-1.0, 1.0)
        with pytest.raises(DomainError):
            gamma_entropy(1.0, 0.0)


class TestPseudoEntropies (unittest.TestCase):

    def test_poisson(self) -> None:
        h = poisson_pseudo_entropy([1.0, math.e])
        assert h.kind == PSEUDO_ENTROPY
        assert h.value == pytest.approx(1.0, abs=1e-15)
        with pytest.raises(DomainError):
            poisson_pseudo_entropy([0.0])

    def test_generic_matches_poisson(self) -> None:
        lam = [0.7, 4.0, 12.5]
        generic = pseudo_entropy_generic(PoissonProduct.from_standard(lam))
        assert generic.value == pytest.approx(poisson_pseudo_entropy(lam).value, abs=1e-12)

    def test_generic_equals_entropy_for_constant_base_measure(self) -> None:
        g = GammaDistribution.from_standard([2.5, 1.5])
        h = pseudo_entropy_generic(g)
        assert h.value == pytest.approx(g.entropy().value, abs=1e-12)
        assert g.entropy().kind == ENTROPY

    def test_generic_unsupported(self) -> None:
        with pytest.raises(UnsupportedError):
            pseudo_entropy_generic(object())  # type: ignore


class TestFamilyRegistry (unittest.TestCase):

    def test_lookup(self) -> None:
        assert family_type("gamma") is GammaDistribution
        with pytest.raises(UnsupportedError):
            family_type("weibull")

    def test_natural_params_and_jacobian(self) -> None:
        eta, jac = natural_params_and_jacobian("poisson-product", [2.0, 0.5])
        numpy.testing.assert_allclose(eta, np.log([2.0, 0.5]))
        numpy.testing.assert_allclose(jac, np.diag([0.5, 2.0]))
