import math
import unittest

import numpy as np
import numpy.testing
import pytest

from smqtk_elbo.exceptions import DomainError
from smqtk_elbo.impls.ef_distribution.bernoulli import BernoulliProduct
from smqtk_elbo.impls.ef_distribution.categorical import Categorical
from smqtk_elbo.utils.finite_diff import central_jacobian


class TestBernoulliProduct (unittest.TestCase):

    def test_natural_params(self) -> None:
        b = BernoulliProduct.from_standard([0.5, 0.8])
        numpy.testing.assert_allclose(b.natural_params, [0., math.log(4.)])
        numpy.testing.assert_allclose(b.standard_params(), [0.5, 0.8])

    def test_entropy(self) -> None:
        b = BernoulliProduct.from_standard([0.5, 0.8])
        expected = math.log(2.) - 0.8 * math.log(0.8) - 0.2 * math.log(0.2)
        self.assertAlmostEqual(b.entropy().value, expected, places=12)
        self.assertAlmostEqual(b.pseudo_entropy().value, expected, places=12)

    def test_saturated_entropy_is_finite(self) -> None:
        b = BernoulliProduct([800., -800.])
        assert b.entropy().value == pytest.approx(0.0, abs=1e-12)

    def test_log_density(self) -> None:
        b = BernoulliProduct.from_standard([0.25, 0.6])
        x = np.array([[1., 0.], [0., 1.]])
        numpy.testing.assert_allclose(np.exp(b.log_density(x)), [0.25 * 0.4, 0.75 * 0.6], rtol=1e-12)

    def test_jacobian(self) -> None:
        pi = np.array([0.3, 0.9])
        _, jac = BernoulliProduct.natural_params_and_jacobian(pi)
        fd = central_jacobian(lambda p: BernoulliProduct.natural_params_and_jacobian(p)[0], pi)
        numpy.testing.assert_allclose(jac, fd, rtol=1e-6)

    def test_boundary(self) -> None:
        with pytest.raises(DomainError):
            BernoulliProduct.from_standard([0., 0.5])
        with pytest.raises(DomainError):
            BernoulliProduct.from_standard([0.5]).sufficient_statistics(np.array([[0.5]]))


class TestCategorical (unittest.TestCase):

    def test_probabilities(self) -> None:
        c = Categorical.from_probabilities([0.2, 0.3, 0.5])
        numpy.testing.assert_allclose(c.probabilities(), [0.2, 0.3, 0.5])
        numpy.testing.assert_allclose(c.natural_params, np.log([0.4, 0.6]))

    def test_entropy(self) -> None:
        c = Categorical.from_probabilities([0.2, 0.3, 0.5])
        expected = -sum(p * math.log(p) for p in (0.2, 0.3, 0.5))
        self.assertAlmostEqual(c.entropy().value, expected, places=12)
        self.assertAlmostEqual(c.pseudo_entropy().value, expected, places=12)

    def test_log_density(self) -> None:
        c = Categorical.from_probabilities([0.2, 0.3, 0.5])
        numpy.testing.assert_allclose(np.exp(c.log_density(np.array([[0.], [2.]]))), [0.2, 0.5], rtol=1e-12)

    def test_jacobian(self) -> None:
        head = np.array([0.2, 0.3])
        _, jac = Categorical.natural_params_and_jacobian(head)
        fd = central_jacobian(lambda p: Categorical.natural_params_and_jacobian(p)[0], head)
        numpy.testing.assert_allclose(jac, fd, rtol=1e-6)

    def test_invalid(self) -> None:
        with pytest.raises(DomainError):
            Categorical.from_probabilities([0.5, 0.6])
        with pytest.raises(DomainError):
            Categorical.from_probabilities([1.0, 0.0])
