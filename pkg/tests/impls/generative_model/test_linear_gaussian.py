import unittest

import numpy as np
import numpy.testing
import pytest
from scipy.stats import multivariate_normal

from smqtk_core.configuration import configuration_test_helper

from smqtk_elbo import GenerativeModel
from smqtk_elbo.decompose import elbo
from smqtk_elbo.exceptions import ContractError, DomainError, NotApplicableError
from smqtk_elbo.impls.generative_model.linear_gaussian import LinearGaussianModel
from smqtk_elbo.utils.finite_diff import central_gradient


def make_model(noise_type: str = "scalar", parameterized_prior: bool = False) -> LinearGaussianModel:
    rng = np.random.default_rng(11)
    d, h = 5, 2
    noise = [0.3] if noise_type == "scalar" else list(np.linspace(0.2, 0.8, d))
    return LinearGaussianModel(
        rng.normal(0, 1, (d, h)), rng.normal(0, 1, d), noise, noise_type,
        prior_mean=[0.5, -0.2] if parameterized_prior else None,
        prior_var=[1.5, 0.7] if parameterized_prior else None,
        parameterized_prior=parameterized_prior,
    )


ALL_VARIANTS = [("scalar", False), ("diagonal", False), ("scalar", True), ("diagonal", True)]


class TestLinearGaussianModel (unittest.TestCase):

    def test_impl_findable(self) -> None:
        assert LinearGaussianModel in GenerativeModel.get_impls()

    def test_configuration(self) -> None:
        model = make_model("diagonal", True)
        for inst in configuration_test_helper(model):  # type: LinearGaussianModel
            numpy.testing.assert_equal(inst.loadings, model.loadings)
            numpy.testing.assert_equal(inst.noise_var, model.noise_var)
            numpy.testing.assert_equal(inst.prior_var, model.prior_var)
            assert inst.noise_type == "diagonal"
            assert inst.parameterized_prior

    def test_construction_errors(self) -> None:
        with pytest.raises(ContractError):
            LinearGaussianModel([[1.0], [0.0]], [0.0], 1.0)
        with pytest.raises(ContractError):
            LinearGaussianModel([[1.0], [0.0]], [0.0, 0.0], 1.0, noise_type="isotropic")
        with pytest.raises(ContractError):
            LinearGaussianModel([[1.0], [0.0]], [0.0, 0.0], [1.0, 1.0], noise_type="scalar")
        with pytest.raises(DomainError):
            LinearGaussianModel([[1.0], [0.0]], [0.0, 0.0], 0.0)
        with pytest.raises(DomainError):
            LinearGaussianModel([[np.nan], [0.0]], [0.0, 0.0], 1.0)

    def test_is_ppca(self) -> None:
        assert make_model("scalar").is_ppca
        assert not make_model("diagonal").is_ppca
        assert not make_model("scalar", True).is_ppca

    def test_log_marginal_likelihood(self) -> None:
        for noise_type, parameterized in ALL_VARIANTS:
            model = make_model(noise_type, parameterized)
            x = model.sample(20, seed=0).x
            mean = model.loadings @ model.prior_mean + model.offset
            cov = (model.loadings * model.prior_var) @ model.loadings.T + np.diag(model.noise_diagonal())
            numpy.testing.assert_allclose(model.log_marginal_likelihood(x),
                                          multivariate_normal(mean, cov).logpdf(x), rtol=1e-10)

    def test_posterior(self) -> None:
        model = make_model("diagonal", True)
        row = model.sample(1, seed=3).x
        mean, cov = model.exact_posterior(row)
        v0 = np.diag(model.prior_var)
        c = model.marginal_covariance()
        gain = v0 @ model.loadings.T @ np.linalg.inv(c)
        expected_mean = model.prior_mean + gain @ (row[0] - model.loadings @ model.prior_mean - model.offset)
        numpy.testing.assert_allclose(mean, expected_mean, rtol=1e-9, atol=1e-12)
        numpy.testing.assert_allclose(cov, v0 - gain @ model.loadings @ v0, rtol=1e-9, atol=1e-12)
        with pytest.raises(ContractError):
            model.exact_posterior(model.sample(2, seed=3).x)

    def test_log_joint(self) -> None:
        model = make_model("scalar")
        row = model.sample(1, seed=1).x
        z = np.array([0.3, -1.0])
        expected = (multivariate_normal(np.zeros(2), np.eye(2)).logpdf(z)
                    + multivariate_normal(model.loadings @ z + model.offset,
                                          np.diag(model.noise_diagonal())).logpdf(row[0]))
        self.assertAlmostEqual(model.log_joint(row, z), float(expected), places=10)
        with pytest.raises(ContractError):
            model.log_joint(row, [1.0])

    def test_elbo_at_exact_posterior(self) -> None:
        for noise_type, parameterized in ALL_VARIANTS:
            model = make_model(noise_type, parameterized)
            x = model.sample(100, seed=2).x
            self.assertAlmostEqual(elbo(model, x), float(np.mean(model.log_marginal_likelihood(x))), places=9)

    def test_elbo_gradient(self) -> None:
        for noise_type, parameterized in ALL_VARIANTS:
            model = make_model(noise_type, parameterized)
            x = model.sample(100, seed=4).x
            q = model.posterior(x)
            g = model.elbo_gradient(x, q)
            assert g.size == model.parameter_vector().size
            fd = central_gradient(lambda v: elbo(model.with_parameter_vector(v), x, q),
                                  model.parameter_vector())
            assert np.max(np.abs(g - fd)) <= 1e-5 * max(1.0, float(np.max(np.abs(g))))

    def test_m_step(self) -> None:
        for noise_type, parameterized in ALL_VARIANTS:
            model = make_model(noise_type, parameterized)
            x = model.sample(300, seed=6).x
            start = model.initialize(x, seed=0)
            q = start.posterior(x)
            updated = start.m_step(x, q)
            assert elbo(updated, x) >= elbo(start, x) - 1e-10
            numpy.testing.assert_allclose(updated.elbo_gradient(x, q), 0.0, atol=1e-8)

    def test_initialize(self) -> None:
        model = make_model("diagonal")
        x = model.sample(400, seed=8).x
        a = model.initialize(x, seed=0)
        b = model.initialize(x, seed=123)
        numpy.testing.assert_equal(a.parameter_vector(), b.parameter_vector())
        assert (a.noise_var > 0).all()
        numpy.testing.assert_allclose(a.offset, x.mean(axis=0))

    def test_parameter_vector(self) -> None:
        fixed = make_model("scalar")
        assert fixed.prior_parameters().size == 0
        assert fixed.parameter_vector().size == 5 * 2 + 5 + 1
        trainable = make_model("diagonal", True)
        assert trainable.parameter_vector().size == 4 + 5 * 2 + 5 + 5
        again = trainable.with_parameter_vector(trainable.parameter_vector())
        numpy.testing.assert_equal(again.prior_mean, trainable.prior_mean)
        with pytest.raises(ContractError):
            fixed.with_parameters([1.0], fixed.observable_parameters())

    def test_prior_natural_map(self) -> None:
        with pytest.raises(NotApplicableError):
            make_model("scalar").prior_natural_map()
        with pytest.raises(NotApplicableError):
            make_model("scalar").prior_natural_params(np.zeros(0))
        model = make_model("scalar", True)
        zeta, jac, alpha = model.prior_natural_map()
        numpy.testing.assert_allclose(zeta, np.concatenate([model.prior_mean / model.prior_var,
                                                            -0.5 / model.prior_var]))
        numpy.testing.assert_allclose(jac @ alpha, zeta, rtol=1e-12, atol=1e-12)

    def test_observable_natural_map(self) -> None:
        rng = np.random.default_rng(0)
        for noise_type in ("scalar", "diagonal"):
            model = make_model(noise_type)
            theta = model.observable_parameters()
            subset = model.theta_subset()
            numpy.testing.assert_equal(theta[subset], model.noise_var)
            for z in model.latent_probe_states(rng, 5):
                eta, jac, beta = model.observable_natural_map(z)
                numpy.testing.assert_allclose(eta, model.observable_natural_params(z, theta))
                assert jac.shape == (eta.size, subset.size)
                numpy.testing.assert_allclose(jac @ beta, eta, rtol=1e-12, atol=1e-12)

    def test_expected_observable_entropy(self) -> None:
        model = make_model("scalar")
        q = model.posterior(model.sample(3, seed=0).x)
        expected = 0.5 * 5 * np.log(2 * np.pi * np.e * 0.3)
        self.assertAlmostEqual(model.expected_observable_entropy(q), expected, places=12)
        self.assertAlmostEqual(model.expected_observable_entropy(q, pseudo=True), expected, places=12)
