import json
import unittest

import numpy as np
import numpy.testing
import pytest

from smqtk_elbo.criterion import (
    STATUS_CHECKED,
    STATUS_NOT_APPLICABLE,
    certify_model,
    certify_point,
    check_part_a,
    check_part_b,
    solve_least_squares,
    summarize,
)
from smqtk_elbo.exceptions import ContractError, NumericalFailure
from smqtk_elbo.impls.ef_distribution.bernoulli import BernoulliProduct
from smqtk_elbo.impls.ef_distribution.categorical import Categorical
from smqtk_elbo.impls.generative_model.ef_mixture import ExponentialFamilyMixture
from smqtk_elbo.impls.generative_model.linear_gaussian import LinearGaussianModel
from smqtk_elbo.impls.generative_model.sigmoid_belief_net import SigmoidBeliefNetwork
from smqtk_elbo.utils.artifacts import dumps


def five_families():
    return [
        ExponentialFamilyMixture("gaussian-diagonal", [0.5, 0.5], [[0.0, 0.0, 1.0, 1.0], [1.0, 1.0, 1.0, 1.0]]),
        ExponentialFamilyMixture("gamma", [0.5, 0.5], [[2.0, 1.0], [3.0, 1.0]]),
        ExponentialFamilyMixture("poisson-product", [0.2, 0.3, 0.5], [[1.0, 2.0], [3.0, 1.0], [2.0, 2.0]]),
        SigmoidBeliefNetwork([0.5, 0.5, 0.5], np.zeros((4, 3)), np.zeros(4)),
        LinearGaussianModel(np.ones((4, 2)), np.zeros(4), 1.0),
        LinearGaussianModel(np.ones((4, 2)), np.zeros(4), np.ones(4), "diagonal", parameterized_prior=True),
    ]


class TestSolveLeastSquares (unittest.TestCase):

    def test_rank_deficient(self) -> None:
        sol = solve_least_squares(np.array([[1.0, 1.0], [2.0, 2.0]]), np.array([2.0, 4.0]))
        assert sol.rank_deficient
        assert sol.residual_rel <= 1e-9

    def test_inconsistent(self) -> None:
        sol = solve_least_squares(np.array([[1.0], [1.0]]), np.array([1.0, -1.0]))
        numpy.testing.assert_allclose(sol.coefficients, [0.0], atol=1e-15)
        self.assertAlmostEqual(sol.residual_rel, 1.0, places=12)

    def test_contract(self) -> None:
        with pytest.raises(ContractError):
            solve_least_squares(np.ones((2, 2)), np.ones(3))
        with pytest.raises(ContractError):
            solve_least_squares(np.ones((2, 0)), np.ones(2))


class TestPartA (unittest.TestCase):

    def test_bernoulli_closed_form(self) -> None:
        pi = np.array([0.3, 0.7])
        zeta, jac = BernoulliProduct.natural_params_and_jacobian(pi)
        closed = pi * (1 - pi) * zeta
        cert = check_part_a(lambda p: BernoulliProduct.natural_params_and_jacobian(p)[0], pi,
                            closed_alpha=closed, jacobian=jac)
        assert cert.passed and cert.status == STATUS_CHECKED
        assert cert.residual_rel <= 1e-9
        assert cert.closed_form_error <= 1e-9
        assert cert.fd_max_rel_error <= 1e-6

    def test_categorical_uniform(self) -> None:
        cert = check_part_a(lambda p: Categorical.natural_params_and_jacobian(p)[0], [1 / 3, 1 / 3],
                            closed_alpha=[0.0, 0.0])
        assert cert.passed
        numpy.testing.assert_allclose(cert.alpha_recovered, 0.0, atol=1e-12)
        assert cert.residual_rel <= 1e-15

    def test_categorical_near_probability_clamp(self) -> None:
        for head in ([0.349, 0.001], [0.001, 0.998], [0.001, 0.001]):
            _, jac = Categorical.natural_params_and_jacobian(head)
            cert = check_part_a(lambda p: Categorical.natural_params_and_jacobian(p)[0], head, jacobian=jac)
            assert cert.passed
            assert cert.fd_max_rel_error <= 1e-6, (head, cert.fd_max_rel_error)

    def test_affine_counterexample(self) -> None:
        e = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        c = np.array([1.0, 1.0, -1.0])
        cert = check_part_a(lambda p: e @ p + c, [0.4, 0.2])
        assert not cert.passed
        assert cert.residual_rel > 1e-3
        assert cert.fd_max_rel_error is None

    def test_verdict_invariant_under_scaled_parameters(self) -> None:
        rng = np.random.default_rng(11)
        for base_model in five_families():
            if not base_model.has_parameterized_prior:
                continue
            for _ in range(5):
                model = base_model.random_parameters(rng)
                psi = model.prior_parameters()
                plain = check_part_a(model.prior_natural_params, psi)
                scaled = check_part_a(lambda p: model.prior_natural_params(p / 2.0), 2.0 * psi)
                assert plain.passed and scaled.passed, model.tag
                numpy.testing.assert_allclose(scaled.alpha_recovered, 2.0 * plain.alpha_recovered,
                                              rtol=1e-5, atol=1e-8)
        e = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        c = np.array([1.0, 1.0, -1.0])
        scaled = check_part_a(lambda p: e @ (p / 2.0) + c, [0.8, 0.4])
        assert not scaled.passed
        assert scaled.residual_rel == pytest.approx(check_part_a(lambda p: e @ p + c, [0.4, 0.2]).residual_rel,
                                                    rel=1e-6)

    def test_rank_deficient(self) -> None:
        cert = check_part_a(lambda p: np.array([p[0] + p[1], 2 * (p[0] + p[1])]), [0.5, 0.5],
                            closed_alpha=[0.5, 0.5])
        assert cert.rank_deficient
        assert cert.closed_form_error is None
        assert cert.passed

    def test_non_finite(self) -> None:
        with np.errstate(invalid="ignore", divide="ignore"):
            with pytest.raises(NumericalFailure):
                check_part_a(np.log, [-1.0])


class TestPartB (unittest.TestCase):

    def test_shared_beta(self) -> None:
        # eta = theta * z scales with the latent value: beta = theta for all z.
        cert = check_part_b(lambda z, t: t * z[0], [1.0, 2.0], [0, 1], [np.array([v]) for v in (0.5, 1.0, 3.0)])
        assert cert.passed
        numpy.testing.assert_allclose(cert.beta_recovered, [1.0, 2.0], rtol=1e-8)
        assert len(cert.per_z_records) == 3
        assert max(r.residual_rel for r in cert.per_z_records) <= 1e-8

    def test_latent_dependent_counterexample(self) -> None:
        cert = check_part_b(lambda z, t: t + z, [0.5, -0.5], [0, 1],
                            [np.array([0.0, 0.0]), np.array([1.0, 2.0]), np.array([-1.0, 3.0])])
        assert not cert.passed
        assert cert.residual_rel > 1e-3

    def test_contract(self) -> None:
        with pytest.raises(ContractError):
            check_part_b(lambda z, t: t, [1.0], [0], [])
        with pytest.raises(ContractError):
            check_part_b(lambda z, t: t, [1.0], [], [0.0])
        with pytest.raises(ContractError):
            check_part_b(lambda z, t: t, [1.0], [1], [0.0])
        with pytest.raises(ContractError):
            check_part_b(lambda z, t: t, [1.0], [0], [0.0, 1.0], jacobians=[np.eye(1)])


class TestCertify (unittest.TestCase):

    def test_all_families_pass(self) -> None:
        for model in five_families():
            certs = certify_model(model, n_param_draws=50, n_z_samples=16, seed=3)
            summary = summarize(certs)
            assert summary["pass"], (model.tag, summary)
            assert summary["draws"] == 50
            assert summary["max_part_b_residual"] <= 1e-8
            assert [c.draw for c in certs] == list(range(50))
            for c in certs:
                for part in (c.part_a, c.part_b):
                    if part.fd_max_rel_error is not None:
                        assert part.fd_max_rel_error <= 1e-6, (model.tag, c.draw, part.fd_max_rel_error)

    def test_fixed_prior_not_applicable(self) -> None:
        certs = certify_model(LinearGaussianModel(np.ones((3, 1)), np.zeros(3), 1.0), n_param_draws=3)
        summary = summarize(certs)
        assert summary["part_a_status"] == STATUS_NOT_APPLICABLE
        assert summary["max_part_a_residual"] is None
        assert summary["pass"]

    def test_closed_form_matches_recovered(self) -> None:
        model = SigmoidBeliefNetwork([0.3, 0.7], [[1.0, -1.0], [0.5, 2.0]], [0.1, -0.2])
        cert = certify_point(model, list(model.latent_states()))
        assert cert.passed
        assert cert.part_a.closed_form_error <= 1e-9
        assert cert.part_b.closed_form_error <= 1e-6
        assert cert.part_b.fd_max_rel_error <= 1e-6

    def test_subset_override(self) -> None:
        model = SigmoidBeliefNetwork([0.3, 0.7], [[1.0, -1.0], [0.5, 2.0]], [0.1, -0.2])
        offsets_only = np.arange(4, 6)
        cert = certify_point(model, list(model.latent_states()), theta_subset=offsets_only)
        assert not cert.passed
        assert cert.part_b.fd_max_rel_error is None

    def test_deterministic_across_threads(self) -> None:
        model = five_families()[0]
        serial = [c.to_dict() for c in certify_model(model, n_param_draws=6, seed=9, threads=1)]
        threaded = [c.to_dict() for c in certify_model(model, n_param_draws=6, seed=9, threads=3)]
        assert dumps(serial) == dumps(threaded)

    def test_serializable(self) -> None:
        cert = certify_model(five_families()[2], n_param_draws=1)[0]
        d = json.loads(dumps(cert.to_dict()))
        assert d["pass"] is True
        assert d["family"] == "ef-mixture/poisson-product"
        assert d["notes"]
        assert set(d["part_b"]) >= {"pass", "residual_rel", "beta_recovered", "per_z_records"}

    def test_invalid_draws(self) -> None:
        with pytest.raises(ContractError):
            certify_model(five_families()[0], n_param_draws=0)
