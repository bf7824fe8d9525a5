"""
Evaluation of the ELBO and of its entropy-sum decomposition::

    F = (1/N) sum_n E_q[log p(x | z)] - KL(q^(n) || p(z))
    S = (1/N) sum_n H[q^(n)] - H[p(z)] - E_{q_bar}[H[p(x | z)]]

At stationary points of learning ``F == S``; ``verify_stationary`` checks
that equality for a fit. Families with a non-constant base measure use the
pseudo-ELBO and pseudo-entropies instead.
"""
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import TYPE_CHECKING, Any, Dict, Optional, Union

import numpy as np

from smqtk_elbo.dataset import Dataset, data_array
from smqtk_elbo.entropy import (
    gaussian_entropy_diagonal,
    gaussian_entropy_full,
    gaussian_entropy_scalar,
)
from smqtk_elbo.exceptions import ContractError, DomainError, UnsupportedError
from smqtk_elbo.interfaces.ef_distribution import ENTROPY, PSEUDO_ENTROPY
from smqtk_elbo.interfaces.generative_model import GenerativeModel
from smqtk_elbo.utils.linalg import as_matrix, logdet_psd, spd_inverse
from smqtk_elbo.variational import DiscreteVariationalState, VariationalState

if TYPE_CHECKING:  # pragma: no cover
    from smqtk_elbo.inference import FitReport


LOG = logging.getLogger(__name__)

#: Default relative tolerance of the stationary equality.
DEFAULT_TOL_EQ = 1e-6

DataLike = Union[Dataset, np.ndarray]


@dataclass(frozen=True)
class EntropyDecomposition:
    """
    The three entropy terms and their signed sum
    ``total = mean_q_entropy - prior_entropy - expected_obs_entropy``.
    """
    mean_q_entropy: float
    prior_entropy: float
    expected_obs_entropy: float
    total: float
    kind: str = ENTROPY

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class VerificationVerdict:
    """
    Outcome of checking the stationary equality of one fit.

    ``elbo`` holds the pseudo-ELBO when ``kind`` is the pseudo-entropy tag.
    """
    elbo: float
    entropy_sum: float
    abs_gap: float
    rel_gap: float
    tolerance: float
    passed: bool
    kind: str = ENTROPY
    reason: str = ""
    stationarity: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        d = asdict(self)
        d["pass"] = d.pop("passed")
        return d


def _resolve(model: GenerativeModel, data: DataLike, q: Optional[VariationalState]) -> VariationalState:
    x = data_array(data)
    if q is None:
        return model.posterior(x)
    if q.n_rows != x.shape[0]:
        raise ContractError(f"Variational state covers {q.n_rows} rows, data has {x.shape[0]}.")
    return q


def elbo(model: GenerativeModel, data: DataLike, q: Optional[VariationalState] = None) -> float:
    """
    Average ELBO over the data rows.

    :param model: Generative model.
    :param data: Observable rows.
    :param q: Variational state for the rows; the exact posterior when not
        given.

    :raises ContractError: ``q`` does not match the data or the model.

    :return: ``(1/N) sum_n E_q[log p(x^(n) | z)] - KL(q^(n) || p(z))``.
    """
    x = data_array(data)
    q = _resolve(model, x, q)
    ell = model.expected_log_likelihood(x, q)
    kl = model.kl_to_prior(q)
    return float(np.mean(ell - kl))


def pseudo_elbo(model: GenerativeModel, data: DataLike, q: Optional[VariationalState] = None) -> float:
    """
    ELBO shifted by the mean log base measure of the data. It has the same
    optimizers as the ELBO, and equals it for constant base measures.

    :param model: Generative model.
    :param data: Observable rows.
    :param q: Variational state; the exact posterior when not given.

    :return: ``elbo - (1/N) sum_n log h(x^(n))``.
    """
    x = data_array(data)
    shift = float(np.mean(model.log_base_measure(x)))
    return elbo(model, x, q) - shift


def aggregate_posterior(q: VariationalState) -> np.ndarray:
    """
    :param q: Discrete variational state.

    :raises UnsupportedError: Continuous latent variational state; its
        aggregate is a mixture that none of the entropy terms require.

    :return: Average ``q_bar`` of the per-row responsibilities.
    """
    if not isinstance(q, DiscreteVariationalState):
        raise UnsupportedError("The aggregate posterior is only materialized for discrete latents.")
    return q.aggregate()


def entropy_sum(
    model: GenerativeModel,
    q: VariationalState,
    pseudo: Optional[bool] = None
) -> EntropyDecomposition:
    """
    :param model: Generative model.
    :param q: Variational state, usually the exact posterior of the data.
    :param pseudo: Use observable pseudo-entropies. Defaults to true exactly
        when the model's base measure is not constant.

    :raises UnsupportedError: True entropies requested for a non-constant
        base measure.

    :return: Decomposition into the three entropy terms.
    """
    if pseudo is None:
        pseudo = not model.constant_base_measure
    mean_q = float(np.mean(q.entropies()))
    prior = model.prior_entropy().value
    observable = model.expected_observable_entropy(q, pseudo)
    kind = PSEUDO_ENTROPY if pseudo and not model.constant_base_measure else ENTROPY
    return EntropyDecomposition(mean_q, prior, observable, mean_q - prior - observable, kind)


def _ppca_inputs(W: np.ndarray, sigma2: float) -> np.ndarray:
    w = as_matrix(W, "W")
    if not (sigma2 > 0.0) or not math.isfinite(sigma2):
        raise DomainError(f"Noise variance must be positive, got {sigma2}.")
    return w


def ppca_stationary_elbo(W: np.ndarray, sigma2: float) -> float:
    """
    Closed-form value of the p-PCA ELBO at stationary points.

    >>> value = ppca_stationary_elbo(np.zeros((3, 1)), 1.0)
    >>> bool(abs(value + 1.5 * math.log(2 * math.pi * math.e)) < 1e-12)
    True

    :param W: ``(D, H)`` loadings.
    :param sigma2: Positive noise variance.

    :raises DomainError: ``sigma2 <= 0``.

    :return: ``-1/2 logdet(W^T W / sigma2 + I) - (D/2) log(2 pi e sigma2)``.
    """
    w = _ppca_inputs(W, sigma2)
    d, h = w.shape
    m = w.T @ w / sigma2 + np.eye(h)
    return -0.5 * logdet_psd(m) - gaussian_entropy_scalar(d, sigma2).value


def ppca_entropy_sum_uncancelled(W: np.ndarray, sigma2: float) -> float:
    """
    The p-PCA entropy sum with every term kept: posterior entropy minus the
    standard normal prior entropy minus the observable entropy.

    :param W: ``(D, H)`` loadings.
    :param sigma2: Positive noise variance.

    :raises DomainError: ``sigma2 <= 0``.

    :return: Entropy sum at the exact posterior.
    """
    w = _ppca_inputs(W, sigma2)
    d, h = w.shape
    posterior_cov = spd_inverse(w.T @ w / sigma2 + np.eye(h))
    return (gaussian_entropy_full(posterior_cov).value
            - gaussian_entropy_diagonal(np.ones(h)).value
            - gaussian_entropy_scalar(d, sigma2).value)


def stationary_gap(
    model: GenerativeModel,
    data: DataLike,
    tol_eq: float = DEFAULT_TOL_EQ,
) -> VerificationVerdict:
    """
    Compare the (pseudo-)ELBO with the entropy sum at the exact posterior of
    the data. No stationarity evidence is taken into account.

    :param model: Generative model.
    :param data: Observable rows.
    :param tol_eq: Relative tolerance of the equality.

    :return: Verdict passing iff the relative gap is within ``tol_eq``.
    """
    x = data_array(data)
    q = model.posterior(x)
    pseudo = not model.constant_base_measure
    objective = pseudo_elbo(model, x, q) if pseudo else elbo(model, x, q)
    decomposition = entropy_sum(model, q, pseudo)
    abs_gap = abs(objective - decomposition.total)
    rel_gap = abs_gap / max(1.0, abs(objective))
    passed = rel_gap <= tol_eq
    reason = "" if passed else f"relative gap {rel_gap!r} exceeds tolerance {tol_eq!r}"
    return VerificationVerdict(objective, decomposition.total, abs_gap, rel_gap,
                               tol_eq, passed, decomposition.kind, reason)


def verify_stationary(
    fit: "FitReport",
    data: DataLike,
    tol_eq: float = DEFAULT_TOL_EQ,
) -> VerificationVerdict:
    """
    Check the stationary equality for the final model of a fit.

    The gap is always computed. A fit that did not converge never passes,
    whatever its gap.

    :param fit: Fit report whose final model is verified.
    :param data: Observable rows the fit was run on.
    :param tol_eq: Relative tolerance of the equality.

    :return: Verdict; failures are verdict states, not exceptions.
    """
    verdict = stationary_gap(fit.final_model, data, tol_eq)
    stationarity = dict(fit.stationarity)
    passed = verdict.passed and fit.converged
    reasons = []
    if not fit.converged:
        reasons.append("non-stationary: the fit did not meet its convergence thresholds")
    if verdict.reason:
        reasons.append(verdict.reason)
    LOG.info("Stationary equality: objective=%r entropy_sum=%r rel_gap=%r pass=%s",
             verdict.elbo, verdict.entropy_sum, verdict.rel_gap, passed)
    return VerificationVerdict(verdict.elbo, verdict.entropy_sum, verdict.abs_gap, verdict.rel_gap,
                               tol_eq, passed, verdict.kind, "; ".join(reasons), stationarity)
