"""
Closed-form entropies and pseudo-entropies of the exponential family
distributions used by the generative models, plus the family registry for
natural parameter maps.

All values are in nats. Sums over independent components are exactly rounded
and do not depend on component order.
"""
import math
from typing import Dict, Sequence, Tuple, Type

import numpy as np

from smqtk_elbo.exceptions import DomainError, UnsupportedError
from smqtk_elbo.interfaces.ef_distribution import (
    ENTROPY,
    PSEUDO_ENTROPY,
    EfDistribution,
    EntropyValue,
)
from smqtk_elbo.utils.linalg import logdet_psd
from smqtk_elbo.utils.special import digamma, log_gamma


LOG_2PI_E = math.log(2.0 * math.pi * math.e)
#: Normalization tolerance for categorical probability vectors.
SIMPLEX_TOL = 1e-12


def _vector(values: Sequence[float], name: str) -> np.ndarray:
    v = np.array(values, dtype=float).ravel()
    if v.size == 0:
        raise DomainError(f"{name} must not be empty.")
    if not np.isfinite(v).all():
        raise DomainError(f"{name} must be finite.")
    return v


def bernoulli_product_entropy(pi: Sequence[float]) -> EntropyValue:
    """
    Entropy of a product of independent Bernoulli variables.

    >>> bernoulli_product_entropy([0.5]).value == math.log(2)
    True

    :param pi: Success probabilities, each strictly inside (0, 1).

    :raises DomainError: A probability is at or outside the boundary.

    :return: ``sum_h -pi_h log pi_h - (1 - pi_h) log(1 - pi_h)``.
    """
    p = _vector(pi, "pi")
    if ((p <= 0.0) | (p >= 1.0)).any():
        raise DomainError("Bernoulli probabilities must lie strictly inside (0, 1).")
    return EntropyValue(math.fsum(-p * np.log(p) - (1.0 - p) * np.log1p(-p)), ENTROPY)


def check_simplex(pi: Sequence[float], name: str = "pi") -> np.ndarray:
    """
    :param pi: Probability vector.
    :param name: Name used in error messages.

    :raises DomainError: Non-positive entries or a sum differing from one by
        more than ``SIMPLEX_TOL``.

    :return: Float copy of the vector.
    """
    p = _vector(pi, name)
    if (p <= 0.0).any():
        raise DomainError(f"{name} entries must be positive.")
    if abs(float(np.sum(p)) - 1.0) > SIMPLEX_TOL:
        raise DomainError(f"{name} must sum to one (sum={np.sum(p)!r}).")
    return p


def categorical_entropy(pi: Sequence[float]) -> EntropyValue:
    """
    :param pi: Positive probability vector summing to one.

    :raises DomainError: Non-positive or non-normalized input.

    :return: ``-sum_c pi_c log pi_c``.
    """
    p = check_simplex(pi)
    return EntropyValue(-math.fsum(p * np.log(p)), ENTROPY)


def gaussian_entropy_scalar(dim: int, sigma2: float) -> EntropyValue:
    """
    Entropy of a ``dim``-dimensional Gaussian with covariance ``sigma2 I``.

    :param dim: Dimension, at least one.
    :param sigma2: Positive variance.

    :raises DomainError: Non-positive variance or dimension.

    :return: ``(dim / 2) log(2 pi e sigma2)``.
    """
    if int(dim) < 1:
        raise DomainError(f"Dimension must be at least 1, got {dim}.")
    if not (sigma2 > 0.0) or not math.isfinite(sigma2):
        raise DomainError(f"Variance must be positive and finite, got {sigma2}.")
    return EntropyValue(0.5 * int(dim) * (LOG_2PI_E + math.log(sigma2)), ENTROPY)


def gaussian_entropy_diagonal(sigma2: Sequence[float]) -> EntropyValue:
    """
    :param sigma2: Positive per-dimension variances.

    :raises DomainError: Any variance is not positive.

    :return: ``(1/2) sum_d log(2 pi e sigma2_d)``.
    """
    s = _vector(sigma2, "sigma2")
    if (s <= 0.0).any():
        raise DomainError("Variances must be positive.")
    return EntropyValue(0.5 * math.fsum(LOG_2PI_E + np.log(s)), ENTROPY)


def gaussian_entropy_full(sigma: np.ndarray) -> EntropyValue:
    """
    :param sigma: Symmetric positive-definite covariance matrix.

    :raises DomainError: Matrix is not positive definite.

    :return: ``(1/2) log((2 pi e)^H det sigma)``.
    """
    sigma = np.asarray(sigma, dtype=float)
    h = sigma.shape[0] if sigma.ndim == 2 else 0
    return EntropyValue(0.5 * (h * LOG_2PI_E + logdet_psd(sigma)), ENTROPY)


def gamma_entropy(alpha: float, beta: float) -> EntropyValue:
    """
    Entropy of the Gamma distribution with shape ``alpha`` and rate
    ``beta``.

    >>> gamma_entropy(1.0, 1.0).value
    1.0

    :param alpha: Positive shape.
    :param beta: Positive rate.

    :raises DomainError: Non-positive parameters.

    :return: ``alpha - log beta + log Gamma(alpha) + (1 - alpha) psi(alpha)``.
    """
    if not (beta > 0.0) or not math.isfinite(beta):
        raise DomainError(f"Gamma rate must be positive, got {beta}.")
    return EntropyValue(
        alpha - math.log(beta) + log_gamma(alpha) + (1.0 - alpha) * digamma(alpha),
        ENTROPY,
    )


def poisson_pseudo_entropy(lam: Sequence[float]) -> EntropyValue:
    """
    Pseudo-entropy of a product of independent Poisson variables.

    :param lam: Positive rates.

    :raises DomainError: Any rate is not positive.

    :return: ``sum_d lam_d (1 - log lam_d)``, tagged as a pseudo-entropy.
    """
    r = _vector(lam, "lambda")
    if (r <= 0.0).any():
        raise DomainError("Poisson rates must be positive.")
    return EntropyValue(math.fsum(r * (1.0 - np.log(r))), PSEUDO_ENTROPY)


def pseudo_entropy_generic(dist: EfDistribution) -> EntropyValue:
    """
    Generic pseudo-entropy ``-eta^T grad A(eta) + A(eta)``.

    :param dist: Exponential family distribution.

    :raises UnsupportedError: Input is not an exponential family
        distribution implementation.

    :return: Pseudo-entropy value.
    """
    if not isinstance(dist, EfDistribution):
        raise UnsupportedError(f"No exponential family form for {type(dist).__name__}.")
    return dist.pseudo_entropy()


def family_types() -> Dict[str, Type[EfDistribution]]:
    """
    :return: Mapping of family tag to distribution implementation type.
    """
    from smqtk_elbo.impls.ef_distribution.bernoulli import BernoulliProduct
    from smqtk_elbo.impls.ef_distribution.categorical import Categorical
    from smqtk_elbo.impls.ef_distribution.gamma import GammaDistribution
    from smqtk_elbo.impls.ef_distribution.gaussian import (
        GaussianDiagonal,
        GaussianScalarVariance,
    )
    from smqtk_elbo.impls.ef_distribution.poisson import PoissonProduct
    types = (BernoulliProduct, Categorical, GaussianScalarVariance,
             GaussianDiagonal, GammaDistribution, PoissonProduct)
    return {t.family: t for t in types}


def family_type(family: str) -> Type[EfDistribution]:
    """
    :param family: Family tag, e.g. ``"gamma"``.

    :raises UnsupportedError: Unknown family tag.

    :return: Distribution implementation type for the tag.
    """
    types = family_types()
    try:
        return types[family]
    except KeyError:
        raise UnsupportedError(f"Unknown exponential family '{family}'. "
                               f"Known families: {sorted(types)}")


def natural_params_and_jacobian(
    family: str,
    standard_params: Sequence[float]
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Map a family's standard parameters to natural parameters.

    >>> eta, jac = natural_params_and_jacobian("gamma", [2., 3.])
    >>> eta.tolist(), jac.tolist()
    ([1.0, -3.0], [[1.0, 0.0], [0.0, -1.0]])

    :param family: Family tag.
    :param standard_params: Standard parameter vector.

    :raises UnsupportedError: Unknown family tag.
    :raises DomainError: Parameters outside of the family's domain.

    :return: Natural parameters and the analytic Jacobian.
    """
    return family_type(family).natural_params_and_jacobian(standard_params)
