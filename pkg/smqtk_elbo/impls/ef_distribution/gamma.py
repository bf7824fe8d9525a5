import logging
import math
from typing import Sequence, Tuple

import numpy as np

from smqtk_elbo.entropy import gamma_entropy
from smqtk_elbo.exceptions import ContractError, DomainError, NumericalFailure
from smqtk_elbo.interfaces.ef_distribution import EntropyValue, MixtureComponent, as_rows
from smqtk_elbo.utils.special import digamma, log_gamma, trigamma


LOG = logging.getLogger(__name__)

#: Bracket of the shape solve.
SHAPE_BRACKET = (1e-3, 1e6)
SHAPE_TOL = 1e-12
SHAPE_MAX_ITERS = 200


def solve_gamma_shape(s: float) -> float:
    """
    Solve ``log(alpha) - psi(alpha) = s`` for the Gamma shape by safeguarded
    Newton iterations with bisection fallback inside ``SHAPE_BRACKET``.

    ``s`` is the gap between the log of the (weighted) mean and the mean of
    the logs, which is non-negative by Jensen's inequality. Values of ``s``
    outside of what the bracket can represent are clamped to the bracket
    edge with a warning.

    >>> round(solve_gamma_shape(math.log(3.0) - digamma(3.0)), 10)
    3.0

    :param s: Right hand side.

    :raises NumericalFailure: No convergence within ``SHAPE_MAX_ITERS``.

    :return: Shape ``alpha``.
    """
    lo, hi = SHAPE_BRACKET

    def f(a: float) -> float:
        return math.log(a) - digamma(a) - s

    # f is strictly decreasing in alpha.
    if f(hi) >= 0.0:
        LOG.warning("Gamma shape solve hit the upper bracket (s=%r)", s)
        return hi
    if f(lo) <= 0.0:
        LOG.warning("Gamma shape solve hit the lower bracket (s=%r)", s)
        return lo

    # Closed-form approximation as starting point.
    alpha = (3.0 - s + math.sqrt((s - 3.0) ** 2 + 24.0 * s)) / (12.0 * s)
    if not lo < alpha < hi:
        alpha = math.sqrt(lo * hi)
    for _ in range(SHAPE_MAX_ITERS):
        fa = f(alpha)
        if fa > 0.0:
            lo = alpha
        else:
            hi = alpha
        step = fa / (1.0 / alpha - trigamma(alpha))
        candidate = alpha - step
        if not lo < candidate < hi:
            candidate = 0.5 * (lo + hi)
        if abs(candidate - alpha) <= SHAPE_TOL * alpha or fa == 0.0:
            return candidate
        alpha = candidate
    raise NumericalFailure(f"Gamma shape solve did not converge (s={s!r}).")


class GammaDistribution (MixtureComponent):
    """
    Scalar Gamma distribution with shape ``alpha`` and rate ``beta``.

    Natural parameters are ``(alpha - 1, -beta)`` with sufficient statistics
    ``(log x, x)`` and base measure one on ``x > 0``.
    """

    family = "gamma"

    @classmethod
    def check_natural_params(cls, eta: np.ndarray) -> None:
        if eta.size != 2:
            raise DomainError("Gamma natural parameters have length 2.")
        if eta[0] <= -1.0 or eta[1] >= 0.0:
            raise DomainError("Gamma shape and rate must be positive.")

    @classmethod
    def natural_params_and_jacobian(
        cls,
        standard_params: Sequence[float]
    ) -> Tuple[np.ndarray, np.ndarray]:
        s = np.array(standard_params, dtype=float).ravel()
        if s.size != 2 or not np.isfinite(s).all() or (s <= 0.0).any():
            raise DomainError("Gamma standard parameters are a positive (shape, rate) pair.")
        return np.array([s[0] - 1.0, -s[1]]), np.array([[1.0, 0.0], [0.0, -1.0]])

    @property
    def data_dim(self) -> int:
        return 1

    @property
    def shape(self) -> float:
        return float(self._eta[0] + 1.0)

    @property
    def rate(self) -> float:
        return float(-self._eta[1])

    def standard_params(self) -> np.ndarray:
        return np.array([self.shape, self.rate])

    @classmethod
    def log_partition(cls, eta: np.ndarray) -> float:
        alpha = float(eta[0]) + 1.0
        return log_gamma(alpha) - alpha * math.log(-float(eta[1]))

    @classmethod
    def grad_log_partition(cls, eta: np.ndarray) -> np.ndarray:
        alpha, beta = float(eta[0]) + 1.0, -float(eta[1])
        return np.array([digamma(alpha) - math.log(beta), alpha / beta])

    @classmethod
    def validate_data(cls, x: np.ndarray) -> np.ndarray:
        x = np.array(as_rows(x), dtype=float)
        if x.shape[1] != 1:
            raise ContractError("Gamma data rows are scalars.")
        if not np.isfinite(x).all() or (x <= 0.0).any():
            raise DomainError("Gamma data must be positive and finite.")
        return x

    def sufficient_statistics(self, x: np.ndarray) -> np.ndarray:
        x = self.validate_data(x)
        return np.hstack([np.log(x), x])

    def entropy(self) -> EntropyValue:
        return gamma_entropy(self.shape, self.rate)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.gamma(self.shape, 1.0 / self.rate, size=(n, 1))

    @classmethod
    def weighted_fit(cls, x: np.ndarray, weights: np.ndarray) -> "GammaDistribution":
        x = cls.validate_data(x)[:, 0]
        w = np.asarray(weights, dtype=float)
        total = float(np.sum(w))
        if not total > 0.0:
            raise DomainError("Weights must have a positive sum.")
        mean = float(w @ x) / total
        mean_log = float(w @ np.log(x)) / total
        alpha = solve_gamma_shape(max(math.log(mean) - mean_log, 0.0))
        return cls.from_standard([alpha, alpha / mean])

    def grad_log_density(self, x: np.ndarray) -> np.ndarray:
        x = self.validate_data(x)[:, 0]
        alpha, beta = self.shape, self.rate
        d_alpha = math.log(beta) - digamma(alpha) + np.log(x)
        d_beta = alpha / beta - x
        return np.stack([d_alpha, d_beta], axis=1)
