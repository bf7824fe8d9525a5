import math
from typing import Sequence, Tuple

import numpy as np

from smqtk_elbo.entropy import gaussian_entropy_diagonal, gaussian_entropy_scalar
from smqtk_elbo.exceptions import ContractError, DomainError
from smqtk_elbo.interfaces.ef_distribution import (
    EfDistribution,
    EntropyValue,
    MixtureComponent,
    as_rows,
)


_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


def _split_standard(standard_params: Sequence[float], n_var: int) -> Tuple[np.ndarray, np.ndarray]:
    s = np.array(standard_params, dtype=float).ravel()
    if s.size <= n_var or not np.isfinite(s).all():
        raise DomainError("Gaussian standard parameters must be finite means followed by variances.")
    mu, var = s[:-n_var], s[-n_var:]
    if (var <= 0.0).any():
        raise DomainError("Gaussian variances must be positive.")
    return mu, var


class GaussianScalarVariance (EfDistribution):
    """
    ``D``-dimensional Gaussian with covariance ``var * I``.

    Standard parameters are ``(mu_1, ..., mu_D, var)``; natural parameters are
    ``(mu / var, -1 / (2 var))`` with sufficient statistics
    ``(x_1, ..., x_D, |x|^2)``. The constant ``(2 pi)^(-D/2)`` is absorbed into
    the log-partition so the base measure is one.
    """

    family = "gaussian-scalar-var"

    @classmethod
    def check_natural_params(cls, eta: np.ndarray) -> None:
        if eta.size < 2:
            raise DomainError("Gaussian natural parameters need at least one mean entry.")
        if eta[-1] >= 0.0:
            raise DomainError("Gaussian precision component must be negative.")

    @classmethod
    def natural_params_and_jacobian(
        cls,
        standard_params: Sequence[float]
    ) -> Tuple[np.ndarray, np.ndarray]:
        mu, var = _split_standard(standard_params, 1)
        v = float(var[0])
        d = mu.size
        eta = np.append(mu / v, -0.5 / v)
        jac = np.zeros((d + 1, d + 1))
        jac[:d, :d] = np.eye(d) / v
        jac[:d, d] = -mu / v ** 2
        jac[d, d] = 0.5 / v ** 2
        return eta, jac

    def standard_params(self) -> np.ndarray:
        var = -0.5 / self._eta[-1]
        return np.append(self._eta[:-1] * var, var)

    @classmethod
    def log_partition(cls, eta: np.ndarray) -> float:
        lin, quad = eta[:-1], eta[-1]
        d = lin.size
        return float(-np.sum(lin ** 2) / (4.0 * quad)
                     - 0.5 * d * math.log(-2.0 * quad) + d * _HALF_LOG_2PI)

    @classmethod
    def grad_log_partition(cls, eta: np.ndarray) -> np.ndarray:
        lin, quad = eta[:-1], eta[-1]
        mean = -lin / (2.0 * quad)
        return np.append(mean, np.sum(mean ** 2) - 0.5 * lin.size / quad)

    def sufficient_statistics(self, x: np.ndarray) -> np.ndarray:
        x = as_rows(x)
        if x.shape[1] != self._eta.size - 1:
            raise ContractError(f"Expected data rows of length {self._eta.size - 1}.")
        return np.hstack([x, np.sum(x ** 2, axis=1, keepdims=True)])

    def entropy(self) -> EntropyValue:
        return gaussian_entropy_scalar(self._eta.size - 1, -0.5 / self._eta[-1])


class GaussianDiagonal (MixtureComponent):
    """
    ``D``-dimensional Gaussian with diagonal covariance.

    Standard parameters are ``(mu_1, ..., mu_D, var_1, ..., var_D)``; natural
    parameters are ``(mu / var, -1 / (2 var))`` with sufficient statistics
    ``(x, x^2)`` taken elementwise.
    """

    family = "gaussian-diagonal"

    @classmethod
    def check_natural_params(cls, eta: np.ndarray) -> None:
        if eta.size < 2 or eta.size % 2:
            raise DomainError("Diagonal Gaussian natural parameters must have even, positive length.")
        if (eta[eta.size // 2:] >= 0.0).any():
            raise DomainError("Gaussian precision components must be negative.")

    @classmethod
    def natural_params_and_jacobian(
        cls,
        standard_params: Sequence[float]
    ) -> Tuple[np.ndarray, np.ndarray]:
        s = np.array(standard_params, dtype=float).ravel()
        if s.size < 2 or s.size % 2:
            raise DomainError("Diagonal Gaussian standard parameters must be D means and D variances.")
        mu, var = _split_standard(s, s.size // 2)
        d = mu.size
        eta = np.concatenate([mu / var, -0.5 / var])
        jac = np.zeros((2 * d, 2 * d))
        jac[:d, :d] = np.diag(1.0 / var)
        jac[:d, d:] = np.diag(-mu / var ** 2)
        jac[d:, d:] = np.diag(0.5 / var ** 2)
        return eta, jac

    @property
    def data_dim(self) -> int:
        return self._eta.size // 2

    @property
    def mean(self) -> np.ndarray:
        return self.standard_params()[:self.data_dim]

    @property
    def variance(self) -> np.ndarray:
        return self.standard_params()[self.data_dim:]

    def standard_params(self) -> np.ndarray:
        d = self.data_dim
        var = -0.5 / self._eta[d:]
        return np.concatenate([self._eta[:d] * var, var])

    @classmethod
    def log_partition(cls, eta: np.ndarray) -> float:
        d = eta.size // 2
        lin, quad = eta[:d], eta[d:]
        return float(np.sum(-lin ** 2 / (4.0 * quad) - 0.5 * np.log(-2.0 * quad) + _HALF_LOG_2PI))

    @classmethod
    def grad_log_partition(cls, eta: np.ndarray) -> np.ndarray:
        d = eta.size // 2
        lin, quad = eta[:d], eta[d:]
        mean = -lin / (2.0 * quad)
        return np.concatenate([mean, mean ** 2 - 0.5 / quad])

    @classmethod
    def validate_data(cls, x: np.ndarray) -> np.ndarray:
        x = np.array(as_rows(x), dtype=float)
        if not np.isfinite(x).all():
            raise DomainError("Gaussian data must be finite.")
        return x

    def sufficient_statistics(self, x: np.ndarray) -> np.ndarray:
        x = as_rows(x)
        if x.shape[1] != self.data_dim:
            raise ContractError(f"Expected data rows of length {self.data_dim}.")
        return np.hstack([x, x ** 2])

    def log_density(self, x: np.ndarray) -> np.ndarray:
        x = as_rows(x)
        if x.shape[1] != self.data_dim:
            raise ContractError(f"Expected data rows of length {self.data_dim}.")
        mu, var = self.mean, self.variance
        return -0.5 * np.sum(np.log(2.0 * math.pi * var) + (x - mu) ** 2 / var, axis=1)

    def entropy(self) -> EntropyValue:
        return gaussian_entropy_diagonal(self.variance)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.mean + np.sqrt(self.variance) * rng.standard_normal((n, self.data_dim))

    @classmethod
    def weighted_fit(cls, x: np.ndarray, weights: np.ndarray) -> "GaussianDiagonal":
        x = as_rows(x)
        w = np.asarray(weights, dtype=float)
        total = float(np.sum(w))
        if not total > 0.0:
            raise DomainError("Weights must have a positive sum.")
        mu = w @ x / total
        var = w @ (x - mu) ** 2 / total
        if (var <= 0.0).any():
            raise DomainError("Weighted variance collapsed to zero.")
        return cls.from_standard(np.concatenate([mu, var]))

    def grad_log_density(self, x: np.ndarray) -> np.ndarray:
        x = as_rows(x)
        mu, var = self.mean, self.variance
        r = x - mu
        return np.hstack([r / var, -0.5 / var + 0.5 * r ** 2 / var ** 2])
