from typing import Sequence, Tuple

import numpy as np

from smqtk_elbo.exceptions import ContractError, DomainError
from smqtk_elbo.interfaces.ef_distribution import (
    EntropyValue,
    MixtureComponent,
    as_rows,
    unsupported_entropy,
)
from smqtk_elbo.utils.special import log_factorial_array


class PoissonProduct (MixtureComponent):
    """
    Product of ``D`` independent Poisson counts with rates ``lambda``.

    Natural parameters are ``log(lambda)``, sufficient statistics the counts
    themselves, and the base measure ``prod_d 1 / x_d!`` is not constant.
    """

    family = "poisson-product"
    constant_base_measure = False

    @classmethod
    def check_natural_params(cls, eta: np.ndarray) -> None:
        if eta.size < 1:
            raise DomainError("Poisson product needs at least one count.")

    @classmethod
    def natural_params_and_jacobian(
        cls,
        standard_params: Sequence[float]
    ) -> Tuple[np.ndarray, np.ndarray]:
        lam = np.array(standard_params, dtype=float).ravel()
        if lam.size < 1 or not np.isfinite(lam).all() or (lam <= 0.0).any():
            raise DomainError("Poisson rates must be positive.")
        return np.log(lam), np.diag(1.0 / lam)

    @property
    def data_dim(self) -> int:
        return self._eta.size

    @property
    def rates(self) -> np.ndarray:
        return np.exp(self._eta)

    def standard_params(self) -> np.ndarray:
        return self.rates

    @classmethod
    def log_partition(cls, eta: np.ndarray) -> float:
        return float(np.sum(np.exp(eta)))

    @classmethod
    def grad_log_partition(cls, eta: np.ndarray) -> np.ndarray:
        return np.exp(eta)

    @classmethod
    def validate_data(cls, x: np.ndarray) -> np.ndarray:
        x = np.array(as_rows(x), dtype=float)
        if not np.isfinite(x).all() or (x < 0).any() or (x != np.floor(x)).any():
            raise DomainError("Poisson data must be non-negative integer counts.")
        return x

    def sufficient_statistics(self, x: np.ndarray) -> np.ndarray:
        x = self.validate_data(x)
        if x.shape[1] != self.data_dim:
            raise ContractError(f"Expected data rows of length {self.data_dim}.")
        return x

    def log_base_measure(self, x: np.ndarray) -> np.ndarray:
        x = self.validate_data(x)
        return -np.sum(log_factorial_array(x), axis=1)

    def entropy(self) -> EntropyValue:
        raise unsupported_entropy(self.family)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.poisson(self.rates, size=(n, self.data_dim)).astype(float)

    @classmethod
    def weighted_fit(cls, x: np.ndarray, weights: np.ndarray) -> "PoissonProduct":
        x = cls.validate_data(x)
        w = np.asarray(weights, dtype=float)
        total = float(np.sum(w))
        if not total > 0.0:
            raise DomainError("Weights must have a positive sum.")
        lam = w @ x / total
        if (lam <= 0.0).any():
            raise DomainError("Weighted Poisson rate collapsed to zero.")
        return cls.from_standard(lam)

    def grad_log_density(self, x: np.ndarray) -> np.ndarray:
        x = self.validate_data(x)
        lam = self.rates
        return x / lam - 1.0
