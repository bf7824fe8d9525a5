from typing import Sequence, Tuple

import numpy as np

from smqtk_elbo.exceptions import DomainError
from smqtk_elbo.interfaces.ef_distribution import ENTROPY, EfDistribution, EntropyValue, as_rows
from smqtk_elbo.utils.special import sigmoid, softplus


class BernoulliProduct (EfDistribution):
    """
    Product of independent Bernoulli variables with log-odds natural
    parameters ``eta_h = log(pi_h / (1 - pi_h))``.

    >>> BernoulliProduct.from_standard([0.5, 0.5]).natural_params.tolist()
    [0.0, 0.0]
    """

    family = "bernoulli-product"

    @classmethod
    def check_natural_params(cls, eta: np.ndarray) -> None:
        if eta.size < 1:
            raise DomainError("Bernoulli product needs at least one variable.")

    @classmethod
    def natural_params_and_jacobian(
        cls,
        standard_params: Sequence[float]
    ) -> Tuple[np.ndarray, np.ndarray]:
        pi = np.array(standard_params, dtype=float).ravel()
        if pi.size < 1 or not np.isfinite(pi).all() or ((pi <= 0.0) | (pi >= 1.0)).any():
            raise DomainError("Bernoulli probabilities must lie strictly inside (0, 1).")
        eta = np.log(pi) - np.log1p(-pi)
        return eta, np.diag(1.0 / (pi * (1.0 - pi)))

    def standard_params(self) -> np.ndarray:
        return sigmoid(self._eta)

    @classmethod
    def log_partition(cls, eta: np.ndarray) -> float:
        return float(np.sum(softplus(eta)))

    @classmethod
    def grad_log_partition(cls, eta: np.ndarray) -> np.ndarray:
        return sigmoid(eta)

    def sufficient_statistics(self, x: np.ndarray) -> np.ndarray:
        x = as_rows(x)
        if x.shape[1] != self._eta.size or not np.isin(x, (0.0, 1.0)).all():
            raise DomainError(f"Bernoulli product data must be binary rows of length {self._eta.size}.")
        return x

    def entropy(self) -> EntropyValue:
        # Evaluated from log-odds so saturated probabilities stay finite.
        eta = self._eta
        return EntropyValue(float(np.sum(softplus(eta) - eta * sigmoid(eta))), ENTROPY)
