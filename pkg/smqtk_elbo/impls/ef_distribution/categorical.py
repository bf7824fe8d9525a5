from typing import Sequence, Tuple

import numpy as np

from smqtk_elbo.entropy import categorical_entropy
from smqtk_elbo.exceptions import DomainError
from smqtk_elbo.interfaces.ef_distribution import EfDistribution, EntropyValue, as_rows
from smqtk_elbo.utils.special import logsumexp


class Categorical (EfDistribution):
    """
    Categorical distribution over ``C`` classes using ``C - 1`` natural
    parameters ``eta_i = log(pi_i / pi_C)`` with the last class as the
    reference.

    The standard parameters are the first ``C - 1`` probabilities; the last
    one is implied by normalization. Data rows are single class indices in
    ``[0, C)``.
    """

    family = "categorical"

    @classmethod
    def check_natural_params(cls, eta: np.ndarray) -> None:
        if eta.size < 1:
            raise DomainError("Categorical distribution needs at least two classes.")

    @classmethod
    def from_probabilities(cls, pi: Sequence[float]) -> "Categorical":
        """
        :param pi: Full probability vector of length ``C``.

        :raises DomainError: Non-positive or non-normalized input.

        :return: New instance.
        """
        p = np.array(pi, dtype=float).ravel()
        categorical_entropy(p)  # domain check
        return cls.from_standard(p[:-1])

    @classmethod
    def natural_params_and_jacobian(
        cls,
        standard_params: Sequence[float]
    ) -> Tuple[np.ndarray, np.ndarray]:
        head = np.array(standard_params, dtype=float).ravel()
        if head.size < 1 or not np.isfinite(head).all():
            raise DomainError("Categorical standard parameters must be finite and non-empty.")
        last = 1.0 - float(np.sum(head))
        if (head <= 0.0).any() or last <= 0.0:
            raise DomainError("Categorical probabilities must be positive and sum to one.")
        eta = np.log(head) - np.log(last)
        jac = np.diag(1.0 / head) + 1.0 / last
        return eta, jac

    def probabilities(self) -> np.ndarray:
        """
        :return: Full probability vector of length ``C``.
        """
        logits = np.append(self._eta, 0.0)
        return np.exp(logits - logsumexp(logits))

    def standard_params(self) -> np.ndarray:
        return self.probabilities()[:-1]

    @classmethod
    def log_partition(cls, eta: np.ndarray) -> float:
        return float(logsumexp(np.append(eta, 0.0)))

    @classmethod
    def grad_log_partition(cls, eta: np.ndarray) -> np.ndarray:
        logits = np.append(eta, 0.0)
        return np.exp(logits - logsumexp(logits))[:-1]

    def sufficient_statistics(self, x: np.ndarray) -> np.ndarray:
        x = as_rows(x)
        n_classes = self._eta.size + 1
        if x.shape[1] != 1 or (x != np.floor(x)).any() or (x < 0).any() or (x >= n_classes).any():
            raise DomainError(f"Categorical data must be class indices in [0, {n_classes}).")
        idx = x[:, 0].astype(int)
        t = np.zeros((x.shape[0], n_classes))
        t[np.arange(x.shape[0]), idx] = 1.0
        return t[:, :-1]

    def entropy(self) -> EntropyValue:
        p = self.probabilities()
        return EntropyValue(float(-np.sum(p * np.log(p))))
