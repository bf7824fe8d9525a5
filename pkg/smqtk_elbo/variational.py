"""
Per-datum variational distributions ``q^(n)``.
"""
import abc
from typing import Any, Optional, Sequence

import numpy as np

from smqtk_elbo.entropy import gaussian_entropy_full
from smqtk_elbo.exceptions import ContractError
from smqtk_elbo.utils.linalg import check_symmetric, logdet_psd


#: Per-row normalization tolerance of responsibilities.
RESPONSIBILITY_TOL = 1e-12


class VariationalState (metaclass=abc.ABCMeta):
    """
    Collection of per-data-point variational distributions.
    """

    @property
    @abc.abstractmethod
    def n_rows(self) -> int:
        """
        :return: Number of data points covered.
        """

    @abc.abstractmethod
    def entropies(self) -> np.ndarray:
        """
        :return: ``(N,)`` entropies ``H[q^(n)]``.
        """

    @classmethod
    @abc.abstractmethod
    def concatenate(cls, parts: Sequence[Any]) -> "VariationalState":
        """
        :param parts: States of the same kind, in row order.

        :return: State covering the rows of all parts.
        """

    def __len__(self) -> int:
        return self.n_rows


class DiscreteVariationalState (VariationalState):
    """
    Responsibility vectors over an enumerated, finite latent domain.

    Responsibilities are stored in the log domain; rows must normalize to
    one within ``RESPONSIBILITY_TOL``.

    :param log_responsibilities: ``(N, K)`` log-probabilities.
    :param states: ``(K, H)`` latent values for each column, e.g. SBN bit
        vectors or ``(C, 1)`` mixture component indices.

    :raises ContractError: Shape mismatch or non-normalized rows.
    """

    def __init__(self, log_responsibilities: np.ndarray, states: np.ndarray):
        log_r = np.array(log_responsibilities, dtype=float)
        states = np.array(states, dtype=float)
        if log_r.ndim != 2 or states.ndim != 2 or states.shape[0] != log_r.shape[1]:
            raise ContractError(
                f"Responsibilities of shape {log_r.shape} do not match latent "
                f"states of shape {states.shape}."
            )
        if np.isnan(log_r).any() or (log_r > RESPONSIBILITY_TOL).any():
            raise ContractError("Log-responsibilities must be non-positive numbers.")
        log_r = np.minimum(log_r, 0.0)
        r = np.exp(log_r)
        if log_r.shape[0] and np.abs(r.sum(axis=1) - 1.0).max() > RESPONSIBILITY_TOL:
            raise ContractError("Responsibilities must sum to one per row.")
        log_r.flags.writeable = False
        r.flags.writeable = False
        states.flags.writeable = False
        self._log_r = log_r
        self._r = r
        self._states = states

    @classmethod
    def from_responsibilities(
        cls,
        responsibilities: np.ndarray,
        states: Optional[np.ndarray] = None
    ) -> "DiscreteVariationalState":
        """
        :param responsibilities: ``(N, K)`` probabilities.
        :param states: Optional ``(K, H)`` latent values; defaults to the
            column indices.

        :return: New state.
        """
        r = np.asarray(responsibilities, dtype=float)
        if states is None:
            states = np.arange(r.shape[1], dtype=float)[:, None]
        with np.errstate(divide="ignore"):
            return cls(np.log(r), states)

    @property
    def n_rows(self) -> int:
        return self._log_r.shape[0]

    @property
    def log_responsibilities(self) -> np.ndarray:
        return self._log_r

    @property
    def responsibilities(self) -> np.ndarray:
        return self._r

    @property
    def states(self) -> np.ndarray:
        return self._states

    def entropies(self) -> np.ndarray:
        # 0 log 0 = 0
        with np.errstate(invalid="ignore"):
            terms = np.where(self._r > 0.0, self._r * self._log_r, 0.0)
        return -np.sum(terms, axis=1)

    def aggregate(self) -> np.ndarray:
        """
        :return: ``(K,)`` aggregate posterior, the column mean of the
            responsibilities.
        """
        return np.mean(self._r, axis=0)

    @classmethod
    def concatenate(cls, parts: Sequence["DiscreteVariationalState"]) -> "DiscreteVariationalState":
        """
        Stack row blocks that share the same latent states.

        :param parts: States in row order.

        :return: Combined state.
        """
        return cls(np.vstack([p.log_responsibilities for p in parts]), parts[0].states)


class GaussianVariationalState (VariationalState):
    """
    Gaussian variational distributions ``N(m_n, S_n)``.

    :param means: ``(N, H)`` means.
    :param covariance: Either one ``(H, H)`` covariance shared by all rows or
        ``(N, H, H)`` per-row covariances. Covariances must be symmetric
        positive definite.

    :raises ContractError: Shape mismatch or asymmetric covariances.
    :raises smqtk_elbo.exceptions.DomainError: A covariance is not positive
        definite.
    """

    def __init__(self, means: np.ndarray, covariance: np.ndarray):
        means = np.array(means, dtype=float)
        cov = np.array(covariance, dtype=float)
        if means.ndim != 2:
            raise ContractError("Gaussian means must be an (N, H) array.")
        h = means.shape[1]
        if cov.shape == (h, h):
            self._shared = True
            covs = [cov]
        elif cov.shape == (means.shape[0], h, h):
            self._shared = False
            covs = list(cov)
        else:
            raise ContractError(f"Covariance shape {cov.shape} does not match means {means.shape}.")
        for c in covs:
            logdet_psd(check_symmetric(c, "covariance"))
        means.flags.writeable = False
        cov.flags.writeable = False
        self._means = means
        self._cov = cov

    @property
    def n_rows(self) -> int:
        return self._means.shape[0]

    @property
    def means(self) -> np.ndarray:
        return self._means

    @property
    def shared_covariance(self) -> bool:
        return self._shared

    @property
    def covariances(self) -> np.ndarray:
        """
        :return: ``(N, H, H)`` covariances (broadcast view when shared).
        """
        if self._shared:
            return np.broadcast_to(self._cov, (self.n_rows,) + self._cov.shape)
        return self._cov

    def entropies(self) -> np.ndarray:
        if self._shared:
            return np.full(self.n_rows, gaussian_entropy_full(self._cov).value)
        return np.array([gaussian_entropy_full(c).value for c in self._cov])

    @classmethod
    def concatenate(cls, parts: Sequence["GaussianVariationalState"]) -> "GaussianVariationalState":
        """
        Stack row blocks; a shared covariance is kept when all blocks share
        the same one.

        :param parts: States in row order.

        :return: Combined state.
        """
        means = np.vstack([p.means for p in parts])
        first = parts[0]
        if all(p.shared_covariance and np.array_equal(p._cov, first._cov) for p in parts):
            return cls(means, first._cov)
        return cls(means, np.concatenate([p.covariances for p in parts]))
