import abc
from typing import Any, ClassVar, Dict, NamedTuple, Sequence, Tuple, Type, TypeVar

import numpy as np

from smqtk_core import Configurable, Pluggable

from smqtk_elbo.exceptions import ContractError, DomainError, UnsupportedError


T = TypeVar("T", bound="EfDistribution")
M = TypeVar("M", bound="MixtureComponent")

ENTROPY = "entropy"
PSEUDO_ENTROPY = "pseudo-entropy"


class EntropyValue (NamedTuple):
    """
    An entropy in nats, tagged with whether it is a true entropy or a
    pseudo-entropy (computed as if the base measure were one).
    """
    value: float
    kind: str = ENTROPY


class EfDistribution (Configurable, Pluggable):
    """
    Exponential family distribution ``h(x) exp(eta^T T(x) - A(eta))`` held in
    its natural parameterization.

    Implementations name their family with the ``family`` class attribute
    and declare whether their base measure ``h`` is constant. Constant base
    measures are normalized to ``h = 1`` with any constant absorbed into
    ``A``, which makes the pseudo-entropy coincide with the entropy.

    Data passed to ``sufficient_statistics``, ``log_base_measure`` and
    ``log_density`` is a two dimensional ``(N, D)`` array.
    """

    family: ClassVar[str] = ""
    constant_base_measure: ClassVar[bool] = True

    def __init__(self, natural_params: Sequence[float]):
        """
        :param natural_params: Natural parameter vector ``eta``.

        :raises DomainError: ``eta`` outside of the family's natural
            parameter domain.
        """
        eta = np.array(natural_params, dtype=float).ravel()
        if not np.isfinite(eta).all():
            raise DomainError(f"{self.family} natural parameters must be finite.")
        self.check_natural_params(eta)
        eta.flags.writeable = False
        self._eta = eta

    @classmethod
    def is_usable(cls) -> bool:
        return True

    def get_config(self) -> Dict[str, Any]:
        return {"natural_params": self._eta.tolist()}

    def __repr__(self) -> str:
        return f"{self.__class__.__name__}({self._eta.tolist()})"

    @property
    def natural_params(self) -> np.ndarray:
        """
        :return: Copy of the natural parameter vector.
        """
        return self._eta.copy()

    @property
    def sufficient_statistic_arity(self) -> int:
        return int(self._eta.size)

    @classmethod
    def from_standard(cls: Type[T], standard_params: Sequence[float]) -> T:
        """
        Construct from standard parameters.

        :param standard_params: Standard parameter vector of the family.

        :raises DomainError: Parameters outside of the family's domain.

        :return: New instance.
        """
        eta, _ = cls.natural_params_and_jacobian(standard_params)
        return cls(eta)

    @classmethod
    @abc.abstractmethod
    def check_natural_params(cls, eta: np.ndarray) -> None:
        """
        :param eta: Natural parameter vector.

        :raises DomainError: ``eta`` is outside of the natural parameter
            domain or has an invalid length.
        """

    @classmethod
    @abc.abstractmethod
    def natural_params_and_jacobian(
        cls,
        standard_params: Sequence[float]
    ) -> Tuple[np.ndarray, np.ndarray]:
        """
        Map standard parameters to natural parameters.

        :param standard_params: Standard parameter vector.

        :raises DomainError: Parameters outside of the family's domain.

        :return: Natural parameters and the analytic Jacobian
            ``d eta / d standard^T``.
        """

    @abc.abstractmethod
    def standard_params(self) -> np.ndarray:
        """
        :return: Standard parameter vector of this distribution.
        """

    @classmethod
    @abc.abstractmethod
    def log_partition(cls, eta: np.ndarray) -> float:
        """
        :param eta: Natural parameter vector in the domain.

        :return: Log-partition ``A(eta)``.
        """

    @classmethod
    @abc.abstractmethod
    def grad_log_partition(cls, eta: np.ndarray) -> np.ndarray:
        """
        :param eta: Natural parameter vector in the domain.

        :return: Gradient ``dA/d eta``, i.e. the expected sufficient
            statistics.
        """

    @abc.abstractmethod
    def sufficient_statistics(self, x: np.ndarray) -> np.ndarray:
        """
        :param x: ``(N, D)`` data array.

        :raises DomainError: Data outside of the support.

        :return: ``(N, arity)`` array of ``T(x)`` rows.
        """

    def log_base_measure(self, x: np.ndarray) -> np.ndarray:
        """
        :param x: ``(N, D)`` data array.

        :return: ``(N,)`` array of ``log h(x)``; zeros for constant base
            measures.
        """
        return np.zeros(as_rows(x).shape[0])

    def log_density(self, x: np.ndarray) -> np.ndarray:
        """
        :param x: ``(N, D)`` data array.

        :return: ``(N,)`` log-density values.
        """
        x = as_rows(x)
        return (self.log_base_measure(x)
                + self.sufficient_statistics(x) @ self._eta
                - self.log_partition(self._eta))

    @abc.abstractmethod
    def entropy(self) -> EntropyValue:
        """
        :raises UnsupportedError: The family has no closed-form entropy.

        :return: Closed-form entropy.
        """

    def pseudo_entropy(self) -> EntropyValue:
        """
        Pseudo-entropy ``-eta^T grad A(eta) + A(eta)``: the entropy the
        density would have with base measure one.

        :return: Pseudo-entropy value.
        """
        eta = self._eta
        value = -float(eta @ self.grad_log_partition(eta)) + self.log_partition(eta)
        return EntropyValue(value, PSEUDO_ENTROPY)


class MixtureComponent (EfDistribution):
    """
    Exponential family distribution usable as an observable component of an
    exponential family mixture: it can be sampled, fit from weighted data,
    and differentiated with respect to its standard parameters.
    """

    @property
    @abc.abstractmethod
    def data_dim(self) -> int:
        """
        :return: Dimensionality ``D`` of a data row.
        """

    @abc.abstractmethod
    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """
        :param rng: Random generator to draw from.
        :param n: Number of draws.

        :return: ``(n, D)`` array of draws.
        """

    @classmethod
    @abc.abstractmethod
    def weighted_fit(cls: Type[M], x: np.ndarray, weights: np.ndarray) -> M:
        """
        Weighted maximum likelihood estimate.

        :param x: ``(N, D)`` data array.
        :param weights: ``(N,)`` non-negative weights with positive sum.

        :raises DomainError: The estimate leaves the parameter domain.

        :return: Fitted distribution.
        """

    @abc.abstractmethod
    def grad_log_density(self, x: np.ndarray) -> np.ndarray:
        """
        :param x: ``(N, D)`` data array.

        :return: ``(N, L)`` gradients of ``log p(x)`` with respect to the
            standard parameters.
        """

    @classmethod
    @abc.abstractmethod
    def validate_data(cls, x: np.ndarray) -> np.ndarray:
        """
        :param x: Data array.

        :raises DomainError: Values outside of the support.
        :raises ContractError: Malformed array.

        :return: Two dimensional float copy of the data.
        """


def as_rows(x: np.ndarray) -> np.ndarray:
    """
    :param x: One or two dimensional array-like.

    :raises ContractError: Input has more than two dimensions.

    :return: Two dimensional float view or copy, one datum per row.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise ContractError(f"Data must be one or two dimensional, got shape {x.shape}.")
    return x


def unsupported_entropy(family: str) -> UnsupportedError:
    return UnsupportedError(
        f"The {family} family has a non-constant base measure and no closed "
        f"form entropy; use the pseudo-entropy instead."
    )
