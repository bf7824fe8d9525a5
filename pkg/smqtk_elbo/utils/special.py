"""
Special functions and numerically stable elementwise helpers.

Scalar special functions (``log_gamma``, ``digamma``, ``trigamma``,
``log_factorial``) take and return Python floats; the remaining helpers are
vectorized over numpy arrays.
"""
import math
from numbers import Integral, Real
from typing import Optional, Union

import numpy as np

from smqtk_elbo.exceptions import DomainError


ArrayLike = Union[float, np.ndarray]

#: Lanczos approximation constants (g = 7, 9 coefficients).
LANCZOS_G = 7.0
LANCZOS_COEFFICIENTS = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)
EULER_GAMMA = 0.57721566490153286
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)

# Recurrence shifts arguments up to this value before the asymptotic series.
_ASYMPTOTIC_MIN = 6.0
# Bernoulli-number coefficients B_2k / (2k) of the digamma asymptotic series.
_DIGAMMA_SERIES = (
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
    -3617.0 / 8160.0,
)
# Bernoulli numbers B_2k of the trigamma asymptotic series.
_TRIGAMMA_SERIES = (
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
)
_FACTORIAL_TABLE_MAX = 20
_LOG_FACTORIAL_TABLE = tuple(math.log(math.factorial(k))
                             for k in range(_FACTORIAL_TABLE_MAX + 1))


def _positive_real(a: float, name: str) -> float:
    if isinstance(a, bool) or not isinstance(a, Real):
        raise DomainError(f"{name} must be a real number, got {a!r}.")
    a = float(a)
    if not (a > 0.0) or math.isinf(a):
        raise DomainError(f"{name} must be positive and finite, got {a}.")
    return a


def log_gamma(a: float) -> float:
    """
    Natural log of the Gamma function for positive real arguments.

    >>> log_gamma(1.0)
    0.0

    :param a: Positive real argument.

    :raises DomainError: ``a <= 0``.

    :return: ``log Gamma(a)``.
    """
    a = _positive_real(a, "a")
    if a == 1.0 or a == 2.0:
        return 0.0
    if a < 0.5:
        # Reflection: Gamma(a) Gamma(1 - a) = pi / sin(pi a), with sin > 0 on (0, 1/2).
        return math.log(math.pi) - math.log(math.sin(math.pi * a)) - log_gamma(1.0 - a)
    z = a - 1.0
    x = LANCZOS_COEFFICIENTS[0]
    for i, c in enumerate(LANCZOS_COEFFICIENTS[1:], start=1):
        x += c / (z + i)
    t = z + LANCZOS_G + 0.5
    return _HALF_LOG_2PI + (z + 0.5) * math.log(t) - t + math.log(x)


def digamma(a: float) -> float:
    """
    Digamma function ``psi(a) = d/da log Gamma(a)`` for positive real
    arguments.

    :param a: Positive real argument.

    :raises DomainError: ``a <= 0``.

    :return: ``psi(a)``.
    """
    a = _positive_real(a, "a")
    shift = 0.0
    while a < _ASYMPTOTIC_MIN:
        shift -= 1.0 / a
        a += 1.0
    inv2 = 1.0 / (a * a)
    series = 0.0
    power = inv2
    for coefficient in _DIGAMMA_SERIES:
        series += coefficient * power
        power *= inv2
    return shift + math.log(a) - 0.5 / a - series


def trigamma(a: float) -> float:
    """
    Trigamma function ``psi'(a)`` for positive real arguments.

    :param a: Positive real argument.

    :raises DomainError: ``a <= 0``.

    :return: ``psi'(a)``.
    """
    a = _positive_real(a, "a")
    shift = 0.0
    while a < _ASYMPTOTIC_MIN:
        shift += 1.0 / (a * a)
        a += 1.0
    inv = 1.0 / a
    inv2 = inv * inv
    series = 0.0
    power = inv2 * inv
    for b in _TRIGAMMA_SERIES:
        series += b * power
        power *= inv2
    return shift + inv + 0.5 * inv2 + series


def log_factorial(k: int) -> float:
    """
    ``log(k!)`` for non-negative integers, exact table up to ``k = 20``.

    >>> log_factorial(0)
    0.0

    :param k: Non-negative integer.

    :raises DomainError: ``k`` is negative or not an integer.

    :return: ``log(k!)``.
    """
    if isinstance(k, bool) or not isinstance(k, Integral):
        raise DomainError(f"log_factorial requires an integer, got {k!r}.")
    k = int(k)
    if k < 0:
        raise DomainError(f"log_factorial requires k >= 0, got {k}.")
    if k <= _FACTORIAL_TABLE_MAX:
        return _LOG_FACTORIAL_TABLE[k]
    return log_gamma(k + 1.0)


def log_factorial_array(k: np.ndarray) -> np.ndarray:
    """
    Elementwise ``log(k!)`` of a non-negative integer valued array.

    :param k: Array of non-negative integer values (any numeric dtype whose
        values are integral).

    :raises DomainError: Negative or non-integral values present.

    :return: Float array of the same shape.
    """
    k = np.asarray(k)
    if k.size and (not np.all(np.isfinite(k)) or np.any(k < 0) or np.any(k != np.floor(k))):
        raise DomainError("log_factorial_array requires non-negative integer values.")
    flat = k.astype(np.int64).ravel()
    out = np.empty(flat.shape, dtype=float)
    table = np.asarray(_LOG_FACTORIAL_TABLE)
    small = flat <= _FACTORIAL_TABLE_MAX
    out[small] = table[flat[small]]
    for i in np.flatnonzero(~small):
        out[i] = log_gamma(float(flat[i]) + 1.0)
    return out.reshape(k.shape)


def logsumexp(a: np.ndarray, axis: Optional[int] = None) -> np.ndarray:
    """
    Stable ``log(sum(exp(a)))`` along an axis.

    >>> float(logsumexp(np.log([1., 2., 3.])))  # doctest: +ELLIPSIS
    1.79175946...

    :param a: Input array.
    :param axis: Reduction axis, ``None`` for all entries.

    :return: Reduced array (or scalar array for ``axis=None``).
    """
    a = np.asarray(a, dtype=float)
    a_max = np.max(a, axis=axis, keepdims=True)
    a_max = np.where(np.isfinite(a_max), a_max, 0.0)
    out = np.log(np.sum(np.exp(a - a_max), axis=axis, keepdims=True)) + a_max
    if axis is None:
        return out.reshape(())
    return np.squeeze(out, axis=axis)


def sigmoid(a: ArrayLike) -> np.ndarray:
    """
    Logistic sigmoid ``1 / (1 + exp(-a))`` without overflow.
    """
    a = np.asarray(a, dtype=float)
    e = np.exp(-np.abs(a))
    return np.where(a >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def softplus(a: ArrayLike) -> np.ndarray:
    """
    ``log(1 + exp(a))`` without overflow.
    """
    return np.logaddexp(0.0, np.asarray(a, dtype=float))
