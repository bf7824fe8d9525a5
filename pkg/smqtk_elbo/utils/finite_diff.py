"""
Central finite differences over flat parameter vectors.

Coordinate ``i`` moves by ``h = step * max(|p_i|, STEP_FLOOR)``, so steps
shrink with positive parameters near zero. Two central differences, at
``h`` and ``h / 2``, are combined by Richardson extrapolation, which leaves
a truncation error of order ``h^4``.
"""
from typing import Callable, Sequence

import numpy as np

from smqtk_elbo.exceptions import NumericalFailure


#: Relative step size.
DEFAULT_STEP = 1e-5
#: Smallest coordinate scale a step is taken relative to.
STEP_FLOOR = 1e-3


def _steps(point: np.ndarray, step: float) -> np.ndarray:
    return step * np.maximum(np.abs(point), STEP_FLOOR)


def _central(
    func: Callable[[np.ndarray], np.ndarray],
    p: np.ndarray,
    i: int,
    h: float
) -> np.ndarray:
    up = p.copy()
    down = p.copy()
    up[i] += h
    down[i] -= h
    return (np.asarray(func(up), dtype=float).ravel()
            - np.asarray(func(down), dtype=float).ravel()) / (2.0 * h)


def central_jacobian(
    func: Callable[[np.ndarray], np.ndarray],
    point: Sequence[float],
    step: float = DEFAULT_STEP
) -> np.ndarray:
    """
    Jacobian of a vector valued function by Richardson-extrapolated central
    differences.

    >>> central_jacobian(lambda p: np.array([p[0] * p[1], p[1]]), [2., 3.]).round(8).tolist()
    [[3.0, 2.0], [0.0, 1.0]]

    >>> abs(float(central_jacobian(lambda p: np.log(p), [1e-3])[0, 0]) / 1e3 - 1.0) < 1e-9
    True

    :param func: Function of a flat vector returning a flat vector.
    :param point: Evaluation point.
    :param step: Relative step size.

    :raises NumericalFailure: The function is not finite around the point.

    :return: ``(M, P)`` matrix ``d func / d point^T``.
    """
    p = np.array(point, dtype=float).ravel()
    h = _steps(p, step)
    columns = []
    for i in range(p.size):
        coarse = _central(func, p, i, h[i])
        fine = _central(func, p, i, 0.5 * h[i])
        diff = (4.0 * fine - coarse) / 3.0
        if not np.isfinite(diff).all():
            raise NumericalFailure(f"Non-finite evaluation around coordinate {i} of {p.tolist()}.")
        columns.append(diff)
    if not columns:
        return np.zeros((np.asarray(func(p)).size, 0))
    return np.stack(columns, axis=1)


def central_gradient(
    func: Callable[[np.ndarray], float],
    point: Sequence[float],
    step: float = DEFAULT_STEP
) -> np.ndarray:
    """
    Gradient of a scalar function by central differences.

    :param func: Scalar function of a flat vector.
    :param point: Evaluation point.
    :param step: Relative step size.

    :raises NumericalFailure: The function is not finite around the point.

    :return: ``(P,)`` gradient.
    """
    return central_jacobian(lambda v: np.atleast_1d(func(v)), point, step)[0]
