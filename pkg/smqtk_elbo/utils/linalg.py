"""
Small dense linear algebra.

Matrices here are small (at most a few dozen rows) and dense, so clarity
and accuracy are favored over throughput.
"""
import logging
from typing import NamedTuple

import numpy as np

from smqtk_elbo.exceptions import ContractError, DomainError, NumericalFailure


LOG = logging.getLogger(__name__)

#: Symmetry tolerance, relative to ``max(1, max|A|)``.
SYMMETRY_TOL = 1e-12
#: Cyclic Jacobi sweep cap.
JACOBI_MAX_SWEEPS = 100
#: Off-diagonal Frobenius norm tolerance, relative to ``||A||_F``.
JACOBI_OFF_TOL = 1e-13


class SpectralDecomposition (NamedTuple):
    """
    Eigen-decomposition of a real symmetric matrix.

    ``eigenvalues`` are sorted in descending order and column ``i`` of
    ``eigenvectors`` is the unit eigenvector for ``eigenvalues[i]``.
    """
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        """
        :return: ``V diag(lambda) V^T``.
        """
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.T


def as_matrix(a: np.ndarray, name: str = "matrix") -> np.ndarray:
    """
    Coerce input into a finite, two dimensional float array copy.

    :param a: Array-like input.
    :param name: Name used in error messages.

    :raises ContractError: Input is not two dimensional or has non-finite
        entries.

    :return: New float64 array.
    """
    m = np.array(a, dtype=float)
    if m.ndim != 2:
        raise ContractError(f"{name} must be two dimensional, got shape "
                            f"{m.shape}.")
    if not np.isfinite(m).all():
        raise ContractError(f"{name} has non-finite entries.")
    return m


def check_symmetric(a: np.ndarray, name: str = "matrix") -> np.ndarray:
    """
    Check that the input is a square, finite matrix that is symmetric within
    ``SYMMETRY_TOL``.

    :param a: Array-like input.
    :param name: Name used in error messages.

    :raises ContractError: Non-square, non-finite or asymmetric input.

    :return: Float copy of the input.
    """
    m = as_matrix(a, name)
    if m.shape[0] != m.shape[1]:
        raise ContractError(f"{name} must be square, got shape {m.shape}.")
    scale = max(1.0, float(np.abs(m).max(initial=0.0)))
    if np.abs(m - m.T).max(initial=0.0) > SYMMETRY_TOL * scale:
        raise ContractError(f"{name} is not symmetric.")
    return m


def sym_eigen(
    a: np.ndarray,
    tol: float = JACOBI_OFF_TOL,
    max_sweeps: int = JACOBI_MAX_SWEEPS
) -> SpectralDecomposition:
    """
    Eigen-decomposition of a real symmetric matrix by cyclic Jacobi
    rotations.

    >>> d = sym_eigen(np.diag([1., 3., 2.]))
    >>> d.eigenvalues.tolist()
    [3.0, 2.0, 1.0]

    :param a: Symmetric matrix.
    :param tol: Sweeps stop once the off-diagonal Frobenius norm is at most
        ``tol * ||A||_F``.
    :param max_sweeps: Maximum number of full sweeps.

    :raises ContractError: Non-square, non-finite or asymmetric input.
    :raises NumericalFailure: No convergence within ``max_sweeps``.

    :return: Eigenvalues sorted descending with matching orthonormal
        eigenvectors.
    """
    m = check_symmetric(a, "A")
    # Exact symmetry from here on; rotations preserve it.
    m = 0.5 * (m + m.T)
    n = m.shape[0]
    v = np.eye(n)
    scale = float(np.sqrt(np.sum(m * m)))

    def off_norm() -> float:
        return float(np.sqrt(2.0 * np.sum(np.triu(m, 1) ** 2)))

    converged = scale == 0.0 or off_norm() <= tol * scale
    sweep = 0
    while not converged and sweep < max_sweeps:
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = m[p, q]
                if apq == 0.0:
                    continue
                theta = (m[q, q] - m[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 1.0 / (2.0 * theta)
                else:
                    t = np.copysign(1.0, theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                # A <- J^T A J, V <- V J
                col_p = m[:, p].copy()
                col_q = m[:, q].copy()
                m[:, p] = c * col_p - s * col_q
                m[:, q] = s * col_p + c * col_q
                row_p = m[p, :].copy()
                row_q = m[q, :].copy()
                m[p, :] = c * row_p - s * row_q
                m[q, :] = s * row_p + c * row_q
                m[p, q] = m[q, p] = 0.0
                vec_p = v[:, p].copy()
                vec_q = v[:, q].copy()
                v[:, p] = c * vec_p - s * vec_q
                v[:, q] = s * vec_p + c * vec_q
        sweep += 1
        converged = off_norm() <= tol * scale

    if not converged:
        raise NumericalFailure(
            f"Jacobi eigen-decomposition did not converge in {max_sweeps} "
            f"sweeps (off-diagonal norm {off_norm()}, scale {scale})."
        )
    LOG.log(1, "Jacobi converged after %d sweeps (n=%d)", sweep, n)

    evals = np.diag(m).copy()
    order = np.argsort(-evals, kind="stable")
    return SpectralDecomposition(evals[order], v[:, order])


def logdet_psd(a: np.ndarray) -> float:
    """
    Log-determinant of a symmetric positive-definite matrix, via its
    Cholesky factor.

    >>> round(logdet_psd(np.diag([np.e, np.e])), 12)
    2.0

    :param a: Symmetric positive-definite matrix.

    :raises ContractError: Non-square, non-finite or asymmetric input.
    :raises DomainError: Input is not positive definite.

    :return: ``log det A``.
    """
    m = check_symmetric(a, "A")
    try:
        chol = np.linalg.cholesky(0.5 * (m + m.T))
    except np.linalg.LinAlgError as ex:
        raise DomainError("Matrix is not positive definite.") from ex
    diag = np.diag(chol)
    if (diag <= 0).any():
        raise DomainError("Matrix is not positive definite.")
    return float(2.0 * np.sum(np.log(diag)))


def spd_inverse(a: np.ndarray) -> np.ndarray:
    """
    Inverse of a symmetric positive-definite matrix, symmetrized.

    :param a: Symmetric positive-definite matrix.

    :raises DomainError: Input is not positive definite.

    :return: ``A^-1``.
    """
    m = check_symmetric(a, "A")
    try:
        chol = np.linalg.cholesky(0.5 * (m + m.T))
    except np.linalg.LinAlgError as ex:
        raise DomainError("Matrix is not positive definite.") from ex
    chol_inv = np.linalg.inv(chol)
    inv = chol_inv.T @ chol_inv
    return 0.5 * (inv + inv.T)
