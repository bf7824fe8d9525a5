"""
Drive generative models to stationary points of the ELBO.

Every fit uses exact posteriors as variational distributions, so after each
E-step the ELBO equals the average log-likelihood of the data.
"""
import logging
import multiprocessing
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from smqtk_core.configuration import from_config_dict, to_config_dict
from smqtk_dataprovider.utils import SimpleTimer

from smqtk_elbo.dataset import Dataset, data_array
from smqtk_elbo.decompose import elbo, entropy_sum
from smqtk_elbo.exceptions import ContractError, DomainError
from smqtk_elbo.impls.generative_model.linear_gaussian import LinearGaussianModel
from smqtk_elbo.interfaces.generative_model import GenerativeModel
from smqtk_elbo.utils.linalg import sym_eigen
from smqtk_elbo.utils.parallel import chunk_bounds, parallel_map
from smqtk_elbo.variational import VariationalState


LOG = logging.getLogger(__name__)

DEFAULT_TOL_ELBO = 1e-10
DEFAULT_TOL_GRAD = 1e-8
DEFAULT_MAX_ITERS = 2000
#: Allowed per-iteration ELBO decrease before a monotonicity warning.
MONOTONICITY_SLACK = 1e-10

EM = "em"
CLOSED_FORM = "closed-form"

DataLike = Union[Dataset, np.ndarray]


@dataclass
class FitReport:
    """
    Result of fitting a model.

    ``elbo_trajectory`` holds the ELBO after every E-step, starting with the
    initial model, so it has ``iterations + 1`` entries for EM fits.
    ``stationarity`` holds the last absolute ELBO change (``elbo_delta``) and
    the infinity-norm of the ELBO gradient at the final model
    (``grad_inf_norm``).
    """
    final_model: GenerativeModel
    elbo_trajectory: List[float]
    stationarity: Dict[str, float]
    iterations: int
    converged: bool
    method: str = EM
    entropy_sum_trajectory: Optional[List[float]] = None
    degenerate_columns: List[int] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        d: Dict[str, Any] = {
            "final_model": to_config_dict(self.final_model),
            "elbo_trajectory": list(self.elbo_trajectory),
            "stationarity": dict(self.stationarity),
            "iterations": self.iterations,
            "converged": self.converged,
            "method": self.method,
            "degenerate_columns": list(self.degenerate_columns),
        }
        if self.entropy_sum_trajectory is not None:
            d["entropy_sum_trajectory"] = list(self.entropy_sum_trajectory)
        return d

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "FitReport":
        """
        :param d: Dictionary as produced by ``to_dict``.

        :raises ContractError: Missing fields.

        :return: Rebuilt report.
        """
        try:
            model = from_config_dict(d["final_model"], GenerativeModel.get_impls())
            return cls(
                final_model=model,
                elbo_trajectory=[float(v) for v in d["elbo_trajectory"]],
                stationarity={k: float(v) for k, v in d["stationarity"].items()},
                iterations=int(d["iterations"]),
                converged=bool(d["converged"]),
                method=d.get("method", EM),
                entropy_sum_trajectory=d.get("entropy_sum_trajectory"),
                degenerate_columns=list(d.get("degenerate_columns", [])),
            )
        except (KeyError, TypeError, AttributeError) as ex:
            raise ContractError(f"Malformed fit report: {ex}") from ex

    def trajectory_rows(self) -> List[Tuple[Any, ...]]:
        """
        :return: ``(iteration, elbo)`` rows, extended by the entropy sum when
            it was tracked.
        """
        if self.entropy_sum_trajectory is None:
            return [(i, v) for i, v in enumerate(self.elbo_trajectory)]
        return [(i, v, s) for i, (v, s) in enumerate(zip(self.elbo_trajectory, self.entropy_sum_trajectory))]


def _thread_count(threads: Optional[int]) -> int:
    if threads is None or threads <= 0:
        return multiprocessing.cpu_count()
    return int(threads)


def e_step(model: GenerativeModel, data: DataLike, threads: Optional[int] = 1) -> VariationalState:
    """
    Exact posteriors of all rows.

    Rows are split into contiguous chunks processed concurrently and merged
    in row order.

    :param model: Generative model.
    :param data: Observable rows.
    :param threads: Worker threads; ``None`` or values below one use all
        cores.

    :raises smqtk_elbo.exceptions.CapacityError: Posterior enumeration is
        beyond the model's capacity.

    :return: Variational state covering all rows.
    """
    x = data_array(data)
    threads = _thread_count(threads)
    if threads == 1 or x.shape[0] < 2:
        return model.posterior(x)
    bounds = chunk_bounds(x.shape[0], threads)
    parts = list(parallel_map(lambda b: model.posterior(x[b[0]:b[1]]), bounds,
                              cores=threads, name="e_step"))
    return parts[0].concatenate(parts)


def m_step(model: GenerativeModel, data: DataLike, q: VariationalState) -> GenerativeModel:
    """
    :param model: Generative model.
    :param data: Observable rows.
    :param q: Variational state covering the rows.

    :raises ContractError: ``q`` does not cover the rows.
    :raises smqtk_elbo.exceptions.DegenerateComponentError: A mixture
        component received no responsibility mass.

    :return: Model maximizing the ELBO for fixed ``q``.
    """
    x = data_array(data)
    if q.n_rows != x.shape[0]:
        raise ContractError(f"Variational state covers {q.n_rows} rows, data has {x.shape[0]}.")
    return model.m_step(x, q)


def gradient_elbo(model: GenerativeModel, data: DataLike, q: Optional[VariationalState] = None) -> np.ndarray:
    """
    :param model: Generative model.
    :param data: Observable rows.
    :param q: Variational state held fixed; the exact posterior when not
        given.

    :return: Gradient of the average ELBO over ``model.parameter_vector()``.
    """
    x = data_array(data)
    if q is None:
        q = model.posterior(x)
    return model.elbo_gradient(x, q)


def fit_em(
    model: GenerativeModel,
    data: DataLike,
    max_iters: int = DEFAULT_MAX_ITERS,
    tol_elbo: float = DEFAULT_TOL_ELBO,
    tol_grad: float = DEFAULT_TOL_GRAD,
    threads: Optional[int] = 1,
    track_entropy_sum: bool = False,
) -> FitReport:
    """
    Alternate exact E-steps and M-steps until the absolute ELBO change is at
    most ``tol_elbo`` and the ELBO gradient infinity-norm is at most
    ``tol_grad``, or ``max_iters`` M-steps were taken.

    Hitting the iteration cap is reported through ``converged=False`` rather
    than raised.

    :param model: Initial model.
    :param data: Observable rows.
    :param max_iters: Largest number of M-steps.
    :param tol_elbo: Absolute per-datum ELBO change threshold.
    :param tol_grad: Gradient infinity-norm threshold.
    :param threads: E-step worker threads.
    :param track_entropy_sum: Record the entropy sum after every E-step.

    :raises smqtk_elbo.exceptions.DegenerateComponentError: A mixture
        component collapsed during fitting.

    :return: Fit report.
    """
    if max_iters < 0:
        raise ContractError("max_iters must be non-negative.")
    x = model.validate_data(data_array(data))

    q = e_step(model, x, threads)
    value = elbo(model, x, q)
    trajectory = [value]
    entropy_sums: Optional[List[float]] = [entropy_sum(model, q).total] if track_entropy_sum else None
    grad_norm = float(np.max(np.abs(model.elbo_gradient(x, q))))
    delta = float("inf")
    iterations = 0
    converged = False
    with SimpleTimer(f"EM fit of a {model.tag} model", LOG.info):
        while True:
            if delta <= tol_elbo and grad_norm <= tol_grad:
                converged = True
                break
            if iterations >= max_iters:
                break
            model = model.m_step(x, q)
            iterations += 1
            q = e_step(model, x, threads)
            new_value = elbo(model, x, q)
            if new_value < value - MONOTONICITY_SLACK:
                LOG.warning("ELBO decreased by %r at iteration %d", value - new_value, iterations)
            delta = abs(new_value - value)
            value = new_value
            trajectory.append(value)
            if entropy_sums is not None:
                entropy_sums.append(entropy_sum(model, q).total)
            grad_norm = float(np.max(np.abs(model.elbo_gradient(x, q))))
            LOG.debug("Iteration %d: elbo=%r delta=%r grad_inf_norm=%r", iterations, value, delta, grad_norm)
    if not converged:
        LOG.warning("EM stopped after %d iterations without converging "
                    "(elbo_delta=%r, grad_inf_norm=%r)", iterations, delta, grad_norm)
    return FitReport(
        final_model=model,
        elbo_trajectory=trajectory,
        stationarity={"elbo_delta": delta, "grad_inf_norm": grad_norm},
        iterations=iterations,
        converged=converged,
        method=EM,
        entropy_sum_trajectory=entropy_sums,
    )


def _ppca_solution(data: DataLike, latent_dim: int) -> Tuple[LinearGaussianModel, List[int]]:
    x = data_array(data)
    n, d = x.shape
    if not 1 <= latent_dim < d:
        raise DomainError(f"Closed-form p-PCA needs 1 <= H < D, got H={latent_dim}, D={d}.")
    mean = x.mean(axis=0)
    centered = x - mean
    spectral = sym_eigen(centered.T @ centered / n)
    lam = spectral.eigenvalues
    sigma2 = float(np.mean(lam[latent_dim:]))
    if not sigma2 > 0.0:
        raise DomainError("Trailing covariance eigenvalues vanish; the noise variance is not positive.")
    scale = lam[:latent_dim] - sigma2
    degenerate = [int(i) for i in np.flatnonzero(scale <= 0.0)]
    if degenerate:
        LOG.warning("Loading columns %s are degenerate and were set to zero", degenerate)
    w = spectral.eigenvectors[:, :latent_dim] * np.sqrt(np.maximum(scale, 0.0))
    return LinearGaussianModel(w, mean, [sigma2]), degenerate


def fit_ppca_closed_form(data: DataLike, latent_dim: int) -> LinearGaussianModel:
    """
    Maximum likelihood probabilistic PCA from the eigendecomposition of the
    (1/N normalized) data covariance: the noise variance is the mean of the
    ``D - H`` smallest eigenvalues, and the loadings are
    ``U_H (Lambda_H - sigma2 I)^(1/2)``. Columns whose eigenvalue does not
    exceed the noise variance are set to zero.

    :param data: Observable rows.
    :param latent_dim: Latent dimension ``H``.

    :raises DomainError: ``H`` outside of ``[1, D)`` or a vanishing noise
        variance.

    :return: Fitted model with a standard normal prior.
    """
    return _ppca_solution(data, latent_dim)[0]


def fit_ppca_report(data: DataLike, latent_dim: int, tol_grad: float = DEFAULT_TOL_GRAD) -> FitReport:
    """
    Closed-form p-PCA fit wrapped into a report; the fit counts as converged
    when the ELBO gradient at the solution is within ``tol_grad``.

    :param data: Observable rows.
    :param latent_dim: Latent dimension ``H``.
    :param tol_grad: Gradient infinity-norm threshold.

    :return: Fit report with method ``closed-form``.
    """
    x = data_array(data)
    with SimpleTimer("Closed-form p-PCA fit", LOG.info):
        model, degenerate = _ppca_solution(x, latent_dim)
        q = model.posterior(x)
        value = elbo(model, x, q)
        grad_norm = float(np.max(np.abs(model.elbo_gradient(x, q))))
    return FitReport(
        final_model=model,
        elbo_trajectory=[value],
        stationarity={"elbo_delta": 0.0, "grad_inf_norm": grad_norm},
        iterations=0,
        converged=grad_norm <= tol_grad,
        method=CLOSED_FORM,
        degenerate_columns=degenerate,
    )


def trajectory_header(report: FitReport) -> Sequence[str]:
    if report.entropy_sum_trajectory is None:
        return ("iteration", "elbo")
    return ("iteration", "elbo", "entropy_sum")
