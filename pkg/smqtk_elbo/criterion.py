"""
Numerical certification of the parameterization criterion.

A model fulfills the criterion when

* the prior natural parameters are a linear image of their own Jacobian,
  ``zeta(Psi) = (d zeta / d Psi^T) alpha(Psi)`` for some ``alpha`` (part A),
  and
* the observable natural parameters satisfy
  ``eta(z; Theta) = (d eta / d theta^T) beta(Theta)`` over a non-empty subset
  ``theta`` of ``Theta`` with one ``beta`` shared by every latent value ``z``
  (part B).

Both parts are checked by solving the linear least-squares problem for
``alpha``/``beta`` and reporting the relative residual, with Jacobians from
the models' analytic maps cross-checked by central finite differences.
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from smqtk_dataprovider.utils import SimpleTimer

from smqtk_elbo.exceptions import ContractError, DomainError, NotApplicableError, NumericalFailure
from smqtk_elbo.interfaces.generative_model import GenerativeModel
from smqtk_elbo.utils.artifacts import to_jsonable
from smqtk_elbo.utils.finite_diff import DEFAULT_STEP, central_jacobian
from smqtk_elbo.utils.linalg import sym_eigen
from smqtk_elbo.utils.parallel import parallel_map


LOG = logging.getLogger(__name__)

DEFAULT_TOL = 1e-8
DEFAULT_DRAWS = 50
DEFAULT_Z_SAMPLES = 64
#: Gram matrices whose smallest eigenvalue is at most this fraction of the
#: largest count as rank deficient.
RANK_TOL = 1e-12
#: Ridge added to rank deficient Gram matrices.
TIKHONOV_FLOOR = 1e-12

STATUS_CHECKED = "checked"
STATUS_NOT_APPLICABLE = "not-applicable"


@dataclass
class LeastSquaresSolution:
    coefficients: np.ndarray
    residual_rel: float
    rank_deficient: bool


def solve_least_squares(jacobian: np.ndarray, target: np.ndarray) -> LeastSquaresSolution:
    """
    Solve ``min_c ||J c - t||_2`` through the normal equations.

    >>> sol = solve_least_squares(np.eye(2), np.array([1., 2.]))
    >>> sol.coefficients.tolist(), sol.residual_rel, sol.rank_deficient
    ([1.0, 2.0], 0.0, False)

    :param jacobian: ``(M, P)`` matrix.
    :param target: ``(M,)`` vector.

    :raises ContractError: Mismatched shapes or an empty system.

    :return: Solution with the residual ``||J c - t|| / max(1, ||t||)``.
    """
    j = np.asarray(jacobian, dtype=float)
    t = np.asarray(target, dtype=float).ravel()
    if j.ndim != 2 or j.shape[0] != t.size or j.shape[1] < 1:
        raise ContractError(f"Cannot solve a system of shape {j.shape} against {t.size} targets.")
    gram = j.T @ j
    eigenvalues = sym_eigen(gram).eigenvalues
    largest = float(eigenvalues[0])
    rank_deficient = not largest > 0.0 or float(eigenvalues[-1]) <= RANK_TOL * largest
    if rank_deficient:
        gram = gram + TIKHONOV_FLOOR * np.eye(gram.shape[0])
    coef = np.linalg.solve(gram, j.T @ t)
    residual = float(np.linalg.norm(j @ coef - t)) / max(1.0, float(np.linalg.norm(t)))
    return LeastSquaresSolution(coef, residual, rank_deficient)


def _fd_disagreement(fd: np.ndarray, analytic: np.ndarray) -> float:
    if fd.shape != analytic.shape:
        raise ContractError(f"Analytic Jacobian of shape {analytic.shape} does not match {fd.shape}.")
    if fd.size == 0:
        return 0.0
    return float(np.max(np.abs(fd - analytic) / np.maximum(1.0, np.abs(analytic))))


def _closed_form_error(recovered: np.ndarray, closed: Optional[np.ndarray]) -> Optional[float]:
    if closed is None:
        return None
    closed = np.asarray(closed, dtype=float).ravel()
    if closed.shape != recovered.shape:
        raise ContractError(f"Closed form of length {closed.size} does not match {recovered.size} coefficients.")
    return float(np.max(np.abs(recovered - closed)) / max(1.0, float(np.max(np.abs(closed)))))


@dataclass
class PartACertificate:
    """
    Prior side of the criterion at one parameter point.

    ``closed_form_error`` is the infinity-norm distance between recovered
    and closed-form ``alpha`` relative to ``max(1, |alpha_closed|_inf)``;
    it is not reported for rank deficient Jacobians.
    ``fd_max_rel_error`` is the largest entrywise disagreement between the
    finite-difference and analytic Jacobians relative to
    ``max(1, |J_ij|)``.
    """
    status: str
    passed: bool
    jacobian: Optional[np.ndarray] = None
    alpha_recovered: Optional[np.ndarray] = None
    alpha_closed_form: Optional[np.ndarray] = None
    residual_rel: Optional[float] = None
    rank_deficient: bool = False
    closed_form_error: Optional[float] = None
    fd_max_rel_error: Optional[float] = None
    note: str = ""

    @classmethod
    def not_applicable(cls, note: str) -> "PartACertificate":
        return cls(status=STATUS_NOT_APPLICABLE, passed=True, note=note)

    def to_dict(self) -> Dict[str, Any]:
        d = to_jsonable(self.__dict__)
        d["pass"] = d.pop("passed")
        return d


@dataclass
class ZRecord:
    z: np.ndarray
    jacobian: np.ndarray
    residual_rel: float

    def to_dict(self) -> Dict[str, Any]:
        return to_jsonable(self.__dict__)


@dataclass
class PartBCertificate:
    """
    Observable side of the criterion at one parameter point: one ``beta``
    solved jointly across all latent probes, and each probe's residual under
    that shared solution.
    """
    passed: bool
    per_z_records: List[ZRecord]
    beta_recovered: np.ndarray
    residual_rel: float
    theta_subset: np.ndarray
    beta_closed_form: Optional[np.ndarray] = None
    rank_deficient: bool = False
    closed_form_error: Optional[float] = None
    fd_max_rel_error: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        d = to_jsonable({k: v for k, v in self.__dict__.items() if k != "per_z_records"})
        d["per_z_records"] = [r.to_dict() for r in self.per_z_records]
        d["pass"] = d.pop("passed")
        return d


@dataclass
class CriterionCertificate:
    """
    Both criterion parts at one sampled parameter point.
    """
    family: str
    draw: int
    parameter_point: Dict[str, np.ndarray]
    part_a: PartACertificate
    part_b: PartBCertificate
    tolerances: Dict[str, float]
    notes: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.part_a.passed and self.part_b.passed

    def to_dict(self) -> Dict[str, Any]:
        return {
            "family": self.family,
            "draw": self.draw,
            "parameter_point": to_jsonable(self.parameter_point),
            "part_a": self.part_a.to_dict(),
            "part_b": self.part_b.to_dict(),
            "tolerances": dict(self.tolerances),
            "notes": list(self.notes),
            "pass": self.passed,
        }


def _finite(values: np.ndarray, what: str) -> np.ndarray:
    v = np.asarray(values, dtype=float).ravel()
    if not np.isfinite(v).all():
        raise NumericalFailure(f"Non-finite {what}.")
    return v


def check_part_a(
    zeta_map: Callable[[np.ndarray], np.ndarray],
    psi: Sequence[float],
    closed_alpha: Optional[Sequence[float]] = None,
    jacobian: Optional[np.ndarray] = None,
    tol: float = DEFAULT_TOL,
    step: float = DEFAULT_STEP,
) -> PartACertificate:
    """
    :param zeta_map: Prior natural parameter map ``Psi -> zeta``.
    :param psi: Prior parameter point.
    :param closed_alpha: Optional closed-form ``alpha`` to compare with.
    :param jacobian: Optional analytic Jacobian; it is used for the solve and
        checked against central finite differences. Without it the finite
        difference Jacobian is used.
    :param tol: Relative residual tolerance.
    :param step: Relative finite-difference step.

    :raises NumericalFailure: The map is not finite around ``psi``.

    :return: Part A certificate.
    """
    psi_a = np.asarray(psi, dtype=float).ravel()
    zeta = _finite(zeta_map(psi_a), "prior natural parameters")
    fd = central_jacobian(zeta_map, psi_a, step)
    fd_error = None
    jac = fd
    if jacobian is not None:
        jac = np.asarray(jacobian, dtype=float)
        fd_error = _fd_disagreement(fd, jac)
    sol = solve_least_squares(jac, zeta)
    closed = None if closed_alpha is None else np.asarray(closed_alpha, dtype=float).ravel()
    closed_error = None if sol.rank_deficient else _closed_form_error(sol.coefficients, closed)
    return PartACertificate(
        status=STATUS_CHECKED,
        passed=sol.residual_rel <= tol,
        jacobian=jac,
        alpha_recovered=sol.coefficients,
        alpha_closed_form=closed,
        residual_rel=sol.residual_rel,
        rank_deficient=sol.rank_deficient,
        closed_form_error=closed_error,
        fd_max_rel_error=fd_error,
    )


def check_part_b(
    eta_map: Callable[[Any, np.ndarray], np.ndarray],
    theta: Sequence[float],
    theta_subset: Sequence[int],
    z_samples: Sequence[Any],
    closed_beta: Optional[Sequence[float]] = None,
    jacobians: Optional[Sequence[np.ndarray]] = None,
    tol: float = DEFAULT_TOL,
    step: float = DEFAULT_STEP,
) -> PartBCertificate:
    """
    :param eta_map: Observable natural parameter map ``(z, Theta) -> eta``.
    :param theta: Observable parameter point.
    :param theta_subset: Indices of the entries of ``Theta`` the Jacobians
        are taken over.
    :param z_samples: Latent values to probe.
    :param closed_beta: Optional closed-form ``beta`` to compare with.
    :param jacobians: Optional analytic Jacobians, one per latent probe.
    :param tol: Relative residual tolerance.
    :param step: Relative finite-difference step.

    :raises ContractError: No latent probes, an empty subset, or a subset
        outside of ``Theta``.
    :raises NumericalFailure: The map is not finite around ``theta``.

    :return: Part B certificate.
    """
    theta_a = np.asarray(theta, dtype=float).ravel()
    subset = np.asarray(theta_subset, dtype=int).ravel()
    if len(z_samples) == 0:
        raise ContractError("Part B needs at least one latent value.")
    if subset.size == 0 or subset.min() < 0 or subset.max() >= theta_a.size:
        raise ContractError("The parameter subset must be a non-empty set of indices into Theta.")
    if jacobians is not None and len(jacobians) != len(z_samples):
        raise ContractError("One analytic Jacobian per latent value is required.")

    etas, jacs = [], []
    fd_error: Optional[float] = None
    for i, z in enumerate(z_samples):
        def restricted(sub: np.ndarray, z: Any = z) -> np.ndarray:
            full = theta_a.copy()
            full[subset] = sub
            return np.asarray(eta_map(z, full), dtype=float).ravel()

        etas.append(_finite(eta_map(z, theta_a), f"observable natural parameters at z={z!r}"))
        fd = central_jacobian(restricted, theta_a[subset], step)
        if jacobians is None:
            jacs.append(fd)
        else:
            jac = np.asarray(jacobians[i], dtype=float)
            fd_error = max(fd_error or 0.0, _fd_disagreement(fd, jac))
            jacs.append(jac)

    sol = solve_least_squares(np.vstack(jacs), np.concatenate(etas))
    beta = sol.coefficients
    records = [
        ZRecord(np.asarray(z, dtype=float), jac,
                float(np.linalg.norm(jac @ beta - eta)) / max(1.0, float(np.linalg.norm(eta))))
        for z, jac, eta in zip(z_samples, jacs, etas)
    ]
    closed = None if closed_beta is None else np.asarray(closed_beta, dtype=float).ravel()
    closed_error = None if sol.rank_deficient else _closed_form_error(beta, closed)
    return PartBCertificate(
        passed=sol.residual_rel <= tol,
        per_z_records=records,
        beta_recovered=beta,
        residual_rel=sol.residual_rel,
        theta_subset=subset,
        beta_closed_form=closed,
        rank_deficient=sol.rank_deficient,
        closed_form_error=closed_error,
        fd_max_rel_error=fd_error,
    )


def certify_point(
    model: GenerativeModel,
    z_samples: Sequence[Any],
    tol: float = DEFAULT_TOL,
    step: float = DEFAULT_STEP,
    theta_subset: Optional[Sequence[int]] = None,
    draw: int = 0,
) -> CriterionCertificate:
    """
    Certify both criterion parts at the model's current parameters.

    :param model: Model whose parameters form the point.
    :param z_samples: Latent probes for part B.
    :param tol: Relative residual tolerance.
    :param step: Relative finite-difference step.
    :param theta_subset: Optional override of ``model.theta_subset()``.
        Analytic Jacobians and the closed-form ``beta`` only apply to the
        model's own subset; an override is checked with finite differences
        alone.
    :param draw: Index of the parameter draw, recorded in the certificate.

    :return: Certificate.
    """
    psi = model.prior_parameters()
    theta = model.observable_parameters()
    try:
        _zeta, jac_a, alpha = model.prior_natural_map()
    except NotApplicableError as ex:
        part_a = PartACertificate.not_applicable(str(ex))
    else:
        part_a = check_part_a(model.prior_natural_params, psi, alpha, jac_a, tol, step)

    own_subset = model.theta_subset()
    if theta_subset is None or np.array_equal(np.asarray(theta_subset), own_subset):
        maps = [model.observable_natural_map(z) for z in z_samples]
        part_b = check_part_b(model.observable_natural_params, theta, own_subset, z_samples,
                              closed_beta=maps[0][2], jacobians=[m[1] for m in maps],
                              tol=tol, step=step)
    else:
        part_b = check_part_b(model.observable_natural_params, theta, theta_subset, z_samples,
                              tol=tol, step=step)

    notes = []
    if not model.constant_base_measure:
        notes.append("non-constant base measure: the stationary equality holds for the "
                     "pseudo-ELBO and pseudo-entropies")
    return CriterionCertificate(
        family=model.tag,
        draw=draw,
        parameter_point={"psi": psi, "theta": theta},
        part_a=part_a,
        part_b=part_b,
        tolerances={"tol": tol, "fd_step": step},
        notes=notes,
    )


def certify_model(
    model: GenerativeModel,
    n_param_draws: int = DEFAULT_DRAWS,
    n_z_samples: int = DEFAULT_Z_SAMPLES,
    seed: int = 0,
    tol: float = DEFAULT_TOL,
    step: float = DEFAULT_STEP,
    threads: Optional[int] = 1,
    theta_subset: Optional[Sequence[int]] = None,
) -> List[CriterionCertificate]:
    """
    Certify the criterion at random parameter points of the model's
    structure.

    Every draw uses its own random stream spawned from ``seed``; draws are
    certified concurrently and returned in draw order, so results do not
    depend on the thread count.

    :param model: Model providing the structure.
    :param n_param_draws: Number of parameter points.
    :param n_z_samples: Latent probes per point for latent domains too large
        to enumerate.
    :param seed: Seed of the parameter and probe draws.
    :param tol: Relative residual tolerance.
    :param step: Relative finite-difference step.
    :param threads: Worker threads; ``None`` or values below one use all
        cores.
    :param theta_subset: Optional override of the part B parameter subset.

    :raises ContractError: Non-positive draw count.
    :raises NumericalFailure: Evaluation failed at a parameter point; the
        message carries the point.

    :return: One certificate per draw.
    """
    if n_param_draws < 1:
        raise ContractError("At least one parameter draw is required.")
    streams = np.random.SeedSequence(seed).spawn(n_param_draws)

    def work(index: int, stream: np.random.SeedSequence) -> CriterionCertificate:
        rng = np.random.default_rng(stream)
        point = model.random_parameters(rng)
        probes = point.latent_probe_states(rng, n_z_samples)
        try:
            return certify_point(point, probes, tol, step, theta_subset, index)
        except (NumericalFailure, DomainError) as ex:
            raise NumericalFailure(
                f"Criterion evaluation failed at draw {index} "
                f"(psi={point.prior_parameters().tolist()}, "
                f"theta={point.observable_parameters().tolist()}): {ex}"
            ) from ex

    cores = threads if threads is not None and threads > 0 else None
    with SimpleTimer(f"Certifying {n_param_draws} {model.tag} parameter draws", LOG.info):
        certificates = list(parallel_map(work, range(n_param_draws), streams,
                                         cores=cores, name="criterion"))
    failed = [c.draw for c in certificates if not c.passed]
    if failed:
        LOG.warning("Criterion failed for %s at draws %s", model.tag, failed)
    return certificates


def summarize(certificates: Sequence[CriterionCertificate]) -> Dict[str, Any]:
    """
    :param certificates: Certificates of one model.

    :return: Pass flag over all draws and the largest residuals of each part.
    """
    a_residuals = [c.part_a.residual_rel for c in certificates if c.part_a.residual_rel is not None]
    return {
        "family": certificates[0].family if certificates else None,
        "draws": len(certificates),
        "pass": all(c.passed for c in certificates),
        "part_a_status": certificates[0].part_a.status if certificates else None,
        "max_part_a_residual": max(a_residuals) if a_residuals else None,
        "max_part_b_residual": max((c.part_b.residual_rel for c in certificates), default=None),
    }
