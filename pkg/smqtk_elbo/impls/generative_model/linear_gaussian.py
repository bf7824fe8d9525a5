import logging
import math
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from smqtk_elbo.entropy import gaussian_entropy_diagonal, gaussian_entropy_scalar
from smqtk_elbo.exceptions import ContractError, DomainError, NotApplicableError
from smqtk_elbo.impls.ef_distribution.gaussian import GaussianDiagonal, GaussianScalarVariance
from smqtk_elbo.interfaces.ef_distribution import EntropyValue
from smqtk_elbo.interfaces.generative_model import GenerativeModel, log_uniform
from smqtk_elbo.utils.linalg import logdet_psd, spd_inverse, sym_eigen
from smqtk_elbo.variational import GaussianVariationalState, VariationalState


LOG = logging.getLogger(__name__)

SCALAR_NOISE = "scalar"
DIAGONAL_NOISE = "diagonal"
NOISE_TYPES = (SCALAR_NOISE, DIAGONAL_NOISE)

_LOG_2PI = math.log(2.0 * math.pi)


class LinearGaussianModel (GenerativeModel):
    """
    Linear Gaussian latent variable model::

        p(z) = N(z; prior_mean, diag(prior_var))
        p(x | z) = N(x; W z + mu, diag(noise))

    With ``noise_type="scalar"`` one variance is shared by all observables
    (probabilistic PCA); with ``"diagonal"`` every observable has its own
    (factor analysis). The prior is either fixed, the standard p-PCA and
    factor analysis setting where ``Psi`` is empty, or trainable with
    ``Psi = (prior_mean, prior_var)``.

    ``Theta`` is ``(W[:, 0], ..., W[:, H-1], mu, noise)`` with one or ``D``
    noise entries.

    :param W: ``(D, H)`` loading matrix.
    :param mu: ``(D,)`` observable offset.
    :param noise_var: Observable noise variance(s): one value for scalar
        noise, ``D`` values for diagonal noise.
    :param noise_type: ``"scalar"`` or ``"diagonal"``.
    :param prior_mean: ``(H,)`` prior mean, zeros by default.
    :param prior_var: ``(H,)`` positive prior variances, ones by default.
    :param parameterized_prior: If the prior parameters are trainable.

    :raises DomainError: Non-positive variances or non-finite parameters.
    :raises ContractError: Inconsistent dimensions or unknown noise type.
    """

    family = "linear-gaussian"

    def __init__(
        self,
        W: Sequence[Sequence[float]],
        mu: Sequence[float],
        noise_var: Union[float, Sequence[float]],
        noise_type: str = SCALAR_NOISE,
        prior_mean: Optional[Sequence[float]] = None,
        prior_var: Optional[Sequence[float]] = None,
        parameterized_prior: bool = False,
    ):
        w = np.array(W, dtype=float)
        mu_a = np.array(mu, dtype=float).ravel()
        if w.ndim != 2 or w.shape[0] != mu_a.size or min(w.shape) < 1:
            raise ContractError(f"Loading matrix of shape {w.shape} does not match D={mu_a.size}.")
        d, h = w.shape
        if noise_type not in NOISE_TYPES:
            raise ContractError(f"Unknown noise type '{noise_type}', expected one of {NOISE_TYPES}.")
        noise = np.array(noise_var, dtype=float).ravel()
        if noise.size != (1 if noise_type == SCALAR_NOISE else d):
            raise ContractError(f"{noise_type} noise over D={d} takes {1 if noise_type == SCALAR_NOISE else d} "
                                f"variance(s), got {noise.size}.")
        m0 = np.zeros(h) if prior_mean is None else np.array(prior_mean, dtype=float).ravel()
        v0 = np.ones(h) if prior_var is None else np.array(prior_var, dtype=float).ravel()
        if m0.size != h or v0.size != h:
            raise ContractError(f"Prior mean and variance must have length H={h}.")
        for a in (w, mu_a, noise, m0, v0):
            if not np.isfinite(a).all():
                raise DomainError("Linear Gaussian parameters must be finite.")
            a.flags.writeable = False
        if (noise <= 0.0).any() or (v0 <= 0.0).any():
            raise DomainError("Noise and prior variances must be positive.")
        self._w = w
        self._mu = mu_a
        self._noise = noise
        self.noise_type = noise_type
        self._m0 = m0
        self._v0 = v0
        self.parameterized_prior = bool(parameterized_prior)

    def get_config(self) -> Dict[str, Any]:
        return {
            "W": self._w.tolist(),
            "mu": self._mu.tolist(),
            "noise_var": self._noise.tolist(),
            "noise_type": self.noise_type,
            "prior_mean": self._m0.tolist(),
            "prior_var": self._v0.tolist(),
            "parameterized_prior": self.parameterized_prior,
        }

    def _replace(self, **kwargs: Any) -> "LinearGaussianModel":
        c = self.get_config()
        c.update(kwargs)
        return LinearGaussianModel(**c)

    @property
    def latent_dim(self) -> int:
        return self._w.shape[1]

    @property
    def observable_dim(self) -> int:
        return self._w.shape[0]

    @property
    def has_parameterized_prior(self) -> bool:
        return self.parameterized_prior

    @property
    def is_ppca(self) -> bool:
        """
        :return: If this is standard probabilistic PCA: scalar noise and a
            fixed standard normal prior.
        """
        return (self.noise_type == SCALAR_NOISE and not self.parameterized_prior
                and not self._m0.any() and bool((self._v0 == 1.0).all()))

    @property
    def loadings(self) -> np.ndarray:
        return self._w

    @property
    def offset(self) -> np.ndarray:
        return self._mu

    @property
    def noise_var(self) -> np.ndarray:
        return self._noise

    @property
    def prior_mean(self) -> np.ndarray:
        return self._m0

    @property
    def prior_var(self) -> np.ndarray:
        return self._v0

    def noise_diagonal(self) -> np.ndarray:
        """
        :return: ``(D,)`` observable noise variances.
        """
        return np.broadcast_to(self._noise, (self.observable_dim,)).copy()

    def validate_data(self, x: np.ndarray) -> np.ndarray:
        x = np.array(x, dtype=float)
        if x.ndim == 1:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.observable_dim:
            raise ContractError(f"Expected rows of length {self.observable_dim}, got shape {x.shape}.")
        if not np.isfinite(x).all():
            raise DomainError("Linear Gaussian data must be finite.")
        return x

    def _check_state(self, q: VariationalState, n_rows: int = -1) -> GaussianVariationalState:
        if not isinstance(q, GaussianVariationalState):
            raise ContractError("Linear Gaussian models require a Gaussian variational state.")
        if q.means.shape[1] != self.latent_dim:
            raise ContractError(f"Variational means must have H={self.latent_dim} columns.")
        if n_rows >= 0 and q.n_rows != n_rows:
            raise ContractError(f"Variational state covers {q.n_rows} rows, data has {n_rows}.")
        return q

    #
    # Densities and posteriors
    #

    def posterior_covariance(self) -> np.ndarray:
        """
        :return: Posterior covariance ``(diag(1/prior_var) + W^T N^-1 W)^-1``,
            shared by all data points.
        """
        precision = np.diag(1.0 / self._v0) + self._w.T @ (self._w / self.noise_diagonal()[:, None])
        return spd_inverse(precision)

    def posterior(self, x: np.ndarray) -> GaussianVariationalState:
        x = self.validate_data(x)
        cov = self.posterior_covariance()
        proj = (x - self._mu) @ (self._w / self.noise_diagonal()[:, None]) + self._m0 / self._v0
        return GaussianVariationalState(proj @ cov, cov)

    def exact_posterior(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        q = self.posterior(x)
        if q.n_rows != 1:
            raise ContractError("exact_posterior takes a single observable row.")
        return q.means[0].copy(), self.posterior_covariance()

    def marginal_covariance(self) -> np.ndarray:
        """
        :return: ``(D, D)`` covariance ``W diag(prior_var) W^T + diag(noise)``
            of the observable marginal.
        """
        return (self._w * self._v0) @ self._w.T + np.diag(self.noise_diagonal())

    def log_marginal_likelihood(self, x: np.ndarray) -> np.ndarray:
        x = self.validate_data(x)
        cov = self.marginal_covariance()
        resid = x - (self._w @ self._m0 + self._mu)
        quad = np.sum(resid * np.linalg.solve(cov, resid.T).T, axis=1)
        return -0.5 * (self.observable_dim * _LOG_2PI + logdet_psd(cov) + quad)

    def log_joint(self, x: np.ndarray, z: Any) -> float:
        row = self.validate_data(x)
        if row.shape[0] != 1:
            raise ContractError("log_joint takes a single observable row.")
        zv = np.asarray(z, dtype=float).ravel()
        if zv.size != self.latent_dim or not np.isfinite(zv).all():
            raise ContractError(f"Latent value must be a finite vector of length {self.latent_dim}.")
        noise = self.noise_diagonal()
        resid = row[0] - self._w @ zv - self._mu
        log_prior = -0.5 * float(np.sum(_LOG_2PI + np.log(self._v0) + (zv - self._m0) ** 2 / self._v0))
        log_lik = -0.5 * float(np.sum(_LOG_2PI + np.log(noise) + resid ** 2 / noise))
        return log_prior + log_lik

    #
    # ELBO and entropy terms
    #

    def _expected_squared_residuals(self, x: np.ndarray, q: GaussianVariationalState) -> np.ndarray:
        """
        :return: ``(N, D)`` values ``E_q[(x_d - W_d z - mu_d)^2]``.
        """
        resid = x - q.means @ self._w.T - self._mu
        if q.shared_covariance:
            spread = np.einsum("dh,hk,dk->d", self._w, q.covariances[0], self._w)[None, :]
        else:
            spread = np.einsum("dh,nhk,dk->nd", self._w, q.covariances, self._w)
        return resid ** 2 + spread

    def expected_log_likelihood(self, x: np.ndarray, q: VariationalState) -> np.ndarray:
        x = self.validate_data(x)
        q = self._check_state(q, x.shape[0])
        noise = self.noise_diagonal()
        e = self._expected_squared_residuals(x, q)
        return -0.5 * (np.sum(_LOG_2PI + np.log(noise)) + np.sum(e / noise, axis=1))

    def kl_to_prior(self, q: VariationalState) -> np.ndarray:
        q = self._check_state(q)
        covs = q.covariances
        diag = np.diagonal(covs, axis1=1, axis2=2)
        spread = np.sum((diag + (q.means - self._m0) ** 2) / self._v0, axis=1)
        if q.shared_covariance:
            logdet = np.full(q.n_rows, logdet_psd(covs[0]))
        else:
            logdet = np.array([logdet_psd(c) for c in covs])
        return 0.5 * (spread - self.latent_dim + np.sum(np.log(self._v0)) - logdet)

    def prior_entropy(self) -> EntropyValue:
        return gaussian_entropy_diagonal(self._v0)

    def expected_observable_entropy(self, q: VariationalState, pseudo: bool = False) -> float:
        # Latent independent, and equal to the pseudo-entropy.
        self._check_state(q)
        if self.noise_type == SCALAR_NOISE:
            return gaussian_entropy_scalar(self.observable_dim, float(self._noise[0])).value
        return gaussian_entropy_diagonal(self._noise).value

    def latent_probe_states(self, rng: np.random.Generator, n: int) -> List[Any]:
        return list(rng.standard_normal((n, self.latent_dim)))

    def _sample_rows(self, rng: np.random.Generator, n: int) -> np.ndarray:
        z = self._m0 + np.sqrt(self._v0) * rng.standard_normal((n, self.latent_dim))
        eps = np.sqrt(self.noise_diagonal()) * rng.standard_normal((n, self.observable_dim))
        return z @ self._w.T + self._mu + eps

    #
    # Learning
    #

    def _moments(self, x: np.ndarray, q: VariationalState) -> Tuple[np.ndarray, GaussianVariationalState, np.ndarray]:
        x = self.validate_data(x)
        q = self._check_state(q, x.shape[0])
        mean_cov = np.mean(q.covariances, axis=0) if not q.shared_covariance else q.covariances[0]
        return x, q, mean_cov

    def m_step(self, x: np.ndarray, q: VariationalState) -> "LinearGaussianModel":
        x, q, mean_cov = self._moments(x, q)
        n, h = x.shape[0], self.latent_dim
        m = q.means
        ez = np.hstack([m, np.ones((n, 1))])
        ezz = ez.T @ ez
        ezz[:h, :h] += n * mean_cov
        b = np.linalg.solve(ezz, ez.T @ x).T
        w, mu = b[:, :h], b[:, h]
        resid = x - m @ w.T - mu
        e = np.mean(resid ** 2, axis=0) + np.einsum("dh,hk,dk->d", w, mean_cov, w)
        noise = np.array([e.mean()]) if self.noise_type == SCALAR_NOISE else e
        if (noise <= 0.0).any():
            raise DomainError("Noise variance collapsed to zero.")
        updates: Dict[str, Any] = {"W": w, "mu": mu, "noise_var": noise}
        if self.parameterized_prior:
            m0 = m.mean(axis=0)
            updates["prior_mean"] = m0
            updates["prior_var"] = np.diag(mean_cov) + np.mean((m - m0) ** 2, axis=0)
        return self._replace(**updates)

    def elbo_gradient(self, x: np.ndarray, q: VariationalState) -> np.ndarray:
        x, q, mean_cov = self._moments(x, q)
        n = x.shape[0]
        m = q.means
        noise_d = self.noise_diagonal()
        resid = x - m @ self._w.T - self._mu
        d_w = (resid.T @ m / n - self._w @ mean_cov) / noise_d[:, None]
        d_mu = resid.mean(axis=0) / noise_d
        e = np.mean(resid ** 2, axis=0) + np.einsum("dh,hk,dk->d", self._w, mean_cov, self._w)
        if self.noise_type == SCALAR_NOISE:
            s2 = float(self._noise[0])
            d_noise = np.array([-0.5 * self.observable_dim / s2 + 0.5 * e.sum() / s2 ** 2])
        else:
            d_noise = -0.5 / noise_d + 0.5 * e / noise_d ** 2
        parts = []
        if self.parameterized_prior:
            dev = m - self._m0
            parts.append(dev.mean(axis=0) / self._v0)
            spread = np.diag(mean_cov) + np.mean(dev ** 2, axis=0)
            parts.append(-0.5 / self._v0 + 0.5 * spread / self._v0 ** 2)
        parts += [d_w.T.ravel(), d_mu, d_noise]
        return np.concatenate(parts)

    def initialize(self, x: np.ndarray, seed: int) -> "LinearGaussianModel":
        """
        Initialize loadings from the leading eigenvectors of the sample
        covariance and the noise from the remaining spectrum. The prior is
        reset to the standard normal. Initialization is deterministic, the
        seed is unused.
        """
        x = self.validate_data(x)
        h, d = self.latent_dim, self.observable_dim
        mean = x.mean(axis=0)
        cov = (x - mean).T @ (x - mean) / x.shape[0]
        spectral = sym_eigen(cov)
        lam = spectral.eigenvalues
        floor = 1e-6 * max(float(lam[0]), 1e-12)
        tail = float(lam[h:].mean()) if h < d else 1e-3 * float(lam[-1])
        s2 = max(tail, floor)
        w = spectral.eigenvectors[:, :h] * np.sqrt(np.maximum(lam[:h] - s2, floor))
        if self.noise_type == SCALAR_NOISE:
            noise = np.array([s2])
        else:
            noise = np.maximum(np.diag(cov) - np.sum(w ** 2, axis=1), floor)
        return self._replace(W=w, mu=mean, noise_var=noise,
                             prior_mean=np.zeros(h), prior_var=np.ones(h))

    #
    # Parameter vectors
    #

    def prior_parameters(self) -> np.ndarray:
        if not self.parameterized_prior:
            return np.zeros(0)
        return np.concatenate([self._m0, self._v0])

    def observable_parameters(self) -> np.ndarray:
        return np.concatenate([self._w.T.ravel(), self._mu, self._noise])

    def _split_theta(self, theta: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        theta = np.asarray(theta, dtype=float).ravel()
        h, d = self.latent_dim, self.observable_dim
        if theta.size != self.observable_parameters().size:
            raise ContractError(f"Observable parameter vector must have length {self.observable_parameters().size}.")
        return theta[:h * d].reshape(h, d).T, theta[h * d:h * d + d], theta[h * d + d:]

    def with_parameters(self, psi: np.ndarray, theta: np.ndarray) -> "LinearGaussianModel":
        psi = np.asarray(psi, dtype=float).ravel()
        if psi.size != self.prior_parameters().size:
            raise ContractError(f"Prior parameter vector must have length {self.prior_parameters().size}.")
        w, mu, noise = self._split_theta(theta)
        updates: Dict[str, Any] = {"W": w, "mu": mu, "noise_var": noise}
        if self.parameterized_prior:
            h = self.latent_dim
            updates["prior_mean"] = psi[:h]
            updates["prior_var"] = psi[h:]
        return self._replace(**updates)

    def random_parameters(self, rng: np.random.Generator) -> "LinearGaussianModel":
        h, d = self.latent_dim, self.observable_dim
        updates: Dict[str, Any] = {
            "W": rng.standard_normal((d, h)),
            "mu": rng.standard_normal(d),
            "noise_var": log_uniform(rng, self._noise.size),
        }
        if self.parameterized_prior:
            updates["prior_mean"] = rng.standard_normal(h)
            updates["prior_var"] = log_uniform(rng, h)
        return self._replace(**updates)

    #
    # Natural parameter maps
    #

    def _require_parameterized_prior(self) -> None:
        if not self.parameterized_prior:
            raise NotApplicableError(
                "The prior of this model is fixed; the prior side of the "
                "parameterization criterion does not apply."
            )

    def prior_natural_params(self, psi: np.ndarray) -> np.ndarray:
        self._require_parameterized_prior()
        return GaussianDiagonal.natural_params_and_jacobian(psi)[0]

    def prior_natural_map(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        self._require_parameterized_prior()
        zeta, jac = GaussianDiagonal.natural_params_and_jacobian(self.prior_parameters())
        return zeta, jac, np.concatenate([np.zeros(self.latent_dim), -self._v0])

    def _observable_standard(self, z: Any, theta: np.ndarray) -> np.ndarray:
        zv = np.asarray(z, dtype=float).ravel()
        if zv.size != self.latent_dim:
            raise ContractError(f"Latent value must have length {self.latent_dim}.")
        w, mu, noise = self._split_theta(theta)
        return np.concatenate([w @ zv + mu, noise])

    def observable_natural_params(self, z: Any, theta: np.ndarray) -> np.ndarray:
        standard = self._observable_standard(z, theta)
        if self.noise_type == SCALAR_NOISE:
            return GaussianScalarVariance.natural_params_and_jacobian(standard)[0]
        return GaussianDiagonal.natural_params_and_jacobian(standard)[0]

    def observable_natural_map(self, z: Any) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        standard = self._observable_standard(z, self.observable_parameters())
        d = self.observable_dim
        if self.noise_type == SCALAR_NOISE:
            eta, jac = GaussianScalarVariance.natural_params_and_jacobian(standard)
        else:
            eta, jac = GaussianDiagonal.natural_params_and_jacobian(standard)
        # Columns of the noise entries only.
        return eta, jac[:, d:], -self._noise.copy()

    def theta_subset(self) -> np.ndarray:
        start = (self.latent_dim + 1) * self.observable_dim
        return np.arange(start, start + self._noise.size)
