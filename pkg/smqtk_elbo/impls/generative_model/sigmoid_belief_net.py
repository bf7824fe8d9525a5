import itertools
import logging
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from smqtk_dataprovider.utils import SimpleTimer

from smqtk_elbo.entropy import bernoulli_product_entropy
from smqtk_elbo.exceptions import CapacityError, ContractError, DomainError
from smqtk_elbo.impls.ef_distribution.bernoulli import BernoulliProduct
from smqtk_elbo.interfaces.ef_distribution import EntropyValue
from smqtk_elbo.interfaces.generative_model import PROBE_ENUMERATION_MAX, DiscreteLatentModel
from smqtk_elbo.utils.special import sigmoid, softplus
from smqtk_elbo.variational import VariationalState


LOG = logging.getLogger(__name__)

#: Default largest latent dimension whose ``2^H`` states are enumerated.
DEFAULT_ENUMERATION_CAP = 20
#: Sufficient decrease constant and step shrink factor of the backtracking
#: line search in the observable M-step.
ARMIJO_C = 1e-4
ARMIJO_SHRINK = 0.5
ARMIJO_MAX_HALVINGS = 60
#: Relative size of objective changes below which steps are accepted without
#: a decrease test.
ROUNDING_FLOOR = 1e-14
#: Clamp applied to prior probabilities after the M-step.
PROBABILITY_FLOOR = 1e-12


def _binary(values: np.ndarray) -> bool:
    return bool(np.isin(values, (0.0, 1.0)).all())


class SigmoidBeliefNetwork (DiscreteLatentModel):
    """
    Two-layer sigmoid belief network with ``H`` independent Bernoulli latent
    bits and ``D`` binary observables::

        p(z) = prod_h pi_h^z_h (1 - pi_h)^(1 - z_h)
        p(x | z) = prod_d Bernoulli(x_d; S(W_d^T z + mu_d))

    The posterior is computed exactly by enumerating all ``2^H`` latent
    states, which is only allowed for ``H <= enumeration_cap``.

    Parameter vectors are ``Psi = pi`` and
    ``Theta = (W[:, 0], ..., W[:, H-1], mu)``.

    :param pi: Prior probabilities, each strictly inside (0, 1).
    :param W: ``(D, H)`` weight matrix.
    :param mu: ``(D,)`` observable offsets.
    :param enumeration_cap: Largest latent dimension posterior enumeration is
        permitted for.
    :param inner_tol: Gradient infinity-norm at which the observable M-step
        optimization stops.
    :param inner_max_steps: Iteration cap of the observable M-step
        optimization.

    :raises DomainError: Parameters outside of the model domain.
    :raises ContractError: Inconsistent dimensions.
    """

    family = "sbn"

    def __init__(
        self,
        pi: Sequence[float],
        W: Sequence[Sequence[float]],
        mu: Sequence[float],
        enumeration_cap: int = DEFAULT_ENUMERATION_CAP,
        inner_tol: float = 1e-12,
        inner_max_steps: int = 200,
    ):
        pi_a = np.array(pi, dtype=float).ravel()
        w_a = np.array(W, dtype=float)
        mu_a = np.array(mu, dtype=float).ravel()
        if pi_a.size < 1:
            raise ContractError("Sigmoid belief network needs at least one latent bit.")
        if w_a.ndim == 1 and pi_a.size == 1:
            w_a = w_a[:, None]
        if w_a.shape != (mu_a.size, pi_a.size) or mu_a.size < 1:
            raise ContractError(
                f"Weight matrix of shape {w_a.shape} does not match H={pi_a.size}, D={mu_a.size}."
            )
        if not (np.isfinite(w_a).all() and np.isfinite(mu_a).all()):
            raise DomainError("Weights and offsets must be finite.")
        if not np.isfinite(pi_a).all() or ((pi_a <= 0.0) | (pi_a >= 1.0)).any():
            raise DomainError("Prior probabilities must lie strictly inside (0, 1).")
        for a in (pi_a, w_a, mu_a):
            a.flags.writeable = False
        self._pi = pi_a
        self._w = w_a
        self._mu = mu_a
        self.enumeration_cap = int(enumeration_cap)
        self.inner_tol = float(inner_tol)
        self.inner_max_steps = int(inner_max_steps)
        self._states: Optional[np.ndarray] = None

    def get_config(self) -> Dict[str, Any]:
        return {
            "pi": self._pi.tolist(),
            "W": self._w.tolist(),
            "mu": self._mu.tolist(),
            "enumeration_cap": self.enumeration_cap,
            "inner_tol": self.inner_tol,
            "inner_max_steps": self.inner_max_steps,
        }

    def _replace(self, pi: np.ndarray, w: np.ndarray, mu: np.ndarray) -> "SigmoidBeliefNetwork":
        return SigmoidBeliefNetwork(pi, w, mu, self.enumeration_cap,
                                    self.inner_tol, self.inner_max_steps)

    @property
    def latent_dim(self) -> int:
        return self._pi.size

    @property
    def observable_dim(self) -> int:
        return self._mu.size

    @property
    def pi(self) -> np.ndarray:
        return self._pi

    @property
    def weights(self) -> np.ndarray:
        return self._w

    @property
    def offsets(self) -> np.ndarray:
        return self._mu

    def validate_data(self, x: np.ndarray) -> np.ndarray:
        x = np.array(x, dtype=float)
        if x.ndim == 1:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.observable_dim:
            raise ContractError(f"Expected binary rows of length {self.observable_dim}, got shape {x.shape}.")
        if not _binary(x):
            raise DomainError("Sigmoid belief network data must be binary.")
        return x

    def _check_latent(self, z: Any) -> np.ndarray:
        z = np.asarray(z, dtype=float).ravel()
        if z.size != self.latent_dim or not _binary(z):
            raise ContractError(f"Latent value must be a binary vector of length {self.latent_dim}.")
        return z

    def conditional_means(self, z: Any) -> np.ndarray:
        """
        :param z: Binary latent vector.

        :return: ``(D,)`` Bernoulli means ``S(W z + mu)`` of ``p(x | z)``.
        """
        return sigmoid(self._w @ self._check_latent(z) + self._mu)

    #
    # Enumeration
    #

    def latent_states(self) -> np.ndarray:
        if self.latent_dim > self.enumeration_cap:
            raise CapacityError(
                f"Enumerating 2^{self.latent_dim} latent states exceeds the cap "
                f"of 2^{self.enumeration_cap}."
            )
        if self._states is None:
            states = np.array(list(itertools.product((0.0, 1.0), repeat=self.latent_dim)))
            states.flags.writeable = False
            self._states = states
        return self._states

    def log_prior_states(self) -> np.ndarray:
        z = self.latent_states()
        return z @ np.log(self._pi) + (1.0 - z) @ np.log1p(-self._pi)

    def _state_activations(self) -> np.ndarray:
        return self.latent_states() @ self._w.T + self._mu

    def log_likelihood_states(self, x: np.ndarray) -> np.ndarray:
        x = self.validate_data(x)
        a = self._state_activations()
        return x @ a.T - np.sum(softplus(a), axis=1)

    def observable_entropies(self, pseudo: bool = False) -> np.ndarray:
        # Constant base measure: pseudo-entropies equal entropies.
        a = self._state_activations()
        return np.sum(softplus(a) - a * sigmoid(a), axis=1)

    def log_joint(self, x: np.ndarray, z: Any) -> float:
        row = self.validate_data(x)
        if row.shape[0] != 1:
            raise ContractError("log_joint takes a single observable row.")
        zv = self._check_latent(z)
        a = self._w @ zv + self._mu
        log_prior = float(zv @ np.log(self._pi) + (1.0 - zv) @ np.log1p(-self._pi))
        return log_prior + float(row[0] @ a - np.sum(softplus(a)))

    def prior_entropy(self) -> EntropyValue:
        return bernoulli_product_entropy(self._pi)

    def latent_probe_states(self, rng: np.random.Generator, n: int) -> List[Any]:
        if 2 ** self.latent_dim <= PROBE_ENUMERATION_MAX:
            return list(self.latent_states())
        return list(rng.integers(0, 2, size=(n, self.latent_dim)).astype(float))

    def _sample_rows(self, rng: np.random.Generator, n: int) -> np.ndarray:
        z = (rng.random((n, self.latent_dim)) < self._pi).astype(float)
        p = sigmoid(z @ self._w.T + self._mu)
        return (rng.random((n, self.observable_dim)) < p).astype(float)

    #
    # Learning
    #

    def _sufficient_moments(self, x: np.ndarray, q: VariationalState) -> Tuple[np.ndarray, np.ndarray]:
        """
        :return: Per-state mean responsibilities ``omega (K,)`` and
            responsibility weighted data means ``(K, D)``, both normalized by
            ``N``.
        """
        x = self.validate_data(x)
        r = self._check_state(q, x.shape[0]).responsibilities
        n = x.shape[0]
        return r.sum(axis=0) / n, r.T @ x / n

    def _augmented_states(self) -> np.ndarray:
        z = self.latent_states()
        return np.hstack([z, np.ones((z.shape[0], 1))])

    @staticmethod
    def _objective(b: np.ndarray, zt: np.ndarray, omega: np.ndarray, xbar: np.ndarray) -> float:
        a = zt @ b.T
        return float(np.sum(xbar * a) - np.sum(omega[:, None] * softplus(a)))

    @staticmethod
    def _objective_gradient(b: np.ndarray, zt: np.ndarray, omega: np.ndarray, xbar: np.ndarray) -> np.ndarray:
        a = zt @ b.T
        return (xbar - omega[:, None] * sigmoid(a)).T @ zt

    def _fit_observables(self, omega: np.ndarray, xbar: np.ndarray) -> np.ndarray:
        """
        Maximize the expected complete-data log-likelihood over ``[W mu]``
        with the latent state weights held fixed.

        Each observable row of ``[W mu]`` is updated by a Newton step on its
        own concave logistic objective, falling back to the gradient when the
        curvature is singular, with backtracking until sufficient increase.

        :return: ``(D, H + 1)`` matrix ``[W mu]``.
        """
        zt = self._augmented_states()
        b = np.hstack([self._w, self._mu[:, None]])
        q_val = self._objective(b, zt, omega, xbar)
        for step in range(self.inner_max_steps):
            g = self._objective_gradient(b, zt, omega, xbar)
            if np.max(np.abs(g)) <= self.inner_tol:
                break
            s = sigmoid(zt @ b.T)
            curv = omega[:, None] * s * (1.0 - s)
            direction = np.empty_like(g)
            for d in range(g.shape[0]):
                try:
                    delta = np.linalg.solve(zt.T @ (curv[:, d, None] * zt), g[d])
                except np.linalg.LinAlgError:
                    delta = g[d]
                if not np.isfinite(delta).all() or float(delta @ g[d]) <= 0.0:
                    delta = g[d]
                direction[d] = delta
            predicted = float(np.sum(g * direction))
            floor = ROUNDING_FLOOR * max(1.0, abs(q_val))
            if predicted <= floor:
                # Below the resolution of the objective, only reject clear
                # decreases.
                candidate = b + direction
                c_val = self._objective(candidate, zt, omega, xbar)
                if c_val < q_val - floor:
                    break
                b, q_val = candidate, c_val
                continue
            t = 1.0
            for _ in range(ARMIJO_MAX_HALVINGS):
                candidate = b + t * direction
                c_val = self._objective(candidate, zt, omega, xbar)
                if c_val >= q_val + ARMIJO_C * t * predicted:
                    b, q_val = candidate, c_val
                    break
                t *= ARMIJO_SHRINK
            else:
                LOG.debug("Observable line search stalled after %d steps", step)
                break
        return b

    def m_step(self, x: np.ndarray, q: VariationalState) -> "SigmoidBeliefNetwork":
        omega, xbar = self._sufficient_moments(x, q)
        pi = omega @ self.latent_states()
        clipped = np.clip(pi, PROBABILITY_FLOOR, 1.0 - PROBABILITY_FLOOR)
        if not np.array_equal(clipped, pi):
            LOG.warning("Prior probabilities reached the boundary and were clamped")
        with SimpleTimer("Sigmoid belief network observable M-step", LOG.debug):
            b = self._fit_observables(omega, xbar)
        return self._replace(clipped, b[:, :-1], b[:, -1])

    def elbo_gradient(self, x: np.ndarray, q: VariationalState) -> np.ndarray:
        omega, xbar = self._sufficient_moments(x, q)
        m = omega @ self.latent_states()
        d_pi = (m - self._pi) / (self._pi * (1.0 - self._pi))
        b = np.hstack([self._w, self._mu[:, None]])
        g = self._objective_gradient(b, self._augmented_states(), omega, xbar)
        return np.concatenate([d_pi, g.T.ravel()])

    def initialize(self, x: np.ndarray, seed: int) -> "SigmoidBeliefNetwork":
        x = self.validate_data(x)
        rng = np.random.default_rng(seed)
        w = rng.normal(0.0, 0.1, size=self._w.shape)
        mean = np.clip(x.mean(axis=0), 0.05, 0.95)
        mu = np.log(mean) - np.log1p(-mean)
        return self._replace(np.full(self.latent_dim, 0.5), w, mu)

    #
    # Parameter vectors
    #

    def prior_parameters(self) -> np.ndarray:
        return self._pi.copy()

    def observable_parameters(self) -> np.ndarray:
        return np.concatenate([self._w.T.ravel(), self._mu])

    def _split_theta(self, theta: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        theta = np.asarray(theta, dtype=float).ravel()
        h, d = self.latent_dim, self.observable_dim
        if theta.size != (h + 1) * d:
            raise ContractError(f"Observable parameter vector must have length {(h + 1) * d}.")
        return theta[:h * d].reshape(h, d).T, theta[h * d:]

    def with_parameters(self, psi: np.ndarray, theta: np.ndarray) -> "SigmoidBeliefNetwork":
        psi = np.asarray(psi, dtype=float).ravel()
        if psi.size != self.latent_dim:
            raise ContractError(f"Prior parameter vector must have length {self.latent_dim}.")
        w, mu = self._split_theta(theta)
        return self._replace(psi, w, mu)

    def random_parameters(self, rng: np.random.Generator) -> "SigmoidBeliefNetwork":
        pi = np.clip(rng.random(self.latent_dim), 1e-3, 1.0 - 1e-3)
        w = rng.standard_normal(self._w.shape)
        mu = rng.standard_normal(self.observable_dim)
        return self._replace(pi, w, mu)

    #
    # Natural parameter maps
    #

    def prior_natural_params(self, psi: np.ndarray) -> np.ndarray:
        return BernoulliProduct.natural_params_and_jacobian(psi)[0]

    def prior_natural_map(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        zeta, jac = BernoulliProduct.natural_params_and_jacobian(self._pi)
        return zeta, jac, self._pi * (1.0 - self._pi) * zeta

    def observable_natural_params(self, z: Any, theta: np.ndarray) -> np.ndarray:
        w, mu = self._split_theta(theta)
        return w @ self._check_latent(z) + mu

    def observable_natural_map(self, z: Any) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        zv = self._check_latent(z)
        eye = np.eye(self.observable_dim)
        jac = np.hstack([zh * eye for zh in zv] + [eye])
        return self._w @ zv + self._mu, jac, self.observable_parameters()

    def theta_subset(self) -> np.ndarray:
        return np.arange((self.latent_dim + 1) * self.observable_dim)
