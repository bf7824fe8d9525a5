import abc
from typing import Any, ClassVar, List, Sequence, Tuple, TypeVar

import numpy as np

from smqtk_core import Configurable, Pluggable

from smqtk_elbo.dataset import Dataset
from smqtk_elbo.exceptions import ContractError
from smqtk_elbo.interfaces.ef_distribution import EntropyValue
from smqtk_elbo.utils.special import logsumexp
from smqtk_elbo.variational import DiscreteVariationalState, VariationalState


G = TypeVar("G", bound="GenerativeModel")

#: Rows per independent random stream when sampling.
SAMPLE_BLOCK_SIZE = 256
#: Discrete latent domains up to this size are fully enumerated as criterion
#: probes.
PROBE_ENUMERATION_MAX = 256


class GenerativeModel (Configurable, Pluggable):
    """
    Latent variable model ``p(z) p(x | z)`` whose prior and observable
    distributions are exponential family members.

    Parameters split into prior parameters ``Psi`` and observable parameters
    ``Theta``; both are exposed as flat vectors in a fixed, documented order
    so that gradients, finite differences and the parameterization criterion
    can work on any model uniformly. Instances are immutable: learning steps
    return new instances.

    Data arguments ``x`` are ``(N, D)`` arrays of observable rows.
    """

    family: ClassVar[str] = ""

    @classmethod
    def is_usable(cls) -> bool:
        return True

    @property
    def tag(self) -> str:
        """
        :return: Family tag written into dataset headers and artifacts.
        """
        return self.family

    @property
    @abc.abstractmethod
    def latent_dim(self) -> int:
        """
        :return: Latent dimensionality ``H`` (1 for mixtures).
        """

    @property
    @abc.abstractmethod
    def observable_dim(self) -> int:
        """
        :return: Observable dimensionality ``D``.
        """

    @property
    def constant_base_measure(self) -> bool:
        """
        :return: If the observable base measure is constant, making true
            entropies and pseudo-entropies coincide.
        """
        return True

    @property
    def has_parameterized_prior(self) -> bool:
        """
        :return: If the prior has trainable parameters ``Psi``.
        """
        return True

    #
    # Data and sampling
    #

    @abc.abstractmethod
    def validate_data(self, x: np.ndarray) -> np.ndarray:
        """
        :param x: Observable rows.

        :raises ContractError: Wrong shape.
        :raises smqtk_elbo.exceptions.DomainError: Values outside of the
            observable support.

        :return: ``(N, D)`` float copy of the rows.
        """

    @abc.abstractmethod
    def _sample_rows(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """
        :param rng: Random stream to draw from.
        :param n: Number of rows.

        :return: ``(n, D)`` rows drawn from the generative process.
        """

    def sample(self, n: int, seed: int) -> Dataset:
        """
        Draw ``n`` i.i.d. rows from the generative process.

        Rows are drawn in blocks of ``SAMPLE_BLOCK_SIZE``, each from its own
        stream spawned from ``seed``, so the result depends only on ``n`` and
        ``seed``.

        :param n: Number of rows, at least one.
        :param seed: Non-negative integer seed.

        :raises ContractError: ``n < 1``.

        :return: Sampled dataset tagged with this model's family.
        """
        if int(n) < 1:
            raise ContractError(f"Sample count must be at least 1, got {n}.")
        n = int(n)
        n_blocks = -(-n // SAMPLE_BLOCK_SIZE)
        streams = np.random.SeedSequence(seed).spawn(n_blocks)
        blocks = []
        for b, ss in enumerate(streams):
            size = min(SAMPLE_BLOCK_SIZE, n - b * SAMPLE_BLOCK_SIZE)
            blocks.append(self._sample_rows(np.random.default_rng(ss), size))
        return Dataset(np.vstack(blocks), self.tag, seed)

    #
    # Densities and posteriors
    #

    @abc.abstractmethod
    def log_joint(self, x: np.ndarray, z: Any) -> float:
        """
        :param x: Single observable row.
        :param z: Latent value in this model's latent domain.

        :raises ContractError: ``z`` or ``x`` do not belong to the domain.

        :return: ``log p(z) + log p(x | z)``.
        """

    @abc.abstractmethod
    def exact_posterior(self, x: np.ndarray) -> Any:
        """
        :param x: Single observable row.

        :return: Representation of ``p(z | x)``: a probability vector over
            enumerated latent states, or a ``(mean, covariance)`` pair.
        """

    @abc.abstractmethod
    def posterior(self, x: np.ndarray) -> VariationalState:
        """
        :param x: Observable rows.

        :raises smqtk_elbo.exceptions.CapacityError: Posterior enumeration
            would exceed the configured capacity.

        :return: Exact posteriors of all rows.
        """

    @abc.abstractmethod
    def log_marginal_likelihood(self, x: np.ndarray) -> np.ndarray:
        """
        :param x: Observable rows.

        :return: ``(N,)`` values ``log p(x^(n))``.
        """

    #
    # ELBO and entropy terms
    #

    @abc.abstractmethod
    def expected_log_likelihood(self, x: np.ndarray, q: VariationalState) -> np.ndarray:
        """
        :param x: Observable rows.
        :param q: Variational state covering the rows.

        :return: ``(N,)`` values ``E_q[log p(x^(n) | z)]``.
        """

    @abc.abstractmethod
    def kl_to_prior(self, q: VariationalState) -> np.ndarray:
        """
        :param q: Variational state.

        :return: ``(N,)`` values ``KL(q^(n) || p(z))``.
        """

    @abc.abstractmethod
    def prior_entropy(self) -> EntropyValue:
        """
        :return: Entropy of the prior ``p(z)``.
        """

    @abc.abstractmethod
    def expected_observable_entropy(self, q: VariationalState, pseudo: bool = False) -> float:
        """
        :param q: Variational state.
        :param pseudo: Use observable pseudo-entropies.

        :raises smqtk_elbo.exceptions.UnsupportedError: True entropies were
            requested for a non-constant base measure.

        :return: ``E_{q_bar}[H[p(x | z)]]`` (or its pseudo variant).
        """

    def log_base_measure(self, x: np.ndarray) -> np.ndarray:
        """
        :param x: Observable rows.

        :return: ``(N,)`` values ``log h(x^(n))``.
        """
        return np.zeros(self.validate_data(x).shape[0])

    #
    # Learning
    #

    @abc.abstractmethod
    def m_step(self: G, x: np.ndarray, q: VariationalState) -> G:
        """
        Maximize the ELBO over all parameters with ``q`` held fixed.

        :param x: Observable rows.
        :param q: Variational state covering the rows.

        :raises smqtk_elbo.exceptions.DegenerateComponentError: A mixture
            component lost all responsibility mass.

        :return: Updated model.
        """

    @abc.abstractmethod
    def elbo_gradient(self, x: np.ndarray, q: VariationalState) -> np.ndarray:
        """
        :param x: Observable rows.
        :param q: Variational state covering the rows, held fixed.

        :return: Gradient of the ELBO with respect to ``parameter_vector()``.
        """

    @abc.abstractmethod
    def initialize(self: G, x: np.ndarray, seed: int) -> G:
        """
        :param x: Observable rows.
        :param seed: Seed for any randomized choices.

        :return: Model of the same structure with parameters initialized from
            the data.
        """

    #
    # Parameter vectors
    #

    @abc.abstractmethod
    def prior_parameters(self) -> np.ndarray:
        """
        :return: Prior parameter vector ``Psi`` (empty for a fixed prior).
        """

    @abc.abstractmethod
    def observable_parameters(self) -> np.ndarray:
        """
        :return: Observable parameter vector ``Theta``.
        """

    @abc.abstractmethod
    def with_parameters(self: G, psi: np.ndarray, theta: np.ndarray) -> G:
        """
        :param psi: Prior parameter vector.
        :param theta: Observable parameter vector.

        :raises smqtk_elbo.exceptions.DomainError: Parameters outside of the
            model domain.

        :return: Model of the same structure with the given parameters.
        """

    def parameter_vector(self) -> np.ndarray:
        """
        :return: ``Psi`` followed by ``Theta``.
        """
        return np.concatenate([self.prior_parameters(), self.observable_parameters()])

    def with_parameter_vector(self: G, vector: Sequence[float]) -> G:
        """
        :param vector: ``Psi`` followed by ``Theta``.

        :return: Model of the same structure with the given parameters.
        """
        v = np.asarray(vector, dtype=float)
        n_psi = self.prior_parameters().size
        if v.size != n_psi + self.observable_parameters().size:
            raise ContractError(f"Parameter vector of length {v.size} does not match the model.")
        return self.with_parameters(v[:n_psi], v[n_psi:])

    @abc.abstractmethod
    def random_parameters(self: G, rng: np.random.Generator) -> G:
        """
        Draw a random parameter point of the same structure: probabilities
        from a flat Dirichlet clamped to ``[1e-3, 1 - 1e-3]``, variances and
        positive rates log-uniform on ``[e^-2, e^2]``, weights and means
        standard normal.

        :param rng: Random generator.

        :return: New model.
        """

    #
    # Natural parameter maps
    #

    @abc.abstractmethod
    def prior_natural_params(self, psi: np.ndarray) -> np.ndarray:
        """
        :param psi: Prior parameter vector.

        :raises smqtk_elbo.exceptions.NotApplicableError: The prior is not
            parameterized.

        :return: Prior natural parameters ``zeta(Psi)``.
        """

    @abc.abstractmethod
    def prior_natural_map(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        :raises smqtk_elbo.exceptions.NotApplicableError: The prior is not
            parameterized.

        :return: ``zeta`` at this model's ``Psi``, the analytic Jacobian
            ``d zeta / d Psi^T`` and the closed-form ``alpha`` with
            ``J alpha = zeta``.
        """

    @abc.abstractmethod
    def observable_natural_params(self, z: Any, theta: np.ndarray) -> np.ndarray:
        """
        :param z: Latent value.
        :param theta: Observable parameter vector.

        :return: Observable natural parameters ``eta(z; Theta)``.
        """

    @abc.abstractmethod
    def observable_natural_map(self, z: Any) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        :param z: Latent value.

        :return: ``eta(z; Theta)``, its analytic Jacobian with respect to the
            ``theta_subset()`` entries of ``Theta``, and the closed-form
            latent-independent ``beta`` with ``J beta = eta``.
        """

    @abc.abstractmethod
    def theta_subset(self) -> np.ndarray:
        """
        :return: Indices into ``Theta`` of the parameters the observable
            side of the criterion is taken over.
        """

    @abc.abstractmethod
    def latent_probe_states(self, rng: np.random.Generator, n: int) -> List[Any]:
        """
        :param rng: Random generator for non-enumerable latent domains.
        :param n: Number of random draws for non-enumerable domains.

        :return: Latent values to probe the observable criterion at.
        """


class DiscreteLatentModel (GenerativeModel):
    """
    Generative model over a finite, enumerable latent domain. Exact
    posteriors, the ELBO terms and marginal likelihoods follow from the
    per-state prior and likelihood tables.
    """

    @abc.abstractmethod
    def latent_states(self) -> np.ndarray:
        """
        :return: ``(K, H)`` array of all latent values in enumeration order.
        """

    @abc.abstractmethod
    def log_prior_states(self) -> np.ndarray:
        """
        :return: ``(K,)`` prior log-probabilities.
        """

    @abc.abstractmethod
    def log_likelihood_states(self, x: np.ndarray) -> np.ndarray:
        """
        :param x: Observable rows.

        :return: ``(N, K)`` values ``log p(x^(n) | z_k)``.
        """

    @abc.abstractmethod
    def observable_entropies(self, pseudo: bool = False) -> np.ndarray:
        """
        :param pseudo: Use pseudo-entropies.

        :return: ``(K,)`` entropies of ``p(x | z_k)``.
        """

    def log_joint_states(self, x: np.ndarray) -> np.ndarray:
        """
        :param x: Observable rows.

        :return: ``(N, K)`` joint log-probabilities.
        """
        return self.log_likelihood_states(x) + self.log_prior_states()

    def posterior(self, x: np.ndarray) -> DiscreteVariationalState:
        lj = self.log_joint_states(x)
        return DiscreteVariationalState(lj - logsumexp(lj, axis=1)[:, None], self.latent_states())

    def exact_posterior(self, x: np.ndarray) -> np.ndarray:
        row = np.asarray(x, dtype=float).reshape(1, -1)
        return self.posterior(row).responsibilities[0].copy()

    def log_marginal_likelihood(self, x: np.ndarray) -> np.ndarray:
        return logsumexp(self.log_joint_states(x), axis=1)

    def _check_state(self, q: VariationalState, n_rows: int = -1) -> DiscreteVariationalState:
        if not isinstance(q, DiscreteVariationalState):
            raise ContractError(f"{type(self).__name__} requires a discrete variational state.")
        if q.states.shape != self.latent_states().shape:
            raise ContractError("Variational state does not cover this model's latent states.")
        if n_rows >= 0 and q.n_rows != n_rows:
            raise ContractError(f"Variational state covers {q.n_rows} rows, data has {n_rows}.")
        return q

    def expected_log_likelihood(self, x: np.ndarray, q: VariationalState) -> np.ndarray:
        ll = self.log_likelihood_states(x)
        r = self._check_state(q, ll.shape[0]).responsibilities
        with np.errstate(invalid="ignore"):
            return np.sum(np.where(r > 0.0, r * ll, 0.0), axis=1)

    def kl_to_prior(self, q: VariationalState) -> np.ndarray:
        q = self._check_state(q)
        r = q.responsibilities
        with np.errstate(invalid="ignore"):
            terms = np.where(r > 0.0, r * (q.log_responsibilities - self.log_prior_states()), 0.0)
        return np.sum(terms, axis=1)

    def expected_observable_entropy(self, q: VariationalState, pseudo: bool = False) -> float:
        q = self._check_state(q)
        return float(q.aggregate() @ self.observable_entropies(pseudo))

    def latent_probe_states(self, rng: np.random.Generator, n: int) -> List[Any]:
        states = self.latent_states()
        if states.shape[0] <= PROBE_ENUMERATION_MAX:
            return list(states)
        return list(states[rng.integers(0, states.shape[0], size=n)])


def random_simplex(rng: np.random.Generator, k: int) -> np.ndarray:
    """
    :param rng: Random generator.
    :param k: Number of categories.

    :return: Draw from a flat Dirichlet, clamped to ``[1e-3, 1 - 1e-3]`` and
        renormalized.
    """
    p = np.clip(rng.dirichlet(np.ones(k)), 1e-3, 1.0 - 1e-3)
    return p / p.sum()


def log_uniform(rng: np.random.Generator, size: int) -> np.ndarray:
    """
    :param rng: Random generator.
    :param size: Number of draws.

    :return: Positive values log-uniform on ``[e^-2, e^2]``.
    """
    return np.exp(rng.uniform(-2.0, 2.0, size=size))
