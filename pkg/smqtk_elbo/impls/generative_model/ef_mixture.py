import logging
from typing import Any, Callable, Dict, List, Sequence, Tuple, Type

import numpy as np

from smqtk_elbo.entropy import categorical_entropy, check_simplex, family_type
from smqtk_elbo.exceptions import (
    ContractError,
    DegenerateComponentError,
    DomainError,
    NotApplicableError,
    UnsupportedError,
)
from smqtk_elbo.impls.ef_distribution.categorical import Categorical
from smqtk_elbo.interfaces.ef_distribution import EntropyValue, MixtureComponent
from smqtk_elbo.interfaces.generative_model import (
    DiscreteLatentModel,
    log_uniform,
    random_simplex,
)
from smqtk_elbo.variational import DiscreteVariationalState, VariationalState


LOG = logging.getLogger(__name__)

#: Responsibility mass below which a component counts as empty.
EMPTY_COMPONENT_MASS = 1e-12
#: Share of the k-means++ hard assignment in the initial responsibilities.
INIT_HARD_SHARE = 0.9


def _gaussian_beta(standard: np.ndarray) -> np.ndarray:
    d = standard.size // 2
    return np.concatenate([np.zeros(d), -standard[d:]])


def _gamma_beta(standard: np.ndarray) -> np.ndarray:
    return np.array([standard[0] - 1.0, standard[1]])


def _poisson_beta(standard: np.ndarray) -> np.ndarray:
    return standard * np.log(standard)


#: Closed-form latent-independent solutions of ``J beta = eta`` per component
#: family, as functions of the component's standard parameters.
CLOSED_FORM_BETA: Dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "gaussian-diagonal": _gaussian_beta,
    "gamma": _gamma_beta,
    "poisson-product": _poisson_beta,
}


def _random_standard(family: str, rng: np.random.Generator, dim: int) -> np.ndarray:
    if family == "gaussian-diagonal":
        return np.concatenate([rng.standard_normal(dim), log_uniform(rng, dim)])
    if family == "gamma":
        return log_uniform(rng, 2)
    return log_uniform(rng, dim)


def component_type(family: str) -> Type[MixtureComponent]:
    """
    :param family: Component family tag.

    :raises UnsupportedError: Unknown family or one that cannot act as a
        mixture component.

    :return: Component implementation type.
    """
    t = family_type(family)
    if not issubclass(t, MixtureComponent) or family not in CLOSED_FORM_BETA:
        raise UnsupportedError(f"The {family} family cannot be used as a mixture component.")
    return t


class ExponentialFamilyMixture (DiscreteLatentModel):
    """
    Mixture of ``C`` exponential family components of one family with a
    categorical prior over the component index.

    Supported component families are ``gaussian-diagonal``, ``gamma``
    (scalar data) and ``poisson-product``. Parameter vectors are
    ``Psi = (pi_1, ..., pi_{C-1})`` and ``Theta`` the concatenation of the
    components' standard parameter vectors. A single component mixture has
    an empty ``Psi`` and no parameterized prior.

    :param component_family: Component family tag.
    :param pi: Mixing weights, positive and summing to one.
    :param components: Standard parameter vector of each component.

    :raises UnsupportedError: Unsupported component family.
    :raises DomainError: Parameters outside of the model domain.
    :raises ContractError: Inconsistent component dimensions or a weight
        count differing from the component count.
    """

    family = "ef-mixture"

    def __init__(
        self,
        component_family: str,
        pi: Sequence[float],
        components: Sequence[Sequence[float]],
    ):
        self._comp_type = component_type(component_family)
        self.component_family = component_family
        pi_a = check_simplex(pi)
        if pi_a.size != len(components):
            raise ContractError(
                f"A mixture needs one weight per component, got {pi_a.size} weights "
                f"for {len(components)} components."
            )
        self._components = [self._comp_type.from_standard(c) for c in components]
        if len({c.natural_params.size for c in self._components}) != 1:
            raise ContractError("Mixture components must share one dimension.")
        pi_a.flags.writeable = False
        self._pi = pi_a
        self._states = np.arange(pi_a.size, dtype=float)[:, None]
        self._states.flags.writeable = False

    def get_config(self) -> Dict[str, Any]:
        return {
            "component_family": self.component_family,
            "pi": self._pi.tolist(),
            "components": [c.standard_params().tolist() for c in self._components],
        }

    def _replace(self, pi: Sequence[float], standards: Sequence[Sequence[float]]) -> "ExponentialFamilyMixture":
        return ExponentialFamilyMixture(self.component_family, pi, standards)

    @property
    def tag(self) -> str:
        return f"{self.family}/{self.component_family}"

    @property
    def n_components(self) -> int:
        return self._pi.size

    @property
    def has_parameterized_prior(self) -> bool:
        return self.n_components > 1

    @property
    def latent_dim(self) -> int:
        return 1

    @property
    def observable_dim(self) -> int:
        return self._components[0].data_dim

    @property
    def constant_base_measure(self) -> bool:
        return self._comp_type.constant_base_measure

    @property
    def pi(self) -> np.ndarray:
        return self._pi

    @property
    def components(self) -> List[MixtureComponent]:
        return list(self._components)

    def validate_data(self, x: np.ndarray) -> np.ndarray:
        x = self._comp_type.validate_data(x)
        if x.shape[1] != self.observable_dim:
            raise ContractError(f"Expected rows of length {self.observable_dim}, got shape {x.shape}.")
        return x

    def _component_index(self, z: Any) -> int:
        zv = np.asarray(z, dtype=float).ravel()
        if zv.size != 1 or zv[0] != np.floor(zv[0]) or not 0 <= zv[0] < self.n_components:
            raise ContractError(f"Latent value must be a component index in [0, {self.n_components}).")
        return int(zv[0])

    #
    # Enumeration
    #

    def latent_states(self) -> np.ndarray:
        return self._states

    def log_prior_states(self) -> np.ndarray:
        return np.log(self._pi)

    def log_likelihood_states(self, x: np.ndarray) -> np.ndarray:
        x = self.validate_data(x)
        return np.column_stack([c.log_density(x) for c in self._components])

    def observable_entropies(self, pseudo: bool = False) -> np.ndarray:
        if pseudo:
            return np.array([c.pseudo_entropy().value for c in self._components])
        return np.array([c.entropy().value for c in self._components])

    def log_base_measure(self, x: np.ndarray) -> np.ndarray:
        return self._components[0].log_base_measure(self.validate_data(x))

    def log_joint(self, x: np.ndarray, z: Any) -> float:
        row = self.validate_data(x)
        if row.shape[0] != 1:
            raise ContractError("log_joint takes a single observable row.")
        c = self._component_index(z)
        return float(np.log(self._pi[c]) + self._components[c].log_density(row)[0])

    def prior_entropy(self) -> EntropyValue:
        return categorical_entropy(self._pi)

    def _sample_rows(self, rng: np.random.Generator, n: int) -> np.ndarray:
        labels = rng.choice(self.n_components, size=n, p=self._pi)
        out = np.empty((n, self.observable_dim))
        for c, comp in enumerate(self._components):
            idx = np.flatnonzero(labels == c)
            if idx.size:
                out[idx] = comp.sample(rng, idx.size)
        return out

    #
    # Learning
    #

    def m_step(self, x: np.ndarray, q: VariationalState) -> "ExponentialFamilyMixture":
        x = self.validate_data(x)
        r = self._check_state(q, x.shape[0]).responsibilities
        mass = r.sum(axis=0)
        standards = []
        for c in range(self.n_components):
            if mass[c] < EMPTY_COMPONENT_MASS:
                raise DegenerateComponentError(c, f"Mixture component {c} received no responsibility mass.")
            try:
                standards.append(self._comp_type.weighted_fit(x, r[:, c]).standard_params())
            except DomainError as ex:
                raise DegenerateComponentError(c, f"Mixture component {c} is degenerate: {ex}") from ex
        return self._replace(mass / mass.sum(), standards)

    def elbo_gradient(self, x: np.ndarray, q: VariationalState) -> np.ndarray:
        x = self.validate_data(x)
        r = self._check_state(q, x.shape[0]).responsibilities
        n = x.shape[0]
        qbar = r.mean(axis=0)
        d_pi = qbar[:-1] / self._pi[:-1] - qbar[-1] / self._pi[-1]
        d_theta = [r[:, c] @ comp.grad_log_density(x) / n for c, comp in enumerate(self._components)]
        return np.concatenate([d_pi] + d_theta)

    def initialize(self, x: np.ndarray, seed: int) -> "ExponentialFamilyMixture":
        """
        Seed component centers with k-means++, softly assign every row to its
        nearest center and take one M-step from those responsibilities.
        """
        x = self.validate_data(x)
        rng = np.random.default_rng(seed)
        n, k = x.shape[0], self.n_components
        centers = [x[rng.integers(n)]]
        for _ in range(1, k):
            d2 = np.min([np.sum((x - c) ** 2, axis=1) for c in centers], axis=0)
            total = float(d2.sum())
            idx = rng.integers(n) if total <= 0.0 else rng.choice(n, p=d2 / total)
            centers.append(x[idx])
        dist = np.stack([np.sum((x - c) ** 2, axis=1) for c in centers], axis=1)
        r = np.full((n, k), (1.0 - INIT_HARD_SHARE) / k)
        r[np.arange(n), np.argmin(dist, axis=1)] += INIT_HARD_SHARE
        return self.m_step(x, DiscreteVariationalState.from_responsibilities(r, self._states))

    #
    # Parameter vectors
    #

    def prior_parameters(self) -> np.ndarray:
        return self._pi[:-1].copy()

    def observable_parameters(self) -> np.ndarray:
        return np.concatenate([c.standard_params() for c in self._components])

    def _split_theta(self, theta: np.ndarray) -> List[np.ndarray]:
        theta = np.asarray(theta, dtype=float).ravel()
        width = self._components[0].standard_params().size
        if theta.size != width * self.n_components:
            raise ContractError(f"Observable parameter vector must have length {width * self.n_components}.")
        return list(theta.reshape(self.n_components, width))

    def with_parameters(self, psi: np.ndarray, theta: np.ndarray) -> "ExponentialFamilyMixture":
        psi = np.asarray(psi, dtype=float).ravel()
        if psi.size != self.n_components - 1:
            raise ContractError(f"Prior parameter vector must have length {self.n_components - 1}.")
        last = 1.0 - float(np.sum(psi))
        if last <= 0.0:
            raise DomainError("Mixing weights must be positive and sum to one.")
        return self._replace(np.append(psi, last), self._split_theta(theta))

    def random_parameters(self, rng: np.random.Generator) -> "ExponentialFamilyMixture":
        pi = random_simplex(rng, self.n_components)
        standards = [_random_standard(self.component_family, rng, self.observable_dim)
                     for _ in range(self.n_components)]
        return self._replace(pi, standards)

    #
    # Natural parameter maps
    #

    def _require_prior_parameters(self) -> None:
        if not self.has_parameterized_prior:
            raise NotApplicableError("A single component mixture has no prior parameters.")

    def prior_natural_params(self, psi: np.ndarray) -> np.ndarray:
        self._require_prior_parameters()
        return Categorical.natural_params_and_jacobian(psi)[0]

    def prior_natural_map(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        self._require_prior_parameters()
        head = self._pi[:-1]
        zeta, jac = Categorical.natural_params_and_jacobian(head)
        rho = float(head @ zeta)
        return zeta, jac, head * (zeta - rho)

    def observable_natural_params(self, z: Any, theta: np.ndarray) -> np.ndarray:
        block = self._split_theta(theta)[self._component_index(z)]
        return self._comp_type.natural_params_and_jacobian(block)[0]

    def observable_natural_map(self, z: Any) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        c = self._component_index(z)
        standards = [comp.standard_params() for comp in self._components]
        eta, block_jac = self._comp_type.natural_params_and_jacobian(standards[c])
        width = standards[c].size
        jac = np.zeros((eta.size, width * self.n_components))
        jac[:, c * width:(c + 1) * width] = block_jac
        closed = CLOSED_FORM_BETA[self.component_family]
        beta = np.concatenate([closed(s) for s in standards])
        return eta, jac, beta

    def theta_subset(self) -> np.ndarray:
        return np.arange(self.observable_parameters().size)
