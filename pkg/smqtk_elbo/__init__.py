from .dataset import Dataset  # noqa: F401
from .interfaces.ef_distribution import EfDistribution, MixtureComponent  # noqa: F401
from .interfaces.generative_model import DiscreteLatentModel, GenerativeModel  # noqa: F401
