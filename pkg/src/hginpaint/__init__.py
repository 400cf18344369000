"""Image inpainting with a data-dependent hypergraph convolution layer, built on a small numpy autodiff engine."""

from .autodiff import Parameter, Tensor, backward, finite_diff_check, no_grad
from .config import RunConfig, load_config, parse_config
from .hypergraph import HypergraphLayerParams, build_incidence, hypergraph_forward, propagation_matrix
from .nets import Discriminator, Generator, NetworkConfig

__version__ = "0.1.0"

__all__ = [
    "Discriminator", "Generator", "HypergraphLayerParams", "NetworkConfig", "Parameter", "RunConfig", "Tensor",
    "backward", "build_incidence", "finite_diff_check", "hypergraph_forward", "load_config", "no_grad",
    "parse_config", "propagation_matrix",
]
