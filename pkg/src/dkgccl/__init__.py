"""Linear-time community contrastive learning on partitioned graphs, with MLP distillation."""
from .errors import ConfigError, DkgcclError, InputError, NumericalError
from .graph import LabelVector, SparseGraph, SplitSpec, k_hop_mean, load_graph, normalized_adjacency
from .loss import LossConfig, loss_and_grad, loss_fast, loss_oracle
from .partition import Partition, coarsen, partition_graph

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DkgcclError",
    "InputError",
    "LabelVector",
    "LossConfig",
    "NumericalError",
    "Partition",
    "SparseGraph",
    "SplitSpec",
    "coarsen",
    "k_hop_mean",
    "load_graph",
    "loss_and_grad",
    "loss_fast",
    "loss_oracle",
    "normalized_adjacency",
    "partition_graph",
]
