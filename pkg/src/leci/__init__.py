"""Causal subgraph discovery with label- and environment-adversarial training.

The package is organized bottom-up:

- ``tensor``: minimal reverse-mode autodiff (gradient reversal, Gumbel-sigmoid)
- ``graphs``: graph/batch containers, dataset splits, JSONL format
- ``datasets``: synthetic motif generators and the enumerable micro universe
- ``nn``: GIN message passing, MLPs, pooling, checkpoints
- ``selector``: interpretable edge selector producing complementary views
- ``training``: adversarial objective, ramp schedule, Adam, ERM baseline
- ``metrics``: accuracies, edge-selection scores, probes, MI, oracle checks
- ``cli``: batch experiment entry point
"""

from .tensor import Rng, Tensor, backward, grad_reverse, gumbel_sigmoid
from .graphs import Batch, DatasetSplit, Graph, batch, load_jsonl, save_jsonl, unbatch
from .datasets import GenConfig, MicroUniverse, build_micro_universe, generate, make_base, make_motif
from .nn import GinEncoder, Linear, MLP, graph_readout, load_params, save_params
from .selector import Selector, explain
from .training import (
    Adam,
    EpochLog,
    ErmModel,
    LeciModel,
    TrainConfig,
    loss_EA,
    loss_LA,
    loss_PFSC,
    loss_inv,
    ramp,
    train,
    train_erm,
)
from .metrics import (
    MetricsReport,
    ProbeConfig,
    accuracy,
    edge_selection_score,
    independence_probe,
    oracle_check_lemma1,
    plugin_mi,
)

__version__ = "0.1.0"

__all__ = [
    "Adam", "Batch", "DatasetSplit", "EpochLog", "ErmModel", "GenConfig",
    "GinEncoder", "Graph", "LeciModel", "Linear", "MLP", "MetricsReport",
    "MicroUniverse", "ProbeConfig", "Rng", "Selector", "Tensor", "TrainConfig",
    "accuracy", "backward", "batch", "build_micro_universe",
    "edge_selection_score", "explain", "generate", "grad_reverse",
    "graph_readout", "gumbel_sigmoid", "independence_probe", "load_jsonl",
    "load_params", "loss_EA", "loss_LA", "loss_PFSC", "loss_inv", "make_base",
    "make_motif", "oracle_check_lemma1", "plugin_mi", "ramp", "save_jsonl",
    "save_params", "train", "train_erm", "unbatch",
]
