"""Hidden Schema Network: synthetic schema languages, exact oracle, training and evaluation."""

from ._hsn import (
    ConfigError,
    Dataset,
    GroundTruth,
    IntegrityError,
    Model,
    NumericError,
    ParseError,
    default_config,
    frobenius_diff,
    generate_dataset,
    graph_statistics,
    ground_truth,
    kl_graphs,
    kl_walks,
    load_dataset,
    load_model,
    roc_auc_edges,
    sample_graph,
    train,
)

__all__ = [
    "ConfigError",
    "Dataset",
    "GroundTruth",
    "IntegrityError",
    "Model",
    "NumericError",
    "ParseError",
    "default_config",
    "frobenius_diff",
    "generate_dataset",
    "graph_statistics",
    "ground_truth",
    "kl_graphs",
    "kl_walks",
    "load_dataset",
    "load_model",
    "roc_auc_edges",
    "sample_graph",
    "train",
]
