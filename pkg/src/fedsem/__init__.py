"""Deterministic simulator for two-phase semi-supervised federated learning.

A population of simulated clients holds non-IID, partially labeled
shards of one dataset. Phase 1 federates a classifier over the visible
labels only; the resulting model pseudo-labels the hidden samples, and
phase 2 federates over the completed data. The package reports per-round
accuracy/loss and the relative accuracy gain from exploiting unlabeled
data.
"""

from .data import (
    ClientShard,
    Dataset,
    PartitionSpec,
    generate_synthetic,
    load_csv,
    mask_labels,
    one_hot,
    partition,
    save_csv,
    split_train_test,
)
from .errors import ClientSkip, ConfigError, CsvParseError, RoundFailure, ShapeError
from .federation import (
    AGGREGATIONS,
    ClientUpdate,
    FederationConfig,
    ServerState,
    aggregate,
    client_round,
    evaluation_batch,
    initial_params,
    run_fedavg,
    run_round,
    sample_clients,
    training_view,
)
from .metrics import (
    RoundRecord,
    SummaryRow,
    export_history,
    gain,
    load_history,
    render_summary,
    summarize,
)
from .model import (
    Batch,
    ModelParams,
    OptimizerState,
    SOLVERS,
    backward,
    evaluate,
    forward,
    init_optimizer,
    init_params,
    loss,
    optimizer_step,
    predict,
    train_local,
)
from .protocol import (
    ExperimentResult,
    FedSemConfig,
    converged,
    pseudo_label,
    run_fedsem,
    run_phase1,
    run_phase2,
)

__version__ = "0.1.0"

__all__ = [
    "AGGREGATIONS",
    "Batch",
    "ClientShard",
    "ClientSkip",
    "ClientUpdate",
    "ConfigError",
    "CsvParseError",
    "Dataset",
    "ExperimentResult",
    "FedSemConfig",
    "FederationConfig",
    "ModelParams",
    "OptimizerState",
    "PartitionSpec",
    "RoundFailure",
    "RoundRecord",
    "SOLVERS",
    "ServerState",
    "ShapeError",
    "SummaryRow",
    "aggregate",
    "backward",
    "client_round",
    "converged",
    "evaluate",
    "evaluation_batch",
    "export_history",
    "forward",
    "gain",
    "generate_synthetic",
    "init_optimizer",
    "init_params",
    "initial_params",
    "load_csv",
    "load_history",
    "loss",
    "mask_labels",
    "one_hot",
    "optimizer_step",
    "partition",
    "predict",
    "pseudo_label",
    "render_summary",
    "run_fedavg",
    "run_fedsem",
    "run_phase1",
    "run_phase2",
    "run_round",
    "sample_clients",
    "save_csv",
    "split_train_test",
    "summarize",
    "train_local",
    "training_view",
]
