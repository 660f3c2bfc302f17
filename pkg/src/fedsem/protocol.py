"""Two-phase semi-supervised federated training.

Phase 1 federates over each client's visibly labeled samples only. The
resulting model then fills every hidden training label with its own
prediction (pseudo-labeling, optionally gated by a confidence
threshold), and phase 2 continues federated training over the completed
data, warm-started from the phase-1 model. The headline metric is the
relative accuracy gain of phase 2 over phase 1.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .data import Dataset
from .errors import ConfigError, RoundFailure, ShapeError
from .federation import (
    FederationConfig,
    ServerState,
    initial_params,
    run_fedavg,
    run_round,
    training_view,
)
from .metrics import RoundRecord, gain
from .model import ModelParams, forward

PHASE_SWITCH_MODES = ("at_half_rounds", "on_convergence")


@dataclass(frozen=True)
class FedSemConfig:
    """Two-phase settings on top of a federation configuration."""

    federation: FederationConfig
    phase_switch: str = "at_half_rounds"
    convergence_window: int = 5
    convergence_epsilon: float = 0.005
    pseudo_label_threshold: float = 0.0

    def __post_init__(self):
        if self.phase_switch not in PHASE_SWITCH_MODES:
            raise ConfigError(
                f"unknown phase_switch {self.phase_switch!r}, "
                f"expected one of {PHASE_SWITCH_MODES}"
            )
        if self.phase_switch == "on_convergence" and self.convergence_window < 2:
            raise ConfigError("convergence_window must be >= 2 for on_convergence")
        if self.convergence_epsilon < 0:
            raise ConfigError("convergence_epsilon must be >= 0")
        if not 0.0 <= self.pseudo_label_threshold <= 1.0:
            raise ConfigError("pseudo_label_threshold must be in [0, 1]")


@dataclass(frozen=True, eq=False)
class ExperimentResult:
    """Everything a two-phase run produces.

    Per-phase accuracies are the best test accuracy over that phase's
    history. ``pseudo_label_accuracy`` compares the assigned
    pseudo-labels against the oracle ground truth and is None when no
    pseudo-labels were assigned.
    """

    model_phase1: ModelParams
    model_phase2: ModelParams
    history: tuple[RoundRecord, ...]
    accuracy_phase1: float
    accuracy_phase2: float
    gain: float
    pseudo_label_accuracy: float | None

    def __post_init__(self):
        for name in ("accuracy_phase1", "accuracy_phase2"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} out of [0, 1]: {value}")
        if abs(self.gain - gain(self.accuracy_phase1, self.accuracy_phase2)) > 1e-12:
            raise ValueError("gain inconsistent with the phase accuracies")
        if self.pseudo_label_accuracy is not None and not 0.0 <= self.pseudo_label_accuracy <= 1.0:
            raise ValueError(f"pseudo_label_accuracy out of [0, 1]: {self.pseudo_label_accuracy}")


def converged(history, window: int, epsilon: float) -> bool:
    """True once the last ``window`` test accuracies span at most ``epsilon``."""
    records = list(history)
    if len(records) < window:
        return False
    tail = [r.test_accuracy for r in records[-window:]]
    return max(tail) - min(tail) <= epsilon


def run_phase1(
    config: FedSemConfig,
    shards,
    dataset: Dataset,
) -> tuple[ModelParams, tuple[RoundRecord, ...]]:
    """Labeled-only federated training up to the configured switch point."""
    fed = config.federation
    if fed.rounds < 2:
        raise ConfigError("a two-phase run needs rounds >= 2")
    if not any(training_view(s, dataset, labeled_only=True).size for s in shards):
        raise RoundFailure("phase 1 cannot train: no client holds a visible label")

    if config.phase_switch == "at_half_rounds":
        state = run_fedavg(
            fed, shards, dataset, labeled_only=True, rounds=fed.rounds // 2, phase="phase1"
        )
    else:
        # Keep at least one round of budget for phase 2.
        state = ServerState(global_params=initial_params(fed, dataset), round=0)
        for _ in range(fed.rounds - 1):
            state = run_round(state, shards, dataset, fed, labeled_only=True, phase="phase1")
            if converged(state.history, config.convergence_window, config.convergence_epsilon):
                break
    return state.global_params, state.history


def pseudo_label(
    model_phase1: ModelParams,
    dataset: Dataset,
    threshold: float = 0.0,
) -> Dataset:
    """Fill hidden labels with the model's confident predictions.

    Hidden samples whose top predicted probability reaches ``threshold``
    get that prediction as a visible working label, flagged in
    ``pseudo_mask``; the rest stay hidden and excluded from training.
    The input dataset (the ground-truth oracle) is never modified.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ConfigError(f"threshold must be in [0, 1], got {threshold}")
    if dataset.dim != model_phase1.layer_dims[0]:
        raise ShapeError(
            f"dataset dim {dataset.dim} does not match model input "
            f"{model_phase1.layer_dims[0]}"
        )
    if dataset.num_classes != model_phase1.layer_dims[-1]:
        raise ShapeError(
            f"dataset has {dataset.num_classes} classes but the model outputs "
            f"{model_phase1.layer_dims[-1]}"
        )
    hidden = np.flatnonzero(~dataset.label_visible)
    if hidden.size == 0:
        return replace(dataset)

    probs = forward(model_phase1, dataset.features[hidden])
    confident = probs.max(axis=1) >= threshold
    filled = hidden[confident]

    labels = np.array(dataset.labels, copy=True)
    labels[filled] = probs.argmax(axis=1)[confident]
    visible = np.array(dataset.label_visible, copy=True)
    visible[filled] = True
    pseudo = np.array(dataset.pseudo_mask, copy=True)
    pseudo[filled] = True
    return replace(dataset, labels=labels, label_visible=visible, pseudo_mask=pseudo)


def run_phase2(
    model_phase1: ModelParams,
    dataset: Dataset,
    config: FedSemConfig,
    shards,
    start_round: int,
) -> tuple[ModelParams, tuple[RoundRecord, ...]]:
    """Federated training over the pseudo-completed data, warm-started.

    Runs for the remaining round budget (total rounds minus
    ``start_round``), or until convergence in on_convergence mode.
    """
    fed = config.federation
    budget = fed.rounds - start_round
    if budget < 1:
        raise ConfigError(f"no phase-2 round budget left after {start_round} rounds")
    if config.phase_switch == "at_half_rounds":
        state = run_fedavg(
            fed,
            shards,
            dataset,
            labeled_only=False,
            rounds=budget,
            start_params=model_phase1,
            start_round=start_round,
            phase="phase2",
        )
    else:
        state = ServerState(global_params=model_phase1, round=start_round)
        for _ in range(budget):
            state = run_round(state, shards, dataset, fed, labeled_only=False, phase="phase2")
            if converged(state.history, config.convergence_window, config.convergence_epsilon):
                break
    return state.global_params, state.history


def run_fedsem(config: FedSemConfig, shards, dataset: Dataset) -> ExperimentResult:
    """Full two-phase experiment: phase 1, pseudo-labeling, phase 2."""
    model_phase1, history1 = run_phase1(config, shards, dataset)
    labeled = pseudo_label(model_phase1, dataset, config.pseudo_label_threshold)

    new_pseudo = labeled.pseudo_mask & ~dataset.pseudo_mask
    if new_pseudo.any():
        pseudo_accuracy = float(
            np.mean(labeled.labels[new_pseudo] == dataset.labels[new_pseudo])
        )
    else:
        pseudo_accuracy = None

    model_phase2, history2 = run_phase2(
        model_phase1, labeled, config, shards, start_round=len(history1)
    )
    accuracy_phase1 = max(r.test_accuracy for r in history1)
    accuracy_phase2 = max(r.test_accuracy for r in history2)
    return ExperimentResult(
        model_phase1=model_phase1,
        model_phase2=model_phase2,
        history=history1 + history2,
        accuracy_phase1=accuracy_phase1,
        accuracy_phase2=accuracy_phase2,
        gain=gain(accuracy_phase1, accuracy_phase2),
        pseudo_label_accuracy=pseudo_accuracy,
    )
