"""Shared fixtures: the canonical experiment pipelines and test oracles."""

from __future__ import annotations

import numpy as np
import pytest

import fedsem as fs

CANONICAL_SEED = 42


def canonical_federation(**overrides) -> fs.FederationConfig:
    """The canonical desk-scale two-phase experiment configuration."""
    base = dict(
        num_clients=20,
        clients_per_round=5,
        rounds=40,
        local_epochs=10,
        learning_rate=0.001,
        batch_size=16,
        solver="adam",
        aggregation="sample_weighted",
        master_seed=CANONICAL_SEED,
        hidden_dims=(48,),
    )
    base.update(overrides)
    return fs.FederationConfig(**base)


def easy_federation(**overrides) -> fs.FederationConfig:
    """A small well-separated task where federated training converges high."""
    base = dict(
        num_clients=10,
        clients_per_round=5,
        rounds=30,
        local_epochs=5,
        learning_rate=0.003,
        batch_size=32,
        solver="adam",
        aggregation="sample_weighted",
        master_seed=CANONICAL_SEED,
        hidden_dims=(32,),
    )
    base.update(overrides)
    return fs.FederationConfig(**base)


def build_pipeline(dataset, spec, labeled_fraction=1.0, mask_mode="per_client"):
    shards = fs.partition(dataset, spec)
    shards = fs.split_train_test(shards, ratio=0.8, seed=spec.seed)
    masked = fs.mask_labels(dataset, shards, labeled_fraction, mask_mode, seed=spec.seed)
    return masked, shards


@pytest.fixture(scope="session")
def canonical_pipeline():
    """(original, masked, shards) for the canonical shards-partition task."""
    dataset = fs.generate_synthetic(4000, 10, 16, 2.0, seed=CANONICAL_SEED)
    spec = fs.PartitionSpec(
        scheme="shards", num_clients=20, shards_per_client=2, seed=CANONICAL_SEED
    )
    masked, shards = build_pipeline(dataset, spec, labeled_fraction=0.2)
    return dataset, masked, shards


@pytest.fixture(scope="session")
def canonical_result(canonical_pipeline):
    """(ExperimentResult, wall seconds) for the canonical two-phase run."""
    import time

    _, masked, shards = canonical_pipeline
    config = fs.FedSemConfig(federation=canonical_federation())
    started = time.perf_counter()
    result = fs.run_fedsem(config, shards, masked)
    return result, time.perf_counter() - started


@pytest.fixture(scope="session")
def easy_pipeline():
    """Fully labeled IID pipeline on the well-separated task."""
    dataset = fs.generate_synthetic(1000, 4, 32, 3.0, seed=CANONICAL_SEED)
    spec = fs.PartitionSpec(scheme="iid", num_clients=10, seed=CANONICAL_SEED)
    masked, shards = build_pipeline(dataset, spec, labeled_fraction=1.0)
    return dataset, masked, shards


def params_equal(a: fs.ModelParams, b: fs.ModelParams) -> bool:
    return a.layer_dims == b.layer_dims and np.array_equal(a.flatten(), b.flatten())


def finite_difference_gradient(params: fs.ModelParams, batch: fs.Batch, h: float = 1e-5):
    """Central finite differences of the loss over the flat parameter vector."""
    flat = params.flatten()
    grad = np.zeros_like(flat)
    for i in range(flat.size):
        plus = flat.copy()
        plus[i] += h
        minus = flat.copy()
        minus[i] -= h
        grad[i] = (
            fs.loss(fs.ModelParams.unflatten(params.layer_dims, plus), batch)
            - fs.loss(fs.ModelParams.unflatten(params.layer_dims, minus), batch)
        ) / (2 * h)
    return grad


def random_model_and_batch(seed: int, layer_dims=(5, 4, 3), batch_rows: int = 8):
    rng = np.random.default_rng(seed)
    params = fs.init_params(layer_dims, seed=seed)
    inputs = rng.normal(size=(batch_rows, layer_dims[0]))
    targets = fs.one_hot(rng.integers(0, layer_dims[-1], batch_rows), layer_dims[-1])
    return params, fs.Batch(inputs, targets)


def make_records(accuracies, phase="phase1", start_round=0):
    return [
        fs.RoundRecord(
            round=start_round + i,
            phase=phase,
            test_accuracy=a,
            test_loss=1.0,
            participant_ids=(0,),
        )
        for i, a in enumerate(accuracies)
    ]
