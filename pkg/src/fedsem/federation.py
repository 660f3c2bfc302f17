"""Federated-averaging round engine.

One round: sample a client subset, broadcast the global parameters, let
each sampled client train locally on its visible-labeled samples, then
average the returned parameters and evaluate the new global model on the
union of all client test indices.

Client work inside a round is embarrassingly parallel: training seeds
depend only on (master_seed, round_index, client_id), and aggregation
always reduces in client-id order, so threaded and serial execution
produce bit-identical results.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .data import ClientShard, Dataset, one_hot
from .errors import ClientSkip, ConfigError, RoundFailure, ShapeError
from .metrics import RoundRecord
from .model import (
    Batch,
    ModelParams,
    SOLVERS,
    evaluate,
    init_params,
    train_local,
)
from .seeding import derive_seed

AGGREGATIONS = ("uniform", "sample_weighted")


@dataclass(frozen=True)
class FederationConfig:
    """Knobs of the federated loop; hidden_dims sizes the shared classifier."""

    num_clients: int
    clients_per_round: int
    rounds: int
    local_epochs: int
    learning_rate: float
    batch_size: int = 32
    solver: str = "adam"
    aggregation: str = "sample_weighted"
    master_seed: int = 0
    hidden_dims: tuple[int, ...] = (32,)
    parallel_clients: int = 1

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(d) for d in self.hidden_dims))
        if self.num_clients < 1:
            raise ConfigError(f"num_clients must be >= 1, got {self.num_clients}")
        if not 1 <= self.clients_per_round <= self.num_clients:
            raise ConfigError(
                f"clients_per_round must be in [1, {self.num_clients}], "
                f"got {self.clients_per_round}"
            )
        if self.rounds < 0:
            raise ConfigError(f"rounds must be non-negative, got {self.rounds}")
        if self.local_epochs < 1:
            raise ConfigError(f"local_epochs must be >= 1, got {self.local_epochs}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.solver not in SOLVERS:
            raise ConfigError(f"unknown solver {self.solver!r}, expected one of {SOLVERS}")
        if self.aggregation not in AGGREGATIONS:
            raise ConfigError(
                f"unknown aggregation {self.aggregation!r}, expected one of {AGGREGATIONS}"
            )
        if self.master_seed < 0:
            raise ConfigError("master_seed must be non-negative")
        if any(d < 1 for d in self.hidden_dims):
            raise ConfigError(f"hidden_dims must all be >= 1, got {self.hidden_dims}")
        if self.parallel_clients < 1:
            raise ConfigError(f"parallel_clients must be >= 1, got {self.parallel_clients}")


@dataclass(frozen=True, eq=False)
class ClientUpdate:
    """A client's post-training parameters and the sample count behind them."""

    client_id: int
    params: ModelParams
    num_samples: int

    def __post_init__(self):
        if self.num_samples < 1:
            raise ConfigError(f"num_samples must be >= 1, got {self.num_samples}")


@dataclass(frozen=True, eq=False)
class ServerState:
    """Global parameters plus the completed-round history."""

    global_params: ModelParams
    round: int
    history: tuple[RoundRecord, ...] = ()


def _round_order(master_seed: int, round_index: int, eligible) -> list[int]:
    """Seeded permutation of eligible client ids for one round."""
    ids = sorted(int(c) for c in set(eligible))
    rng = np.random.default_rng(derive_seed(master_seed, round_index))
    return [ids[i] for i in rng.permutation(len(ids))]


def sample_clients(
    num_clients: int,
    clients_per_round: int,
    round_index: int,
    master_seed: int,
    eligible=None,
) -> list[int]:
    """Uniform sample without replacement, seeded by (master_seed, round)."""
    pool = list(range(num_clients)) if eligible is None else sorted(set(eligible))
    if clients_per_round > len(pool):
        raise ConfigError(
            f"cannot sample {clients_per_round} clients from {len(pool)} eligible"
        )
    return sorted(_round_order(master_seed, round_index, pool)[:clients_per_round])


def training_view(shard: ClientShard, dataset: Dataset, labeled_only: bool) -> np.ndarray:
    """Indices this client may train on: visible labels, and with
    ``labeled_only`` also excluding model-filled (pseudo) labels."""
    usable = dataset.label_visible[shard.train_indices]
    if labeled_only:
        usable = usable & ~dataset.pseudo_mask[shard.train_indices]
    return shard.train_indices[usable]


def _view_batch(dataset: Dataset, indices: np.ndarray) -> Batch:
    return Batch(
        inputs=dataset.features[indices],
        targets=one_hot(dataset.labels[indices], dataset.num_classes),
    )


def client_round(
    global_params: ModelParams,
    shard: ClientShard,
    dataset: Dataset,
    config: FederationConfig,
    round_index: int,
    labeled_only: bool = False,
) -> ClientUpdate:
    """Local training of one client for one round; pure in all inputs."""
    view = training_view(shard, dataset, labeled_only)
    if view.size == 0:
        raise ClientSkip("no trainable samples in view", client_id=shard.client_id)
    trained = train_local(
        global_params,
        _view_batch(dataset, view),
        epochs=config.local_epochs,
        batch_size=config.batch_size,
        lr=config.learning_rate,
        solver=config.solver,
        rng_seed=derive_seed(config.master_seed, round_index, shard.client_id),
    )
    return ClientUpdate(client_id=shard.client_id, params=trained, num_samples=int(view.size))


def aggregate(updates, scheme: str = "sample_weighted") -> ModelParams:
    """Average client parameters; reduction runs in client-id order.

    ``uniform`` takes the unweighted mean over the received
    updates; ``sample_weighted`` weights each by its share of the
    round's training samples. The mean is accumulated as offsets from
    the lowest-id update, which makes aggregation of identical updates
    exactly idempotent and the result independent of list order.
    """
    updates = list(updates)
    if not updates:
        raise ValueError("cannot aggregate zero updates")
    if scheme not in AGGREGATIONS:
        raise ConfigError(f"unknown aggregation {scheme!r}, expected one of {AGGREGATIONS}")
    ordered = sorted(updates, key=lambda u: u.client_id)
    dims = ordered[0].params.layer_dims
    for u in ordered:
        if u.params.layer_dims != dims:
            raise ShapeError(
                f"client {u.client_id} update dims {u.params.layer_dims} != {dims}"
            )
    if scheme == "uniform":
        coeffs = [1.0 / len(ordered)] * len(ordered)
    else:
        total = float(sum(u.num_samples for u in ordered))
        coeffs = [u.num_samples / total for u in ordered]

    base = ordered[0].params
    n_layers = len(dims) - 1
    weights = []
    biases = []
    for layer in range(n_layers):
        dw = np.zeros_like(base.weights[layer])
        db = np.zeros_like(base.biases[layer])
        for coeff, update in zip(coeffs, ordered):
            dw = dw + coeff * (update.params.weights[layer] - base.weights[layer])
            db = db + coeff * (update.params.biases[layer] - base.biases[layer])
        weights.append(base.weights[layer] + dw)
        biases.append(base.biases[layer] + db)
    return ModelParams(dims, tuple(weights), tuple(biases))


def evaluation_batch(shards, dataset: Dataset) -> Batch:
    """Union of all client test indices, as one evaluation batch."""
    indices = np.sort(np.concatenate([s.test_indices for s in shards]))
    if indices.size == 0:
        raise ValueError("no test indices; split shards before running rounds")
    return _view_batch(dataset, indices)


def run_round(
    state: ServerState,
    shards,
    dataset: Dataset,
    config: FederationConfig,
    labeled_only: bool = False,
    phase: str = "phase1",
) -> ServerState:
    """One full federated round; returns the advanced server state.

    Clients whose training view is empty are skipped and replaced by the
    next eligible id in this round's seeded order, keeping the
    participant count whenever enough trainable clients exist.
    """
    by_id = {s.client_id: s for s in shards}
    order = _round_order(config.master_seed, state.round, by_id.keys())
    participants = []
    for cid in order:
        if len(participants) == config.clients_per_round:
            break
        if training_view(by_id[cid], dataset, labeled_only).size:
            participants.append(cid)
    if not participants:
        raise RoundFailure(f"round {state.round} ({phase}): every eligible client skipped")

    def train(cid: int) -> ClientUpdate:
        return client_round(
            state.global_params, by_id[cid], dataset, config, state.round, labeled_only
        )

    if config.parallel_clients > 1 and len(participants) > 1:
        with ThreadPoolExecutor(max_workers=config.parallel_clients) as pool:
            updates = list(pool.map(train, participants))
    else:
        updates = [train(cid) for cid in participants]

    new_params = aggregate(updates, config.aggregation)
    accuracy, mean_loss = evaluate(new_params, evaluation_batch(shards, dataset))
    record = RoundRecord(
        round=state.round,
        phase=phase,
        test_accuracy=accuracy,
        test_loss=mean_loss,
        participant_ids=tuple(sorted(participants)),
    )
    return ServerState(
        global_params=new_params,
        round=state.round + 1,
        history=state.history + (record,),
    )


def initial_params(config: FederationConfig, dataset: Dataset) -> ModelParams:
    """Seeded global model sized to the dataset and configured hidden layers."""
    layer_dims = (dataset.dim, *config.hidden_dims, dataset.num_classes)
    return init_params(layer_dims, seed=config.master_seed)


def run_fedavg(
    config: FederationConfig,
    shards,
    dataset: Dataset,
    labeled_only: bool = False,
    *,
    rounds: int | None = None,
    start_params: ModelParams | None = None,
    start_round: int = 0,
    phase: str = "phase1",
) -> ServerState:
    """Run the federated loop for ``rounds`` rounds (default: config.rounds)."""
    n_rounds = config.rounds if rounds is None else rounds
    if n_rounds < 0:
        raise ConfigError(f"rounds must be non-negative, got {n_rounds}")
    params = initial_params(config, dataset) if start_params is None else start_params
    state = ServerState(global_params=params, round=start_round, history=())
    for _ in range(n_rounds):
        state = run_round(state, shards, dataset, config, labeled_only, phase)
    return state
