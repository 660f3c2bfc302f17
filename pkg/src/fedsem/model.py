"""From-scratch dense softmax classifier with SGD and Adam local solvers.

This is the training engine every simulated client runs: a configurable
multilayer perceptron (ReLU hidden layers, softmax output) with exact
analytic gradients of the mean cross-entropy loss. All operations are
pure functions of their inputs: parameters are immutable value objects
and every update returns a fresh instance, so concurrent client workers
can share a global model without copying or locking.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ClientSkip, ConfigError, ShapeError

PROB_FLOOR = 1e-12
SOLVERS = ("sgd", "adam")


def _frozen(arr: np.ndarray, dtype=np.float64) -> np.ndarray:
    out = np.array(arr, dtype=dtype, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Dense-layer weights and biases, flattenable to one parameter vector.

    ``layer_dims`` lists the input width, hidden widths, and class count;
    ``weights[l]`` has shape ``(layer_dims[l], layer_dims[l+1])`` and
    ``biases[l]`` has shape ``(layer_dims[l+1],)``.
    """

    layer_dims: tuple[int, ...]
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        if len(dims) < 2 or any(d < 1 for d in dims):
            raise ConfigError(f"layer_dims must list >= 2 positive sizes, got {dims}")
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            raise ShapeError("need one weight matrix and one bias vector per layer")
        weights = tuple(_frozen(w) for w in self.weights)
        biases = tuple(_frozen(b) for b in self.biases)
        for layer, (w, b) in enumerate(zip(weights, biases)):
            if w.shape != (dims[layer], dims[layer + 1]) or b.shape != (dims[layer + 1],):
                raise ShapeError(
                    f"layer {layer}: weight shape {w.shape} / bias shape {b.shape} "
                    f"do not match layer_dims {dims}"
                )
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise ValueError(f"layer {layer}: non-finite parameter values")
        object.__setattr__(self, "layer_dims", dims)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "biases", biases)

    @property
    def num_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def flatten(self) -> np.ndarray:
        """Concatenate all parameters (per layer: weights row-major, then bias)."""
        chunks = []
        for w, b in zip(self.weights, self.biases):
            chunks.append(w.ravel())
            chunks.append(b)
        return np.concatenate(chunks)

    @classmethod
    def unflatten(cls, layer_dims, vector) -> "ModelParams":
        """Rebuild parameters from a flat vector; inverse of :meth:`flatten`."""
        dims = tuple(int(d) for d in layer_dims)
        vec = np.asarray(vector, dtype=np.float64).ravel()
        expected = sum(din * dout + dout for din, dout in zip(dims[:-1], dims[1:]))
        if vec.size != expected:
            raise ShapeError(f"flat vector has {vec.size} entries, expected {expected}")
        weights, biases, offset = [], [], 0
        for din, dout in zip(dims[:-1], dims[1:]):
            weights.append(vec[offset : offset + din * dout].reshape(din, dout))
            offset += din * dout
            biases.append(vec[offset : offset + dout])
            offset += dout
        return cls(dims, tuple(weights), tuple(biases))


@dataclass(frozen=True, eq=False)
class Batch:
    """A block of samples: real inputs paired with exact one-hot targets."""

    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        inputs = _frozen(self.inputs)
        targets = _frozen(self.targets)
        if inputs.ndim != 2 or targets.ndim != 2:
            raise ShapeError("batch inputs and targets must be 2-d arrays")
        if inputs.shape[0] != targets.shape[0]:
            raise ShapeError(
                f"batch has {inputs.shape[0]} input rows but {targets.shape[0]} target rows"
            )
        if targets.size:
            binary = ((targets == 0.0) | (targets == 1.0)).all()
            if not binary or not (targets.sum(axis=1) == 1.0).all():
                raise ValueError("targets must be one-hot rows (one 1, rest 0)")
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "targets", targets)

    def __len__(self) -> int:
        return self.inputs.shape[0]


@dataclass(frozen=True, eq=False)
class OptimizerState:
    """Per-solver bookkeeping carried between optimizer steps."""

    kind: str
    step_count: int = 0
    first_moment: ModelParams | None = None
    second_moment: ModelParams | None = None
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.kind not in SOLVERS:
            raise ConfigError(f"unknown solver {self.kind!r}, expected one of {SOLVERS}")
        if self.step_count < 0:
            raise ConfigError("step_count must be non-negative")
        if self.kind == "adam" and (self.first_moment is None or self.second_moment is None):
            raise ConfigError("adam state requires first and second moments")


def init_optimizer(
    kind: str,
    params: ModelParams,
    beta1: float = 0.9,
    beta2: float = 0.999,
    epsilon: float = 1e-8,
) -> OptimizerState:
    """Fresh optimizer state for ``params``; adam moments start at zero."""
    if kind not in SOLVERS:
        raise ConfigError(f"unknown solver {kind!r}, expected one of {SOLVERS}")
    if kind == "sgd":
        return OptimizerState(kind="sgd")
    zeros = _map_params(params.layer_dims, np.zeros_like, params)
    return OptimizerState(
        kind="adam",
        first_moment=zeros,
        second_moment=zeros,
        beta1=beta1,
        beta2=beta2,
        epsilon=epsilon,
    )


def _map_params(layer_dims, fn, *objs: ModelParams) -> ModelParams:
    """Apply ``fn`` layer-by-layer across aligned parameter objects."""
    n_layers = len(layer_dims) - 1
    weights = tuple(fn(*(o.weights[l] for o in objs)) for l in range(n_layers))
    biases = tuple(fn(*(o.biases[l] for o in objs)) for l in range(n_layers))
    return ModelParams(tuple(layer_dims), weights, biases)


def init_params(layer_dims, seed: int) -> ModelParams:
    """Seeded fan-in-scaled normal weights (std sqrt(2/fan_in)), zero biases."""
    dims = tuple(int(d) for d in layer_dims)
    if len(dims) < 2 or any(d < 1 for d in dims):
        raise ConfigError(f"layer_dims must list >= 2 positive sizes, got {dims}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        weights.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return ModelParams(dims, tuple(weights), tuple(biases))


def _check_inputs(params: ModelParams, inputs) -> np.ndarray:
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"inputs must be 2-d, got shape {x.shape}")
    if x.shape[1] != params.layer_dims[0]:
        raise ShapeError(
            f"inputs have {x.shape[1]} columns but the model expects {params.layer_dims[0]}"
        )
    return x


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def forward(params: ModelParams, inputs) -> np.ndarray:
    """Class probabilities, one softmax row per input row."""
    x = _check_inputs(params, inputs)
    h = x
    for w, b in zip(params.weights[:-1], params.biases[:-1]):
        h = np.maximum(h @ w + b, 0.0)
    return _softmax(h @ params.weights[-1] + params.biases[-1])


def _check_targets(params: ModelParams, batch: Batch) -> None:
    if len(batch) == 0:
        raise ValueError("batch must be non-empty")
    if batch.targets.shape[1] != params.layer_dims[-1]:
        raise ShapeError(
            f"targets have {batch.targets.shape[1]} classes but the model "
            f"outputs {params.layer_dims[-1]}"
        )


def loss(params: ModelParams, batch: Batch) -> float:
    """Mean softmax cross-entropy; probabilities floored at 1e-12 before log."""
    _check_targets(params, batch)
    probs = forward(params, batch.inputs)
    clipped = np.maximum(probs, PROB_FLOOR)
    return float(-(batch.targets * np.log(clipped)).sum() / len(batch))


def backward(params: ModelParams, batch: Batch) -> ModelParams:
    """Analytic gradient of :func:`loss`, returned with the parameter layout."""
    _check_targets(params, batch)
    x = _check_inputs(params, batch.inputs)
    activations = [x]
    h = x
    for w, b in zip(params.weights[:-1], params.biases[:-1]):
        h = np.maximum(h @ w + b, 0.0)
        activations.append(h)
    probs = _softmax(h @ params.weights[-1] + params.biases[-1])

    n_layers = len(params.layer_dims) - 1
    grad_w: list[np.ndarray | None] = [None] * n_layers
    grad_b: list[np.ndarray | None] = [None] * n_layers
    delta = (probs - batch.targets) / len(batch)
    for layer in reversed(range(n_layers)):
        grad_w[layer] = activations[layer].T @ delta
        grad_b[layer] = delta.sum(axis=0)
        if layer > 0:
            # ReLU kills the upstream signal wherever the unit was inactive.
            delta = (delta @ params.weights[layer].T) * (activations[layer] > 0.0)
    return ModelParams(params.layer_dims, tuple(grad_w), tuple(grad_b))


def optimizer_step(
    params: ModelParams,
    grad: ModelParams,
    state: OptimizerState,
    lr: float,
) -> tuple[ModelParams, OptimizerState]:
    """One parameter update; returns the new params and advanced state."""
    if lr <= 0:
        raise ConfigError(f"learning rate must be positive, got {lr}")
    if grad.layer_dims != params.layer_dims:
        raise ShapeError(
            f"gradient dims {grad.layer_dims} do not match params {params.layer_dims}"
        )
    if state.kind == "sgd":
        new_params = _map_params(params.layer_dims, lambda p, g: p - lr * g, params, grad)
        return new_params, replace(state, step_count=state.step_count + 1)

    t = state.step_count + 1
    b1, b2, eps = state.beta1, state.beta2, state.epsilon
    m = _map_params(params.layer_dims, lambda mo, g: b1 * mo + (1 - b1) * g,
                    state.first_moment, grad)
    v = _map_params(params.layer_dims, lambda vo, g: b2 * vo + (1 - b2) * g * g,
                    state.second_moment, grad)
    bias1 = 1.0 - b1**t
    bias2 = 1.0 - b2**t
    new_params = _map_params(
        params.layer_dims,
        lambda p, mi, vi: p - lr * (mi / bias1) / (np.sqrt(vi / bias2) + eps),
        params, m, v,
    )
    return new_params, replace(state, step_count=t, first_moment=m, second_moment=v)


def train_local(
    params: ModelParams,
    samples: Batch,
    epochs: int,
    batch_size: int,
    lr: float,
    solver: str = "sgd",
    rng_seed: int = 0,
) -> ModelParams:
    """Mini-batch training over ``samples`` for ``epochs`` passes.

    Each epoch reshuffles the sample order with a generator seeded by
    ``rng_seed ^ epoch_index``; a final short batch is trained on rather
    than dropped. The input ``params`` object is never modified. A zero
    learning rate is the identity (every step would subtract zero).
    """
    if len(samples) == 0:
        raise ClientSkip("empty training view")
    if epochs < 1:
        raise ConfigError(f"epochs must be >= 1, got {epochs}")
    if batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
    if solver not in SOLVERS:
        raise ConfigError(f"unknown solver {solver!r}, expected one of {SOLVERS}")
    if lr < 0:
        raise ConfigError(f"learning rate must be non-negative, got {lr}")
    if lr == 0:
        return params

    state = init_optimizer(solver, params)
    current = params
    n = len(samples)
    for epoch in range(epochs):
        order = np.random.default_rng(rng_seed ^ epoch).permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            mini = Batch(samples.inputs[idx], samples.targets[idx])
            grad = backward(current, mini)
            current, state = optimizer_step(current, grad, state, lr)
    return current


def predict(params: ModelParams, inputs) -> np.ndarray:
    """Per-row argmax class labels; ties break to the lowest class index."""
    return np.argmax(forward(params, inputs), axis=1)


def evaluate(params: ModelParams, samples: Batch) -> tuple[float, float]:
    """(accuracy, mean loss) of ``params`` over ``samples`` as one batch."""
    if len(samples) == 0:
        raise ValueError("cannot evaluate on an empty sample set")
    predicted = predict(params, samples.inputs)
    truth = np.argmax(samples.targets, axis=1)
    accuracy = float(np.mean(predicted == truth))
    return accuracy, loss(params, samples)
