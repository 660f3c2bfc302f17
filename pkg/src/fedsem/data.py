"""Dataset construction, non-IID partitioning, label masking, train/test splits.

The simulator works on one in-memory dataset shared (read-only) by all
simulated clients; each client owns an index set into it. Label
visibility is the privacy fence: training code may only read labels
through ``label_visible``, while hidden labels stay in the array purely
as an evaluation oracle.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, CsvParseError
from .seeding import derive_seed

PARTITION_SCHEMES = ("iid", "shards", "dirichlet")
MASK_MODES = ("per_client", "global")


def _frozen(arr: np.ndarray, dtype) -> np.ndarray:
    out = np.array(arr, dtype=dtype, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature matrix, integer labels, and a per-sample visibility mask.

    Hidden labels (``label_visible`` false) are oracle-only ground truth:
    they are retained so pseudo-label quality can be measured, but no
    training path may read them. Validation therefore only range-checks
    the visible entries, which lets fencing tests overwrite hidden ones
    with out-of-range sentinels. ``pseudo_mask`` marks visible labels
    that were filled in by a model rather than observed.
    """

    features: np.ndarray
    labels: np.ndarray
    label_visible: np.ndarray
    num_classes: int
    pseudo_mask: np.ndarray | None = None

    def __post_init__(self):
        features = _frozen(self.features, np.float64)
        labels = _frozen(self.labels, np.int64)
        visible = _frozen(self.label_visible, bool)
        pseudo = (
            np.zeros(labels.shape[0], dtype=bool)
            if self.pseudo_mask is None
            else np.array(self.pseudo_mask, dtype=bool, copy=True)
        )
        pseudo.flags.writeable = False
        if features.ndim != 2:
            raise ConfigError(f"features must be 2-d, got shape {features.shape}")
        n = features.shape[0]
        if labels.shape != (n,) or visible.shape != (n,) or pseudo.shape != (n,):
            raise ConfigError("labels, label_visible, and pseudo_mask must have one entry per row")
        if not np.isfinite(features).all():
            raise ConfigError("features contain non-finite values")
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {self.num_classes}")
        shown = labels[visible]
        if shown.size and (shown.min() < 0 or shown.max() >= self.num_classes):
            raise ConfigError("visible labels must lie in [0, num_classes)")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "label_visible", visible)
        object.__setattr__(self, "pseudo_mask", pseudo)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True, eq=False)
class ClientShard:
    """One client's index set into the Dataset, with its train/test split."""

    client_id: int
    train_indices: np.ndarray
    test_indices: np.ndarray | None = None

    def __post_init__(self):
        train = _frozen(np.atleast_1d(self.train_indices), np.int64)
        test = _frozen(
            np.empty(0) if self.test_indices is None else np.atleast_1d(self.test_indices),
            np.int64,
        )
        if self.client_id < 0:
            raise ConfigError(f"client_id must be non-negative, got {self.client_id}")
        if np.intersect1d(train, test).size:
            raise ConfigError(f"client {self.client_id}: train and test indices overlap")
        object.__setattr__(self, "train_indices", train)
        object.__setattr__(self, "test_indices", test)

    @property
    def size(self) -> int:
        return self.train_indices.size + self.test_indices.size

    @property
    def all_indices(self) -> np.ndarray:
        return np.sort(np.concatenate([self.train_indices, self.test_indices]))


@dataclass(frozen=True)
class PartitionSpec:
    """How to distribute dataset indices across clients."""

    scheme: str
    num_clients: int
    shards_per_client: int | None = None
    alpha: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.scheme not in PARTITION_SCHEMES:
            raise ConfigError(f"unknown partition scheme {self.scheme!r}")
        if self.num_clients < 1:
            raise ConfigError(f"num_clients must be >= 1, got {self.num_clients}")
        if self.seed < 0:
            raise ConfigError("partition seed must be non-negative")
        if self.scheme == "shards" and (self.shards_per_client is None or self.shards_per_client < 1):
            raise ConfigError("shards scheme requires shards_per_client >= 1")
        if self.scheme == "dirichlet" and (self.alpha is None or self.alpha <= 0):
            raise ConfigError("dirichlet scheme requires alpha > 0")


def generate_synthetic(
    n_samples: int,
    num_classes: int,
    dim: int,
    class_separation: float,
    seed: int,
) -> Dataset:
    """Gaussian blobs: class centers on seeded random unit directions.

    Each center is a random unit vector scaled by ``class_separation``;
    samples get unit-covariance noise. Labels are assigned round-robin,
    so class counts are balanced within one sample.
    """
    if num_classes < 2:
        raise ConfigError(f"num_classes must be >= 2, got {num_classes}")
    if n_samples < num_classes:
        raise ConfigError(f"need at least one sample per class ({n_samples} < {num_classes})")
    if dim < 2:
        raise ConfigError(f"dim must be >= 2, got {dim}")
    if class_separation <= 0:
        raise ConfigError(f"class_separation must be positive, got {class_separation}")
    rng = np.random.default_rng(seed)
    centers = rng.standard_normal((num_classes, dim))
    centers *= class_separation / np.linalg.norm(centers, axis=1, keepdims=True)
    labels = np.arange(n_samples, dtype=np.int64) % num_classes
    features = centers[labels] + rng.standard_normal((n_samples, dim))
    return Dataset(
        features=features,
        labels=labels,
        label_visible=np.ones(n_samples, dtype=bool),
        num_classes=num_classes,
    )


def load_csv(path, num_classes: int, has_header: bool = False) -> Dataset:
    """Read ``f1,...,fd,label`` rows; labels must be integral and in range."""
    rows: list[list[float]] = []
    labels: list[int] = []
    width: int | None = None
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        for row in reader:
            line = reader.line_num
            if has_header and line == 1:
                continue
            if not row:
                continue
            if width is None:
                width = len(row)
                if width < 2:
                    raise CsvParseError(line, "rows need at least one feature and a label")
            if len(row) != width:
                raise CsvParseError(line, f"expected {width} columns, got {len(row)}")
            try:
                values = [float(cell) for cell in row[:-1]]
            except ValueError:
                raise CsvParseError(line, f"non-numeric feature in row: {row[:-1]}") from None
            label_cell = row[-1].strip()
            try:
                label = int(label_cell)
            except ValueError:
                try:
                    as_float = float(label_cell)
                except ValueError:
                    raise CsvParseError(line, f"non-numeric label {label_cell!r}") from None
                if as_float != int(as_float):
                    raise CsvParseError(line, f"label {label_cell!r} is not integral") from None
                label = int(as_float)
            if not 0 <= label < num_classes:
                raise CsvParseError(
                    line, f"label {label} out of range [0, {num_classes})"
                )
            rows.append(values)
            labels.append(label)
    if not rows:
        raise CsvParseError(1, "no data rows")
    return Dataset(
        features=np.array(rows, dtype=np.float64),
        labels=np.array(labels, dtype=np.int64),
        label_visible=np.ones(len(rows), dtype=bool),
        num_classes=num_classes,
    )


def save_csv(dataset: Dataset, path, header: bool = False) -> None:
    """Write the CSV form of a dataset; feature reprs round-trip exactly."""
    lines = []
    if header:
        lines.append(",".join([f"f{i + 1}" for i in range(dataset.dim)] + ["label"]))
    for row, label in zip(dataset.features, dataset.labels):
        lines.append(",".join([repr(float(v)) for v in row] + [str(int(label))]))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def _subset_sizes(counts: list[int]) -> np.ndarray:
    return np.array(counts, dtype=np.int64)


def partition(dataset: Dataset, spec: PartitionSpec) -> list[ClientShard]:
    """Distribute all sample indices across clients per ``spec``.

    Returns shards whose entire allocation sits in ``train_indices``;
    apply :func:`split_train_test` afterwards.
    """
    n = dataset.n_samples
    k = spec.num_clients
    if n < k:
        raise ConfigError(f"cannot split {n} samples across {k} clients")
    rng = np.random.default_rng(spec.seed)

    if spec.scheme == "iid":
        order = rng.permutation(n)
        allocations = [order[i::k] for i in range(k)]
    elif spec.scheme == "shards":
        per_client = spec.shards_per_client
        num_shards = k * per_client
        if n < num_shards:
            raise ConfigError(
                f"shards scheme needs at least {num_shards} samples, got {n}"
            )
        # Stable label sort, then deal whole contiguous shards to clients.
        by_label = np.lexsort((np.arange(n), dataset.labels))
        chunks = np.array_split(by_label, num_shards)
        dealt = rng.permutation(num_shards)
        allocations = [
            np.concatenate([chunks[s] for s in dealt[i * per_client : (i + 1) * per_client]])
            for i in range(k)
        ]
    else:  # dirichlet
        buckets: list[list[int]] = [[] for _ in range(k)]
        for cls in range(dataset.num_classes):
            members = np.flatnonzero(dataset.labels == cls)
            if members.size == 0:
                continue
            members = rng.permutation(members)
            shares = rng.dirichlet(np.full(k, float(spec.alpha)))
            cuts = (np.cumsum(shares) * members.size).astype(np.int64)[:-1]
            for client, segment in enumerate(np.split(members, cuts)):
                buckets[client].extend(int(i) for i in segment)
        sizes = _subset_sizes([len(b) for b in buckets])
        while sizes.min() == 0:
            donor = int(np.argmax(sizes))
            needy = int(np.argmin(sizes))
            buckets[needy].append(buckets[donor].pop())
            sizes = _subset_sizes([len(b) for b in buckets])
        allocations = [np.array(b, dtype=np.int64) for b in buckets]

    return [
        ClientShard(client_id=i, train_indices=np.sort(alloc))
        for i, alloc in enumerate(allocations)
    ]


def split_train_test(
    shards: list[ClientShard],
    ratio: float = 0.8,
    seed: int = 0,
) -> list[ClientShard]:
    """Per-client seeded shuffle and split; test gets floor((1-ratio)*n), min 1."""
    if not 0.0 < ratio < 1.0:
        raise ConfigError(f"train ratio must be in (0, 1), got {ratio}")
    out = []
    for shard in shards:
        allocation = shard.all_indices
        n = allocation.size
        if n < 2:
            raise ConfigError(
                f"client {shard.client_id} holds {n} sample(s); cannot split for evaluation"
            )
        rng = np.random.default_rng(derive_seed(seed, shard.client_id))
        order = rng.permutation(allocation)
        # The 1e-9 nudge keeps exact fractions (0.2 * 10) from flooring low.
        n_test = int(np.floor((1.0 - ratio) * n + 1e-9))
        n_test = min(max(1, n_test), n - 1)
        out.append(
            ClientShard(
                client_id=shard.client_id,
                train_indices=np.sort(order[n_test:]),
                test_indices=np.sort(order[:n_test]),
            )
        )
    return out


def mask_labels(
    dataset: Dataset,
    shards: list[ClientShard],
    labeled_fraction: float,
    mode: str = "per_client",
    seed: int = 0,
) -> Dataset:
    """Hide all but a seeded fraction of the training labels.

    ``per_client`` keeps ceil(fraction * |train|) labels visible within
    each client's training indices; ``global`` makes one choice over the
    union of all training indices. Test labels always remain visible:
    they serve evaluation only and are never trained on.
    """
    if not 0.0 < labeled_fraction <= 1.0:
        raise ConfigError(f"labeled_fraction must be in (0, 1], got {labeled_fraction}")
    if mode not in MASK_MODES:
        raise ConfigError(f"unknown mask mode {mode!r}, expected one of {MASK_MODES}")
    visible = np.array(dataset.label_visible, copy=True)

    def keep(rng: np.random.Generator, train: np.ndarray) -> None:
        n_keep = int(np.ceil(labeled_fraction * train.size - 1e-9))
        chosen = rng.choice(train, size=n_keep, replace=False)
        visible[train] = False
        visible[chosen] = True

    if mode == "per_client":
        for shard in shards:
            if shard.train_indices.size:
                keep(np.random.default_rng(derive_seed(seed, shard.client_id)), shard.train_indices)
    else:
        all_train = np.sort(np.concatenate([s.train_indices for s in shards]))
        if all_train.size:
            keep(np.random.default_rng(derive_seed(seed)), all_train)
    return replace(dataset, label_visible=visible)


def one_hot(labels, num_classes: int) -> np.ndarray:
    """Row j carries a single 1 at column labels[j]."""
    arr = np.asarray(labels)
    if arr.size and not np.issubdtype(arr.dtype, np.integer):
        raise ValueError(f"labels must be integers, got dtype {arr.dtype}")
    arr = arr.astype(np.int64, copy=False).ravel()
    if arr.size and (arr.min() < 0 or arr.max() >= num_classes):
        raise ValueError(f"labels must lie in [0, {num_classes})")
    return np.eye(num_classes, dtype=np.float64)[arr]
