"""Long-tailed, task-partitioned, single-pass data streams.

A stream is a list of :class:`TaskStream` objects, each holding the batches of one
task. Sources provide per-class samples: :class:`SyntheticSource` draws from seeded
Gaussian clusters, :class:`ArraySource` wraps a loaded file dataset. Train and test
draws come from separate seeded streams so they never overlap.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, FormatError, SinglePassError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

# spawn-key tags keeping the per-purpose random streams independent
_MEANS, _TRAIN, _TEST, _CLASS_ORDER, _SHUFFLE = 0, 1, 2, 3, 4


@dataclass(frozen=True)
class Batch:
    """A batch of labeled feature vectors: features (n, dim), labels (n,)."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "features", np.atleast_2d(np.asarray(self.features, dtype=np.float64)))
        object.__setattr__(self, "labels", np.asarray(self.labels, dtype=np.int64).ravel())
        if self.features.shape[0] != self.labels.shape[0]:
            raise DataError(
                f"{self.features.shape[0]} feature rows but {self.labels.shape[0]} labels"
            )

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @staticmethod
    def empty(dim: int) -> "Batch":
        return Batch(np.zeros((0, dim)), np.zeros(0, dtype=np.int64))

    @staticmethod
    def concat(parts: list["Batch"]) -> "Batch":
        parts = [p for p in parts if len(p) > 0]
        if not parts:
            raise DataError("cannot concatenate zero non-empty batches")
        return Batch(
            np.concatenate([p.features for p in parts]),
            np.concatenate([p.labels for p in parts]),
        )


@dataclass(frozen=True)
class StreamConfig:
    rho: float
    num_classes: int
    max_per_class: int
    num_tasks: int
    classes_per_task: tuple[int, ...]
    batch_size: int = 16
    seed: int = 0
    shuffle_classes: bool = False  # permute class-to-task assignment (head classes land anywhere)

    def __post_init__(self):
        object.__setattr__(self, "classes_per_task", tuple(self.classes_per_task))
        if not 0.0 < self.rho <= 1.0:
            raise ConfigError(f"rho must be in (0, 1], got {self.rho}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if len(self.classes_per_task) != self.num_tasks:
            raise ConfigError(
                f"classes_per_task has {len(self.classes_per_task)} entries for {self.num_tasks} tasks"
            )
        if any(c < 1 for c in self.classes_per_task):
            raise ConfigError("every task needs at least one class")
        if sum(self.classes_per_task) != self.num_classes:
            raise ConfigError(
                f"classes_per_task sums to {sum(self.classes_per_task)}, expected {self.num_classes}"
            )


@dataclass
class TaskStream:
    """Ordered batches of one task; iterable exactly once."""

    task_id: int
    batches: tuple[Batch, ...]
    class_ids: tuple[int, ...]
    consumed: bool = False

    def __iter__(self):
        if self.consumed:
            raise SinglePassError(f"task {self.task_id} stream already consumed")
        self.consumed = True
        return iter(self.batches)

    @property
    def num_samples(self) -> int:
        return sum(len(b) for b in self.batches)


@dataclass
class AugmentConfig:
    """Stochastic label-preserving corruption: Gaussian noise then random masking.

    Owns a seeded generator so successive augment() calls draw fresh randomness
    while whole runs stay reproducible.
    """

    noise_sigma: float = 0.1
    mask_prob: float = 0.1
    seed: int = 0
    _rng: np.random.Generator | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise ConfigError(f"noise_sigma must be non-negative, got {self.noise_sigma}")
        if not 0.0 <= self.mask_prob < 1.0:
            raise ConfigError(f"mask_prob must be in [0, 1), got {self.mask_prob}")

    @property
    def rng(self) -> np.random.Generator:
        if self._rng is None:
            self._rng = np.random.default_rng(self.seed)
        return self._rng

    def reset(self, seed: int | None = None) -> None:
        if seed is not None:
            self.seed = seed
        self._rng = np.random.default_rng(self.seed)


def long_tail_counts(rho: float, num_classes: int, n_max: int) -> list[int]:
    """Per-class sample counts decaying exponentially from n_max to ~n_max*rho.

    count_j = max(1, round(n_max * rho^((j-1)/(K-1)))) for j = 1..K; a single
    class keeps n_max. Monotone non-increasing; no class drops below one sample.
    """
    if num_classes < 1:
        raise ConfigError(f"need at least one class, got {num_classes}")
    if n_max < 1:
        raise ConfigError(f"n_max must be >= 1, got {n_max}")
    if not 0.0 < rho <= 1.0:
        raise ConfigError(f"rho must be in (0, 1], got {rho}")
    if num_classes == 1:
        return [n_max]
    return [
        max(1, int(round(n_max * rho ** (j / (num_classes - 1)))))
        for j in range(num_classes)
    ]


class SyntheticSource:
    """Gaussian-mixture sample generator: one isotropic cluster per class.

    Class means are unit-norm and fixed by the seed. Training draws for a class
    come from a stateful per-class stream (successive takes never repeat);
    test draws use an independent stream keyed by the split seed.
    """

    def __init__(self, num_classes: int, dim: int, cluster_spread: float, seed: int = 0):
        if num_classes < 1 or dim < 1:
            raise ConfigError("num_classes and dim must be >= 1")
        self.num_classes = num_classes
        self.dim = dim
        self.cluster_spread = float(cluster_spread)
        self.seed = seed
        rng = np.random.default_rng(np.random.SeedSequence([seed, _MEANS]))
        means = rng.standard_normal((num_classes, dim))
        self.means = means / np.linalg.norm(means, axis=1, keepdims=True)
        self._train_rngs = [
            np.random.default_rng(np.random.SeedSequence([seed, _TRAIN, c]))
            for c in range(num_classes)
        ]

    def _check_class(self, class_id: int) -> None:
        if not 0 <= class_id < self.num_classes:
            raise DataError(f"class {class_id} outside [0, {self.num_classes})")

    def take(self, class_id: int, n: int) -> np.ndarray:
        """Draw n fresh training samples of the given class."""
        self._check_class(class_id)
        noise = self._train_rngs[class_id].standard_normal((n, self.dim))
        return self.means[class_id] + self.cluster_spread * noise

    def test_take(self, class_id: int, n: int, seed: int) -> np.ndarray:
        """Draw n held-out samples; same seed reproduces the same set."""
        self._check_class(class_id)
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, _TEST, seed, class_id]))
        noise = rng.standard_normal((n, self.dim))
        return self.means[class_id] + self.cluster_spread * noise


class ArraySource:
    """Finite per-class sample store over a loaded dataset.

    Each class's samples are permuted once (seeded); training draws consume from
    the front, test draws come from the fixed back end, so the two never overlap.
    """

    def __init__(self, data: Batch, seed: int = 0, num_classes: int | None = None):
        self.dim = data.dim
        labels = data.labels
        self.num_classes = int(num_classes if num_classes is not None else labels.max() + 1)
        rng = np.random.default_rng(np.random.SeedSequence([seed, _TRAIN]))
        self._per_class: list[np.ndarray] = []
        self._train_cursor = [0] * self.num_classes
        self._test_depth = [0] * self.num_classes
        for c in range(self.num_classes):
            idx = np.flatnonzero(labels == c)
            self._per_class.append(data.features[rng.permutation(idx)])

    def take(self, class_id: int, n: int) -> np.ndarray:
        pool = self._per_class[class_id]
        start = self._train_cursor[class_id]
        avail = len(pool) - self._test_depth[class_id] - start
        if n > avail:
            raise DataError(
                f"class {class_id}: requested {n} training samples, only {avail} available"
            )
        self._train_cursor[class_id] = start + n
        return pool[start : start + n].copy()

    def test_take(self, class_id: int, n: int, seed: int) -> np.ndarray:
        pool = self._per_class[class_id]
        depth = max(self._test_depth[class_id], n)
        if depth + self._train_cursor[class_id] > len(pool):
            raise DataError(
                f"class {class_id}: test split of {n} would overlap training draws"
            )
        self._test_depth[class_id] = depth
        return pool[len(pool) - n :].copy()


def build_stream(source, cfg: StreamConfig) -> list[TaskStream]:
    """Partition classes into tasks and chunk each task's long-tailed subsample.

    Classes go to tasks in label order (or a seeded permutation of it when
    cfg.shuffle_classes is set); within a task the samples are shuffled and cut
    into batches of cfg.batch_size, the last batch possibly smaller.
    """
    counts = long_tail_counts(cfg.rho, cfg.num_classes, cfg.max_per_class)
    order = list(range(cfg.num_classes))
    if cfg.shuffle_classes:
        perm_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, _CLASS_ORDER]))
        order = list(perm_rng.permutation(cfg.num_classes))

    tasks: list[TaskStream] = []
    pos = 0
    for t, k_t in enumerate(cfg.classes_per_task):
        class_ids = tuple(int(c) for c in order[pos : pos + k_t])
        pos += k_t
        feats = []
        labs = []
        for c in class_ids:
            x = source.take(c, counts[c])
            feats.append(x)
            labs.append(np.full(counts[c], c, dtype=np.int64))
        features = np.concatenate(feats)
        labels = np.concatenate(labs)
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, _SHUFFLE, t]))
        perm = rng.permutation(len(labels))
        features, labels = features[perm], labels[perm]
        batches = tuple(
            Batch(features[i : i + cfg.batch_size], labels[i : i + cfg.batch_size])
            for i in range(0, len(labels), cfg.batch_size)
        )
        tasks.append(TaskStream(task_id=t, batches=batches, class_ids=class_ids))
    return tasks


def augment(batch: Batch, cfg: AugmentConfig) -> Batch:
    """Add Gaussian noise to every feature, then zero each one with mask_prob.

    Labels pass through unchanged. Randomness advances cfg's generator, so
    repeated calls produce different corruptions.
    """
    x = batch.features.copy()
    if cfg.noise_sigma > 0:
        x += cfg.rng.normal(0.0, cfg.noise_sigma, size=x.shape)
    if cfg.mask_prob > 0:
        x[cfg.rng.random(x.shape) < cfg.mask_prob] = 0.0
    return Batch(x, batch.labels.copy())


def make_balanced_test_split(source, num_classes: int, per_class: int, seed: int) -> Batch:
    """Exactly per_class held-out samples for every class, disjoint from training."""
    feats = []
    labs = []
    for c in range(num_classes):
        feats.append(source.test_take(c, per_class, seed))
        labs.append(np.full(per_class, c, dtype=np.int64))
    return Batch(np.concatenate(feats), np.concatenate(labs))


def _read_idx_header(raw: bytes, expected_magic: int, ndim: int, path: str) -> tuple[int, ...]:
    header_len = 4 * (1 + ndim)
    if len(raw) < header_len:
        raise FormatError(f"{path}: truncated header at byte offset {len(raw)}")
    magic = struct.unpack(">I", raw[:4])[0]
    if magic != expected_magic:
        raise FormatError(
            f"{path}: bad magic 0x{magic:08x} at byte offset 0 (expected 0x{expected_magic:08x})"
        )
    return struct.unpack(f">{ndim}I", raw[4:header_len])


def load_idx_dataset(images_path: str, labels_path: str) -> Batch:
    """Read an IDX image/label file pair into flat [0, 1]-scaled feature vectors.

    Big-endian layout: images carry magic 0x00000803 then count/rows/cols and raw
    pixel bytes; labels carry magic 0x00000801 then count and raw label bytes.
    """
    with open(images_path, "rb") as f:
        raw_images = f.read()
    with open(labels_path, "rb") as f:
        raw_labels = f.read()

    n_images, rows, cols = _read_idx_header(raw_images, IDX_IMAGES_MAGIC, 3, images_path)
    payload = n_images * rows * cols
    if len(raw_images) < 16 + payload:
        raise FormatError(
            f"{images_path}: truncated payload at byte offset {len(raw_images)} "
            f"(expected {16 + payload} bytes)"
        )
    (n_labels,) = _read_idx_header(raw_labels, IDX_LABELS_MAGIC, 1, labels_path)
    if len(raw_labels) < 8 + n_labels:
        raise FormatError(
            f"{labels_path}: truncated payload at byte offset {len(raw_labels)} "
            f"(expected {8 + n_labels} bytes)"
        )
    if n_images != n_labels:
        raise FormatError(
            f"count mismatch: {n_images} images in {images_path} vs {n_labels} labels in {labels_path}"
        )

    pixels = np.frombuffer(raw_images, dtype=np.uint8, count=payload, offset=16)
    features = pixels.reshape(n_images, rows * cols).astype(np.float64) / 255.0
    labels = np.frombuffer(raw_labels, dtype=np.uint8, count=n_labels, offset=8).astype(np.int64)
    return Batch(features, labels)


def load_csv_dataset(path: str) -> Batch:
    """Read a label,feature1,...,featureN CSV into a Batch."""
    try:
        table = np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    if table.size == 0:
        raise DataError(f"{path}: empty dataset")
    if table.shape[1] < 2:
        raise FormatError(f"{path}: rows need a label plus at least one feature")
    return Batch(table[:, 1:], table[:, 0].astype(np.int64))
