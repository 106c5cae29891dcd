"""Fixed-capacity replay memory: reservoir admission, uniform retrieval,
multi-exemplar pairing, and combined-batch composition with provenance."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .stream import AugmentConfig, Batch, augment


class ReplayBuffer:
    """Reservoir-sampled store of past stream items.

    Admission follows algorithm R: the first `capacity` offered items fill the
    store, after which the n-th offer replaces a uniformly random slot with
    probability capacity/n. Every stream item ever offered counts toward
    `seen_count`; retrieved exemplars do not.
    """

    def __init__(self, capacity: int, dim: int, rng: np.random.Generator | int = 0):
        if capacity < 1:
            raise ConfigError(f"capacity must be >= 1, got {capacity}")
        if dim < 1:
            raise ConfigError(f"dim must be >= 1, got {dim}")
        self.capacity = capacity
        self.dim = dim
        self.rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        self.features = np.zeros((capacity, dim))
        self.labels = np.zeros(capacity, dtype=np.int64)
        self.occupancy = 0
        self.seen_count = 0

    def reservoir_update(self, batch: Batch) -> None:
        """Offer each item of the batch, in order, to the reservoir."""
        if batch.dim != self.dim:
            raise ConfigError(f"buffer holds dim {self.dim}, batch has dim {batch.dim}")
        for x, y in zip(batch.features, batch.labels):
            self.seen_count += 1
            if self.occupancy < self.capacity:
                self.features[self.occupancy] = x
                self.labels[self.occupancy] = y
                self.occupancy += 1
            else:
                j = int(self.rng.integers(0, self.seen_count))
                if j < self.capacity:
                    self.features[j] = x
                    self.labels[j] = y

    def random_retrieve(self, count: int) -> Batch:
        """min(count, occupancy) stored items, uniform without replacement.

        Stored contents are untouched; only the generator state advances.
        """
        if count < 0:
            raise ConfigError(f"retrieval count must be >= 0, got {count}")
        k = min(count, self.occupancy)
        if k == 0:
            return Batch.empty(self.dim)
        idx = self.rng.choice(self.occupancy, size=k, replace=False)
        return Batch(self.features[idx].copy(), self.labels[idx].copy())

    def pair_exemplars(self, batch: Batch, m: int) -> Batch:
        """Retrieve m exemplars per input sample, clamped to occupancy."""
        if m < 0:
            raise ConfigError(f"pairing factor must be >= 0, got {m}")
        return self.random_retrieve(m * len(batch))

    def contents(self) -> Batch:
        """The currently stored items (a copy)."""
        if self.occupancy == 0:
            return Batch.empty(self.dim)
        return Batch(self.features[: self.occupancy].copy(), self.labels[: self.occupancy].copy())

    def class_histogram(self, num_classes: int) -> np.ndarray:
        """Stored-item count per class label."""
        return np.bincount(self.labels[: self.occupancy], minlength=num_classes)


@dataclass(frozen=True)
class CombinedBatch:
    """A training step's full batch G_t with per-sample provenance.

    view_pair[i] is the index of sample i's counterpart: an original points at
    its augmented copy and vice versa.
    """

    batch: Batch
    is_augmented: np.ndarray
    from_buffer: np.ndarray
    view_pair: np.ndarray

    @property
    def features(self) -> np.ndarray:
        return self.batch.features

    @property
    def labels(self) -> np.ndarray:
        return self.batch.labels

    def __len__(self) -> int:
        return len(self.batch)


def compose_combined_batch(
    stream_batch: Batch, exemplars: Batch, aug_cfg: AugmentConfig
) -> CombinedBatch:
    """G_t: stream samples, their augmented views, exemplars, and theirs.

    Layout is [X, Aug(X), B, Aug(B)]; augmentation preserves labels, so every
    view pair shares one label.
    """
    nx, nb = len(stream_batch), len(exemplars)
    parts = [stream_batch, augment(stream_batch, aug_cfg)]
    pair = [np.arange(nx) + nx, np.arange(nx)]
    if nb > 0:
        parts += [exemplars, augment(exemplars, aug_cfg)]
        pair += [np.arange(nb) + 2 * nx + nb, np.arange(nb) + 2 * nx]
    return CombinedBatch(
        batch=Batch.concat(parts),
        is_augmented=np.concatenate(
            [np.zeros(nx, bool), np.ones(nx, bool), np.zeros(nb, bool), np.ones(nb, bool)]
        ),
        from_buffer=np.concatenate(
            [np.zeros(2 * nx, bool), np.ones(2 * nb, bool)]
        ),
        view_pair=np.concatenate(pair).astype(np.int64),
    )
