"""Training objectives and the running class prior they share.

Stage one pulls same-class projections together with a supervised contrastive
loss. Stage two trains the classifier with a prior-adjusted softmax loss that
equalizes gradient pressure between frequent and rare classes. Both losses
return (scalar, analytic gradient); correctness is checked against finite
differences elsewhere.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import ConfigError, DataError, DegenerateBatchError, LabelError
from .numeric import as_matrix


class LossResult(NamedTuple):
    """A finite loss value and its gradient with respect to the loss input."""

    value: float
    grad: np.ndarray


class ClassPrior:
    """Running label-frequency estimate over the classes seen so far.

    The seen set only ever grows; the counts can be reset at scope boundaries
    (task or batch) without forgetting which classes exist. The prior is the
    plain count fraction while every seen class has a positive count, and
    switches to add-one smoothing when some seen class has none, so no seen
    class ever gets probability zero.
    """

    def __init__(self, num_classes: int):
        if num_classes < 1:
            raise ConfigError(f"num_classes must be >= 1, got {num_classes}")
        self.num_classes = num_classes
        self.counts = np.zeros(num_classes, dtype=np.int64)
        self.seen = np.zeros(num_classes, dtype=bool)

    def update(self, labels: np.ndarray) -> None:
        labels = np.asarray(labels, dtype=np.int64).ravel()
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            bad = labels[(labels < 0) | (labels >= self.num_classes)][0]
            raise LabelError(f"label {bad} outside [0, {self.num_classes})")
        np.add.at(self.counts, labels, 1)
        self.seen[labels] = True

    def reset_counts(self) -> None:
        """Zero the counts for a new scope; the seen set persists."""
        self.counts[:] = 0

    def seen_classes(self) -> np.ndarray:
        return np.flatnonzero(self.seen)

    @property
    def num_seen(self) -> int:
        return int(self.seen.sum())

    def prior_vector(self) -> np.ndarray:
        """Probability over all classes; zero outside the seen set."""
        seen = self.seen_classes()
        if seen.size == 0:
            raise DataError("prior requested before any class was seen")
        c = self.counts[seen].astype(np.float64)
        if np.all(c > 0):
            p_seen = c / c.sum()
        else:
            p_seen = (c + 1.0) / (c.sum() + seen.size)
        p = np.zeros(self.num_classes)
        p[seen] = p_seen
        return p


def supcon_loss(
    projections: np.ndarray, labels: np.ndarray, tau: float = 0.09
) -> LossResult:
    """Supervised contrastive loss over a batch of projections.

    Positives of an anchor are every other sample with the same label; the
    denominator runs over all other samples. Anchors with no positive
    contribute nothing, and the loss averages over the anchors that do.
    Returns the loss and its gradient with respect to the projections.
    """
    if tau <= 0:
        raise ConfigError(f"temperature must be positive, got {tau}")
    z = as_matrix(projections)
    labels = np.asarray(labels, dtype=np.int64).ravel()
    n = z.shape[0]
    if n != labels.shape[0]:
        raise DataError(f"{n} projections but {labels.shape[0]} labels")
    if n < 2:
        raise DegenerateBatchError(f"contrastive loss needs at least 2 samples, got {n}")

    sim = z @ z.T / tau
    np.fill_diagonal(sim, -np.inf)  # an anchor is never its own positive or negative
    row_max = sim.max(axis=1, keepdims=True)
    lse = row_max[:, 0] + np.log(np.exp(sim - row_max).sum(axis=1))

    pos = labels[:, None] == labels[None, :]
    np.fill_diagonal(pos, False)
    pos_counts = pos.sum(axis=1)
    contributing = pos_counts > 0
    n_c = int(contributing.sum())
    if n_c == 0:
        return LossResult(0.0, np.zeros_like(z))

    # per-anchor: -(1/|P|) sum_p (sim_jp - lse_j)
    pos_sim_sum = np.where(pos, sim, 0.0).sum(axis=1)
    per_anchor = np.where(contributing, -(pos_sim_sum / np.maximum(pos_counts, 1)) + lse, 0.0)
    loss = float(per_anchor.sum() / n_c)

    q = np.exp(sim - lse[:, None])  # softmax over the anchor's comparison set
    coeff = q - pos / np.maximum(pos_counts, 1)[:, None]
    coeff[~contributing] = 0.0
    grad = (coeff + coeff.T) @ z / (tau * n_c)
    return LossResult(loss, grad)


def equalization_loss(
    logits: np.ndarray, labels: np.ndarray, prior: ClassPrior
) -> LossResult:
    """Softmax cross-entropy over seen classes with logits shifted by log prior.

    Adding log P(k) to logit k before the softmax scales each class's gradient
    by its frequency, so head classes stop drowning out the tail. Columns for
    never-seen classes are excluded outright.
    """
    logits = as_matrix(logits)
    labels = np.asarray(labels, dtype=np.int64).ravel()
    b = logits.shape[0]
    if b == 0:
        raise DataError("equalization loss needs at least one sample")
    if b != labels.shape[0]:
        raise DataError(f"{b} logit rows but {labels.shape[0]} labels")
    if logits.shape[1] != prior.num_classes:
        raise ConfigError(
            f"logits have {logits.shape[1]} columns, prior tracks {prior.num_classes} classes"
        )

    seen = prior.seen_classes()
    seen_pos = -np.ones(prior.num_classes, dtype=np.int64)
    seen_pos[seen] = np.arange(seen.size)
    if np.any(seen_pos[labels] < 0):
        bad = labels[seen_pos[labels] < 0][0]
        raise LabelError(f"label {bad} not in the seen set {seen.tolist()}")

    adjusted = logits[:, seen] + np.log(prior.prior_vector()[seen])
    row_max = adjusted.max(axis=1, keepdims=True)
    lse = row_max[:, 0] + np.log(np.exp(adjusted - row_max).sum(axis=1))
    target = adjusted[np.arange(b), seen_pos[labels]]
    loss = float(np.mean(lse - target))

    soft = np.exp(adjusted - lse[:, None])
    soft[np.arange(b), seen_pos[labels]] -= 1.0
    grad = np.zeros_like(logits)
    grad[:, seen] = soft / b
    return LossResult(loss, grad)


def cross_entropy_loss(
    logits: np.ndarray, labels: np.ndarray, seen: np.ndarray | None = None
) -> LossResult:
    """Plain softmax cross-entropy, optionally restricted to the seen classes.

    The unadjusted counterpart of the equalization loss; with a uniform prior
    the two coincide.
    """
    logits = as_matrix(logits)
    labels = np.asarray(labels, dtype=np.int64).ravel()
    b = logits.shape[0]
    if b == 0:
        raise DataError("cross-entropy needs at least one sample")
    if b != labels.shape[0]:
        raise DataError(f"{b} logit rows but {labels.shape[0]} labels")

    if seen is None:
        seen = np.arange(logits.shape[1])
    else:
        seen = np.asarray(seen).ravel()
        if seen.dtype == bool:  # accept a mask as well as an index list
            seen = np.flatnonzero(seen)
        seen = seen.astype(np.int64)
    seen_pos = -np.ones(logits.shape[1], dtype=np.int64)
    seen_pos[seen] = np.arange(seen.size)
    if np.any(seen_pos[labels] < 0):
        bad = labels[seen_pos[labels] < 0][0]
        raise LabelError(f"label {bad} not in the seen set {seen.tolist()}")

    restricted = logits[:, seen]
    row_max = restricted.max(axis=1, keepdims=True)
    lse = row_max[:, 0] + np.log(np.exp(restricted - row_max).sum(axis=1))
    target = restricted[np.arange(b), seen_pos[labels]]
    loss = float(np.mean(lse - target))

    soft = np.exp(restricted - lse[:, None])
    soft[np.arange(b), seen_pos[labels]] -= 1.0
    grad = np.zeros_like(logits)
    grad[:, seen] = soft / b
    return LossResult(loss, grad)
