"""Class-incremental evaluation: restricted-argmax prediction, the accuracy
matrix and its summary statistics, and head/median/tail group breakdowns."""

from __future__ import annotations

import numpy as np

from .errors import DataError
from .stream import Batch


def predict(model, features: np.ndarray, seen: np.ndarray) -> np.ndarray:
    """Argmax over the seen classes only; ties go to the lowest class id."""
    seen = np.asarray(seen, dtype=np.int64).ravel()
    if seen.size == 0:
        raise DataError("cannot predict before any class was seen")
    e, _ = model.encode(features)
    logits = model.classify(e)
    restricted = logits[:, np.sort(seen)]
    return np.sort(seen)[np.argmax(restricted, axis=1)]


def accuracy(model, batch: Batch, seen: np.ndarray) -> float:
    if len(batch) == 0:
        raise DataError("cannot score an empty batch")
    return float(np.mean(predict(model, batch.features, seen) == batch.labels))


def per_class_accuracy(predictions: np.ndarray, labels: np.ndarray, num_classes: int) -> np.ndarray:
    """Accuracy per true class; NaN for classes absent from the labels."""
    predictions = np.asarray(predictions, dtype=np.int64).ravel()
    labels = np.asarray(labels, dtype=np.int64).ravel()
    out = np.full(num_classes, np.nan)
    for c in range(num_classes):
        mask = labels == c
        if mask.any():
            out[c] = float(np.mean(predictions[mask] == c))
    return out


def confusion_matrix(predictions: np.ndarray, labels: np.ndarray, num_classes: int) -> np.ndarray:
    """Counts indexed [true, predicted]."""
    predictions = np.asarray(predictions, dtype=np.int64).ravel()
    labels = np.asarray(labels, dtype=np.int64).ravel()
    if predictions.shape != labels.shape:
        raise DataError(f"{predictions.size} predictions but {labels.size} labels")
    m = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(m, (labels, predictions), 1)
    return m


def _check_square(matrix: np.ndarray) -> np.ndarray:
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1] or matrix.shape[0] == 0:
        raise DataError(f"need a square non-empty accuracy matrix, got shape {matrix.shape}")
    return matrix


def average_accuracy(matrix: np.ndarray) -> float:
    """Mean of the final row: accuracy over all tasks after the last one."""
    matrix = _check_square(matrix)
    if np.isnan(matrix[-1, :]).any():
        raise DataError("final accuracy-matrix row is incomplete")
    return float(np.mean(matrix[-1, :]))


def forgetting(matrix: np.ndarray) -> float:
    """Average drop from each task's peak accuracy to its final one.

    For task j < T the drop is the column-j maximum (the final row included,
    so a drop is never negative) minus the final row's entry, averaged over
    those tasks. Undefined for a single task.
    """
    matrix = _check_square(matrix)
    t = matrix.shape[0]
    if t < 2:
        raise DataError("forgetting needs at least two tasks")
    if np.isnan(matrix[np.tril_indices(t)]).any():
        raise DataError("accuracy matrix has unfilled lower-triangular entries")
    drops = [matrix[j:t, j].max() - matrix[t - 1, j] for j in range(t - 1)]
    return float(np.mean(drops))


def group_thirds(class_counts: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Split class ids into head/median/tail thirds by descending training count.

    Ties break toward the lower class id staying in the more frequent group.
    With fewer than three classes the trailing groups come back empty.
    """
    class_counts = np.asarray(class_counts, dtype=np.int64).ravel()
    order = sorted(range(class_counts.size), key=lambda c: (-class_counts[c], c))
    head, median, tail = np.array_split(np.asarray(order, dtype=np.int64), 3)
    return head, median, tail


def group_accuracy(per_class: np.ndarray, group: np.ndarray) -> float:
    """Mean per-class accuracy over a group; NaN when the group is empty."""
    group = np.asarray(group, dtype=np.int64).ravel()
    if group.size == 0:
        return float("nan")
    vals = np.asarray(per_class, dtype=np.float64)[group]
    vals = vals[~np.isnan(vals)]
    if vals.size == 0:
        return float("nan")
    return float(np.mean(vals))


def evaluate(model, batch: Batch, seen: np.ndarray, num_classes: int) -> tuple[float, np.ndarray]:
    """Accuracy and the [true, predicted] confusion counts on one test batch."""
    if len(batch) == 0:
        raise DataError("cannot score an empty batch")
    preds = predict(model, batch.features, seen)
    conf = confusion_matrix(preds, batch.labels, num_classes)
    return float(np.mean(preds == batch.labels)), conf


def headtail_breakdown(confusion: np.ndarray, class_counts: np.ndarray) -> dict[str, float]:
    """Head/median/tail group accuracies from a confusion matrix.

    Groups come from the training counts; per-class accuracy is the confusion
    diagonal over the row sum, skipping classes with no test rows.
    """
    confusion = np.asarray(confusion, dtype=np.float64)
    row_sums = confusion.sum(axis=1)
    per_class = np.full(confusion.shape[0], np.nan)
    present = row_sums > 0
    per_class[present] = np.diag(confusion)[present] / row_sums[present]
    head, median, tail = group_thirds(class_counts)
    return {
        "head": group_accuracy(per_class, head),
        "median": group_accuracy(per_class, median),
        "tail": group_accuracy(per_class, tail),
    }
