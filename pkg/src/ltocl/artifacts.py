"""Result persistence: CSV and JSON writers, and the readers that re-parse them.

Every file written here can be read back by its paired reader. Floats are
serialized via repr, which round-trips doubles exactly; missing values (the
upper triangle of the accuracy matrix, the stage-1 column of a single-stage
run) are empty cells that come back as NaN.
"""

from __future__ import annotations

import csv
import json
from importlib import resources

import jsonschema
import numpy as np

from .errors import FormatError
from .stream import Batch
from .trainer import StepLog


def _fmt(x: float) -> str:
    if x != x:  # NaN
        return ""
    return repr(float(x))


def _parse_cell(cell: str) -> float:
    return float("nan") if cell == "" else float(cell)


# -- accuracy matrix ---------------------------------------------------------

def write_accuracy_matrix(path: str, matrix: np.ndarray) -> None:
    matrix = np.asarray(matrix, dtype=np.float64)
    t = matrix.shape[0]
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["after_task"] + [f"task_{j}" for j in range(t)])
        for i in range(t):
            w.writerow([i] + [_fmt(matrix[i, j]) for j in range(t)])


def read_accuracy_matrix(path: str) -> np.ndarray:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows or rows[0][:1] != ["after_task"]:
        raise FormatError(f"{path}: not an accuracy-matrix file")
    t = len(rows[0]) - 1
    if len(rows) - 1 != t:
        raise FormatError(f"{path}: {len(rows) - 1} rows for {t} task columns")
    matrix = np.full((t, t), np.nan)
    for i, row in enumerate(rows[1:]):
        if len(row) != t + 1:
            raise FormatError(f"{path}: row {i} has {len(row)} cells, expected {t + 1}")
        matrix[i] = [_parse_cell(c) for c in row[1:]]
    return matrix


# -- loss log ----------------------------------------------------------------

def write_loss_log(path: str, log: list[StepLog]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["step", "stage1_loss", "stage2_loss"])
        for entry in log:
            w.writerow([entry.step, _fmt(entry.stage1_loss), _fmt(entry.stage2_loss)])


def read_loss_log(path: str) -> list[StepLog]:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows or rows[0] != ["step", "stage1_loss", "stage2_loss"]:
        raise FormatError(f"{path}: not a loss-log file")
    return [
        StepLog(int(r[0]), _parse_cell(r[1]), _parse_cell(r[2]))
        for r in rows[1:]
    ]


# -- confusion matrices ------------------------------------------------------

def write_confusion(path: str, confusion: np.ndarray, class_ids: np.ndarray,
                    normalized: bool = False) -> None:
    """Confusion counts restricted to the given class ids; optionally row-stochastic."""
    class_ids = np.asarray(class_ids, dtype=np.int64).ravel()
    sub = np.asarray(confusion)[np.ix_(class_ids, class_ids)].astype(np.float64)
    if normalized:
        sums = sub.sum(axis=1, keepdims=True)
        sub = np.divide(sub, sums, out=np.zeros_like(sub), where=sums > 0)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["true"] + [f"pred_{c}" for c in class_ids])
        for c, row in zip(class_ids, sub):
            w.writerow([c] + ([_fmt(v) for v in row] if normalized else [int(v) for v in row]))


def read_confusion(path: str) -> tuple[np.ndarray, np.ndarray]:
    """Returns (class ids, matrix over those ids)."""
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows or rows[0][:1] != ["true"]:
        raise FormatError(f"{path}: not a confusion-matrix file")
    ids = np.asarray([int(h.removeprefix("pred_")) for h in rows[0][1:]], dtype=np.int64)
    matrix = np.zeros((ids.size, ids.size))
    for i, row in enumerate(rows[1:]):
        if len(row) != ids.size + 1:
            raise FormatError(f"{path}: row {i} has {len(row)} cells, expected {ids.size + 1}")
        matrix[i] = [_parse_cell(c) for c in row[1:]]
    return ids, matrix


# -- buffer snapshot ---------------------------------------------------------

def write_buffer_csv(path: str, contents: Batch) -> None:
    """label,feature1,...,featureN rows, re-readable with load_csv_dataset."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        for y, x in zip(contents.labels, contents.features):
            w.writerow([int(y)] + [repr(float(v)) for v in x])


# -- generic tables (sweep outputs) -----------------------------------------

def write_table(path: str, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if isinstance(v, float) else v for v in row])


def read_table(path: str) -> tuple[list[str], list[dict[str, str]]]:
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None:
            raise FormatError(f"{path}: empty table")
        return list(reader.fieldnames), list(reader)


# -- JSON documents ----------------------------------------------------------

def jsonable(obj):
    """Recursively convert numpy scalars/arrays and NaN to JSON-safe values."""
    if isinstance(obj, dict):
        return {k: jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer, int)) and not isinstance(obj, bool):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return None if x != x else x
    return obj


def write_json(path: str, doc: dict) -> None:
    with open(path, "w") as f:
        json.dump(jsonable(doc), f, indent=2, allow_nan=False)
        f.write("\n")


def read_json(path: str) -> dict:
    with open(path) as f:
        try:
            return json.load(f)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: {exc}") from exc


def summary_schema() -> dict:
    return json.loads(
        resources.files("ltocl").joinpath("schemas/summary.schema.json").read_text()
    )


def validate_summary(doc: dict) -> None:
    """Check a summary document against the bundled schema."""
    jsonschema.validate(jsonable(doc), summary_schema())


def write_summary(path: str, doc: dict) -> None:
    validate_summary(doc)
    write_json(path, doc)


def read_summary(path: str) -> dict:
    doc = read_json(path)
    validate_summary(doc)
    return doc
