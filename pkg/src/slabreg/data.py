"""Dataset container and CSV ingestion.

Labeled files carry a header ``x1,...,xd,y``; unlabeled files ``x1,...,xd``.
Malformed numerics are hard errors with row numbers; silent coercion is how
experiments get corrupted.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class Dataset:
    """Design points for all (k+1)N rows, labels observed on the first N.

    ``hidden_y`` holds the test-block labels when they are known (simulated
    data evaluated in simulation mode); None in deployment.
    """

    x: np.ndarray
    y: np.ndarray
    n_train: int
    k_test: int = 0
    hidden_y: np.ndarray | None = None

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        y = np.asarray(self.y, dtype=float)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        if self.n_train < 1:
            raise DataError("dataset needs n_train >= 1")
        if self.k_test < 0:
            raise DataError("dataset needs k_test >= 0")
        if x.shape[0] != (self.k_test + 1) * self.n_train:
            raise DataError(
                f"dataset has {x.shape[0]} design rows, expected "
                f"(k+1)N = {(self.k_test + 1) * self.n_train}"
            )
        if y.shape != (self.n_train,):
            raise DataError(f"labels must have shape ({self.n_train},), got {y.shape}")
        if self.hidden_y is not None:
            h = np.asarray(self.hidden_y, dtype=float)
            if h.shape != (self.n_test,):
                raise DataError(f"hidden labels must have shape ({self.n_test},), got {h.shape}")
            object.__setattr__(self, "hidden_y", h)

    @property
    def n_test(self) -> int:
        return self.k_test * self.n_train

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    @property
    def train_x(self) -> np.ndarray:
        return self.x[: self.n_train]

    @property
    def test_x(self) -> np.ndarray:
        return self.x[self.n_train :]


def _read_rows(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file, header required") from None
        rows = [row for row in reader if row]
    return [h.strip() for h in header], rows


def _check_header(path, header, labeled: bool):
    cols = header[:-1] if labeled else header
    if labeled and (not header or header[-1] != "y"):
        raise DataError(f"{path}: labeled file must end with a 'y' column, got {header}")
    if not cols or cols != [f"x{i}" for i in range(1, len(cols) + 1)]:
        raise DataError(f"{path}: expected header x1..xd{',y' if labeled else ''}, got {header}")
    return len(cols)


def _parse(path, rows, width):
    out = np.empty((len(rows), width))
    for i, row in enumerate(rows):
        if len(row) != width:
            raise DataError(f"{path}: row {i + 2}: expected {width} fields, got {len(row)}")
        for j, value in enumerate(row):
            try:
                out[i, j] = float(value)
            except ValueError:
                raise DataError(f"{path}: row {i + 2}: malformed number {value!r}") from None
        if not np.all(np.isfinite(out[i])):
            raise DataError(f"{path}: row {i + 2}: non-finite value")
    return out


def load_labeled_csv(path):
    """Read x1..xd,y rows; returns (x, y)."""
    header, rows = _read_rows(path)
    d = _check_header(path, header, labeled=True)
    table = _parse(path, rows, d + 1)
    return table[:, :d], table[:, d]


def load_unlabeled_csv(path):
    """Read x1..xd rows; returns x (possibly with zero rows)."""
    header, rows = _read_rows(path)
    d = _check_header(path, header, labeled=False)
    return _parse(path, rows, d)


def write_labeled_csv(path, x, y):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{i}" for i in range(1, x.shape[1] + 1)] + ["y"])
        for row, label in zip(x, y):
            writer.writerow([repr(float(v)) for v in row] + [repr(float(label))])


def write_unlabeled_csv(path, x):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{i}" for i in range(1, x.shape[1] + 1)])
        for row in x:
            writer.writerow([repr(float(v)) for v in row])


def write_predictions_csv(path, predictions):
    predictions = np.asarray(predictions, dtype=float)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "prediction"])
        for i, p in enumerate(predictions):
            writer.writerow([i, repr(float(p))])
