"""Datasets for the logistic-regression harness."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray

    @property
    def m(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def with_bias(self) -> Dataset:
        """Append the all-ones column that carries the bias weight."""
        return Dataset(np.hstack([self.X, np.ones((self.m, 1))]), self.y)

    @property
    def integral(self) -> bool:
        return bool(np.all(np.equal(np.mod(self.X, 1), 0)))


def synthetic_blobs(m: int = 1200, d: int = 50, seed: int = 0, separation: float = 2.5,
                    test_m: int = 400, noise: float = 1.0):
    """Two Gaussian classes at ``+/- separation/2`` along a random unit axis.

    Returns ``(train, test)``; labels are balanced in expectation.
    """
    rng = np.random.default_rng(seed)
    axis = rng.standard_normal(d)
    axis /= np.linalg.norm(axis)
    centre = rng.standard_normal(d) * 0.5

    def draw(n):
        y = rng.integers(0, 2, n)
        X = centre + noise * rng.standard_normal((n, d)) + np.outer(2 * y - 1, axis) * separation / 2
        return Dataset(X, y.astype(np.float64))

    return draw(m), draw(test_m)


def load_csv(path, header: bool = False) -> Dataset:
    """One sample per row: feature columns, then a 0/1 label column."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if header:
        rows = rows[1:]
    arr = np.array([[float(v) for v in row] for row in rows if row], dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] < 2:
        raise ValueError(f"{path}: need at least one feature column and a label column")
    y = arr[:, -1]
    if not np.all(np.isin(y, (0.0, 1.0))):
        raise ValueError(f"{path}: labels must be 0 or 1")
    return Dataset(arr[:, :-1], y)


def write_csv(path, data: Dataset, header: bool = False):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if header:
            writer.writerow([f"x{i}" for i in range(data.d)] + ["y"])
        for row, label in zip(data.X, data.y):
            writer.writerow([repr(float(v)) for v in row] + [int(label)])


def train_test_split(data: Dataset, test_fraction: float, seed: int = 0):
    rng = np.random.default_rng(seed)
    idx = rng.permutation(data.m)
    n_test = int(round(data.m * test_fraction))
    test, train = idx[:n_test], idx[n_test:]
    return Dataset(data.X[train], data.y[train]), Dataset(data.X[test], data.y[test])
