"""Seeded dataset generators, CSV ingestion, and train/test splitting.

Every generator draws each column from its own PCG64 stream keyed by
(seed, column), so adding noise columns never perturbs the draws of the
columns already present. Datasets are immutable once constructed.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

# Stream tags: keep column draws independent from labels/noise/mixing draws.
_COL = 0
_SIGN = 1
_SHUFFLE = 2
_MIX = 3
_TARGET_NOISE = 4
_DUPLICATE = 5

SYNTH_COEFFS = np.array([0.2, 0.3, 0.1, 0.05, 0.5])
SYNTH_THRESHOLD = 7.5


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))


@dataclass(frozen=True)
class FeatureMeta:
    name: str
    ground_truth_importance: float | None
    relevant: bool


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature matrix, targets, and per-feature ground-truth metadata."""

    X: np.ndarray
    y: np.ndarray
    feature_meta: tuple[FeatureMeta, ...]
    task: str  # "classification" | "regression"

    def __post_init__(self):
        X = np.ascontiguousarray(self.X, dtype=np.float64)
        y = np.ascontiguousarray(self.y, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise ValueError(f"X must be a non-empty 2-D matrix, got shape {X.shape}")
        if y.shape != (X.shape[0],):
            raise ValueError(f"y must have shape ({X.shape[0]},), got {y.shape}")
        if len(self.feature_meta) != X.shape[1]:
            raise ValueError("feature_meta length must match the number of columns")
        if self.task not in ("classification", "regression"):
            raise ValueError(f"unknown task {self.task!r}")
        if self.task == "classification" and not np.all((y == 0.0) | (y == 1.0)):
            raise ValueError("classification targets must be 0 or 1")
        X.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "feature_meta", tuple(self.feature_meta))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def ground_truth_importances(self) -> list[float | None]:
        return [m.ground_truth_importance for m in self.feature_meta]


def _meta(names, importances, relevant) -> tuple[FeatureMeta, ...]:
    return tuple(FeatureMeta(n, imp, rel) for n, imp, rel in zip(names, importances, relevant))


def synthetic_targets(X) -> tuple[np.ndarray, np.ndarray]:
    """Weighted sum of the first five columns and its strict-threshold label.

    z = 0.2*x1 + 0.3*x2 + 0.1*x3 + 0.05*x4 + 0.5*x5;  y = 1 iff z > 7.5.
    """
    X = np.asarray(X, dtype=np.float64)
    z = X[:, :5] @ SYNTH_COEFFS
    return z, (z > SYNTH_THRESHOLD).astype(np.float64)


def gen_synthetic(n: int, noise_features: int, seed: int) -> Dataset:
    """Binary classification with 5 relevant columns on U[4, 10] and
    ``noise_features`` irrelevant columns on U[0, 1]."""
    if n < 1 or noise_features < 0:
        raise ValueError("need n >= 1 and noise_features >= 0")
    d = 5 + noise_features
    cols = [_rng(seed, _COL, i).uniform(4.0, 10.0, size=n) if i < 5
            else _rng(seed, _COL, i).uniform(0.0, 1.0, size=n)
            for i in range(d)]
    X = np.column_stack(cols)
    _, y = synthetic_targets(X)
    importances = list(SYNTH_COEFFS) + [0.0] * noise_features
    relevant = [True] * 5 + [False] * noise_features
    names = [f"f{i + 1}" for i in range(d)]
    return Dataset(X, y, _meta(names, importances, relevant), "classification")


def friedman1_targets(X) -> np.ndarray:
    """Noise-free response 10*sin(pi*x1*x2) + 20*(x3-0.5)^2 + 10*x4 + 5*x5."""
    X = np.asarray(X, dtype=np.float64)
    return (10.0 * np.sin(np.pi * X[:, 0] * X[:, 1])
            + 20.0 * (X[:, 2] - 0.5) ** 2 + 10.0 * X[:, 3] + 5.0 * X[:, 4])


def gen_friedman1(n: int, sigma: float, seed: int) -> Dataset:
    """Ten U[0, 1] columns; only the first five enter the response.

    Relevance is marked as a binary flag (importance 1 vs 0): the sin and
    quadratic terms do not induce a meaningful scalar ordering among the
    relevant features.
    """
    if n < 1 or sigma < 0:
        raise ValueError("need n >= 1 and sigma >= 0")
    X = np.column_stack([_rng(seed, _COL, i).uniform(0.0, 1.0, size=n) for i in range(10)])
    y = friedman1_targets(X)
    if sigma > 0:
        y = y + _rng(seed, _TARGET_NOISE, 0).normal(0.0, sigma, size=n)
    importances = [1.0] * 5 + [0.0] * 5
    relevant = [True] * 5 + [False] * 5
    names = [f"f{i + 1}" for i in range(10)]
    return Dataset(X, y, _meta(names, importances, relevant), "regression")


def friedman2_targets(X) -> np.ndarray:
    """Noise-free response sqrt(x0^2 + (x1*x2 - 1/(x1*x3))^2)."""
    X = np.asarray(X, dtype=np.float64)
    return np.sqrt(X[:, 0] ** 2 + (X[:, 1] * X[:, 2] - 1.0 / (X[:, 1] * X[:, 3])) ** 2)


def gen_friedman2(n: int, sigma: float, seed: int) -> Dataset:
    """Four-feature regression with multiplicative interactions."""
    if n < 1 or sigma < 0:
        raise ValueError("need n >= 1 and sigma >= 0")
    ranges = [(0.0, 100.0), (40.0 * np.pi, 560.0 * np.pi), (0.0, 1.0), (1.0, 11.0)]
    X = np.column_stack([_rng(seed, _COL, i).uniform(lo, hi, size=n)
                         for i, (lo, hi) in enumerate(ranges)])
    y = friedman2_targets(X)
    if sigma > 0:
        y = y + _rng(seed, _TARGET_NOISE, 0).normal(0.0, sigma, size=n)
    names = [f"f{i + 1}" for i in range(4)]
    return Dataset(X, y, _meta(names, [1.0] * 4, [True] * 4), "regression")


def gen_classification(n: int, d: int, n_informative: int, n_redundant: int,
                       n_duplicate: int, seed: int) -> Dataset:
    """Balanced binary classification with informative Gaussian-cluster
    columns, random linear combinations of them, exact duplicates, and
    standard-Gaussian noise columns, in that column order.

    Each informative column separates the class means by exactly 1.0 with a
    seeded random sign.
    """
    if n < 2 or n_informative < 1:
        raise ValueError("need n >= 2 and n_informative >= 1")
    if n_informative + n_redundant + n_duplicate > d:
        raise ValueError("n_informative + n_redundant + n_duplicate must be <= d")

    y = np.zeros(n)
    y[: n // 2] = 1.0
    _rng(seed, _SHUFFLE, 0).shuffle(y)

    columns = []
    for j in range(n_informative):
        sign = 1.0 if _rng(seed, _SIGN, j).random() < 0.5 else -1.0
        centers = np.where(y == 1.0, 0.5 * sign, -0.5 * sign)
        columns.append(_rng(seed, _COL, j).standard_normal(n) + centers)
    informative = np.column_stack(columns)

    for j in range(n_redundant):
        mix = _rng(seed, _MIX, j).uniform(-1.0, 1.0, size=n_informative)
        columns.append(informative @ mix)
    dup_sources = []
    for j in range(n_duplicate):
        src = int(_rng(seed, _DUPLICATE, j).integers(0, n_informative))
        dup_sources.append(src)
        columns.append(informative[:, src].copy())
    for j in range(d - len(columns)):
        columns.append(_rng(seed, _COL, n_informative + n_redundant + n_duplicate + j).standard_normal(n))

    X = np.column_stack(columns)
    importances = [1.0] * n_informative + [0.0] * (d - n_informative)
    relevant = [True] * n_informative + [False] * (d - n_informative)
    names = [f"f{i + 1}" for i in range(d)]
    return Dataset(X, y, _meta(names, importances, relevant), "classification")


def augment_random_features(ds: Dataset, k: int, low: float, high: float,
                            seed: int) -> Dataset:
    """Append ``k`` irrelevant U[low, high] columns; original data untouched."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not low < high:
        raise ValueError("need low < high")
    extra = np.column_stack([_rng(seed, _COL, j).uniform(low, high, size=ds.n)
                             for j in range(k)])
    X = np.hstack([ds.X, extra])
    meta = list(ds.feature_meta) + [FeatureMeta(f"rand{j + 1}", 0.0, False) for j in range(k)]
    return Dataset(X, ds.y.copy(), tuple(meta), ds.task)


def save_csv(ds: Dataset, path) -> None:
    """Write the dataset as UTF-8 CSV: feature columns then a final "y"."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([m.name for m in ds.feature_meta] + ["y"])
        for i in range(ds.n):
            writer.writerow([str(v) for v in ds.X[i]] + [str(ds.y[i])])


def load_csv(path) -> Dataset:
    """Read a dataset written by ``save_csv`` (or any CSV with a trailing
    "y" target column). The task is classification iff all targets are 0/1;
    ground-truth metadata is not recoverable from a CSV."""
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        if len(header) < 2 or header[-1] != "y":
            raise ValueError(f"{path}: expected a header ending with target column 'y'")
        names = header[:-1]
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ValueError(f"{path}: row {line_no} has {len(row)} cells, expected {len(header)}")
            parsed = []
            for name, cell in zip(header, row):
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise ValueError(f"{path}: non-numeric cell at row {line_no}, column {name}") from None
            rows.append(parsed)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    data = np.asarray(rows)
    X, y = data[:, :-1], data[:, -1]
    task = "classification" if np.all((y == 0.0) | (y == 1.0)) else "regression"
    meta = tuple(FeatureMeta(n, None, False) for n in names)
    return Dataset(X, y, meta, task)


def write_sidecar(path, generator: str, params: dict, seed: int, ds: Dataset) -> None:
    """JSON sidecar recording how a dataset was generated and its ground truth."""
    payload = {
        "generator": generator,
        "params": params,
        "seed": seed,
        "ground_truth_importance": [m.ground_truth_importance for m in ds.feature_meta],
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_sidecar(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def split(ds: Dataset, train_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Seeded shuffle-then-split; the train side gets ceil(n * fraction) rows."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must be in (0, 1)")
    if ds.n < 2:
        raise ValueError("need at least 2 rows to split")
    n_train = math.ceil(ds.n * train_fraction)
    if n_train == 0 or n_train == ds.n:
        raise ValueError(f"degenerate split: {n_train}/{ds.n - n_train} rows")
    perm = _rng(seed, _SHUFFLE, 0).permutation(ds.n)
    tr, te = perm[:n_train], perm[n_train:]
    train = Dataset(ds.X[tr], ds.y[tr], ds.feature_meta, ds.task)
    test = Dataset(ds.X[te], ds.y[te], ds.feature_meta, ds.task)
    return train, test
