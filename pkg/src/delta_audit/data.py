"""Dataset ingestion, stratified splitting, and train-set standardization.

Everything operates on plain float64 numpy arrays. Datasets are immutable
after construction and all randomness is driven by explicit integer seeds,
so every operation here is reproducible bit for bit.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

STD_FLOOR = 1e-12

_EMBEDDED_SEED = 20240613


class DataError(ValueError):
    """Malformed dataset, file, or split request."""


def _frozen(values, dtype=None) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Dataset:
    """A fixed feature matrix with contiguous integer class labels.

    ``label_names[c]`` is the original label string for encoded class ``c``
    (encoding order = first appearance), which lets a dataset round-trip
    through CSV without relabelling.
    """

    X: np.ndarray
    y: np.ndarray
    feature_names: tuple[str, ...]
    class_count: int
    label_names: tuple[str, ...] = ()

    def __post_init__(self):
        X = _frozen(self.X, dtype=np.float64)
        y = _frozen(self.y, dtype=np.int64)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        if X.ndim != 2:
            raise DataError(f"X must be 2-d, got shape {X.shape}")
        if y.shape != (X.shape[0],):
            raise DataError("y length does not match number of rows in X")
        if not np.all(np.isfinite(X)):
            i, j = np.argwhere(~np.isfinite(X))[0]
            raise DataError(f"non-finite feature value at row {i}, column {self.feature_names[j]!r}")
        if self.class_count < 2:
            raise DataError(f"need at least 2 classes, got {self.class_count}")
        present = np.unique(y)
        if y.size and (y.min() < 0 or y.max() >= self.class_count):
            raise DataError("labels outside [0, class_count)")
        if present.size != self.class_count:
            missing = sorted(set(range(self.class_count)) - set(present.tolist()))
            raise DataError(f"classes with no samples: {missing}")
        if len(self.feature_names) != X.shape[1]:
            raise DataError("feature_names length does not match feature count")
        if len(set(self.feature_names)) != len(self.feature_names):
            raise DataError("feature_names must be distinct")
        if not self.label_names:
            object.__setattr__(self, "label_names", tuple(str(c) for c in range(self.class_count)))
        else:
            object.__setattr__(self, "label_names", tuple(self.label_names))
        if len(self.label_names) != self.class_count:
            raise DataError("label_names length does not match class_count")

    @property
    def n_samples(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class SplitIndices:
    """Disjoint train/test row indices covering [0, n)."""

    train: tuple[int, ...]
    test: tuple[int, ...]

    def __post_init__(self):
        overlap = set(self.train) & set(self.test)
        if overlap:
            raise DataError(f"train and test overlap: {sorted(overlap)[:5]}")


@dataclass(frozen=True)
class Standardizer:
    """Per-feature affine transform fitted on training rows only.

    ``std`` uses the population convention (divide by n) and is floored at
    ``STD_FLOOR``; floored features are listed in ``constant_features``.
    """

    mean: np.ndarray
    std: np.ndarray
    constant_features: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "mean", _frozen(self.mean, dtype=np.float64))
        object.__setattr__(self, "std", _frozen(self.std, dtype=np.float64))
        if np.any(self.std <= 0):
            raise DataError("standardizer std must be positive")

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.std

    def inverse_transform(self, Z: np.ndarray) -> np.ndarray:
        return np.asarray(Z, dtype=np.float64) * self.std + self.mean


def load_csv(path, label_column: str) -> Dataset:
    """Load a UTF-8 CSV with a header row into a Dataset.

    All columns except ``label_column`` must parse as finite floats
    (``.`` decimal separator, no thousands separators). Labels are
    re-encoded to 0..C-1 in order of first appearance.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"empty CSV: {path}") from None
        if label_column not in header:
            raise DataError(f"label column {label_column!r} not in header {header}")
        label_pos = header.index(label_column)
        feature_names = tuple(name for i, name in enumerate(header) if i != label_pos)
        if len(set(feature_names)) != len(feature_names):
            raise DataError("duplicate feature column names")
        rows: list[list[float]] = []
        labels: list[str] = []
        for row_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataError(f"row {row_no}: expected {len(header)} cells, got {len(row)}")
            values = []
            for i, cell in enumerate(row):
                if i == label_pos:
                    continue
                name = header[i]
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(f"row {row_no}, column {name!r}: non-numeric cell {cell!r}") from None
                if not np.isfinite(v):
                    raise DataError(f"row {row_no}, column {name!r}: non-finite cell {cell!r}")
                values.append(v)
            rows.append(values)
            labels.append(row[label_pos])
    if not rows:
        raise DataError(f"no data rows in {path}")
    encoding: dict[str, int] = {}
    for lab in labels:
        if lab not in encoding:
            encoding[lab] = len(encoding)
    if len(encoding) < 2:
        raise DataError(f"fewer than 2 classes in {path} (found {sorted(encoding)})")
    y = np.array([encoding[lab] for lab in labels], dtype=np.int64)
    label_names = tuple(sorted(encoding, key=encoding.get))
    return Dataset(
        X=np.array(rows, dtype=np.float64),
        y=y,
        feature_names=feature_names,
        class_count=len(encoding),
        label_names=label_names,
    )


def save_csv(ds: Dataset, path, label_column: str = "label") -> None:
    """Write a Dataset back to CSV; floats use shortest round-trip repr."""
    if label_column in ds.feature_names:
        raise DataError(f"label column name {label_column!r} collides with a feature")
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(ds.feature_names) + [label_column])
        for row, label in zip(ds.X, ds.y):
            writer.writerow([repr(float(v)) for v in row] + [ds.label_names[label]])


def stratified_split(ds: Dataset, test_fraction: float, seed: int) -> SplitIndices:
    """Deterministic per-class split keeping the test fraction within one
    sample of ``test_fraction`` in every class."""
    if not 0.0 < test_fraction < 1.0:
        raise DataError(f"test_fraction must be in (0, 1), got {test_fraction}")
    rng = np.random.default_rng(seed)
    train: list[int] = []
    test: list[int] = []
    for cls in range(ds.class_count):
        idx = np.flatnonzero(ds.y == cls)
        if idx.size < 2:
            raise DataError(f"class {cls} has {idx.size} sample(s); need at least 2")
        perm = rng.permutation(idx)
        n_test = int(round(test_fraction * idx.size))
        n_test = min(n_test, idx.size - 1)
        test.extend(int(i) for i in perm[:n_test])
        train.extend(int(i) for i in perm[n_test:])
    if not test:
        raise DataError(f"test_fraction {test_fraction} yields an empty test set")
    return SplitIndices(train=tuple(sorted(train)), test=tuple(sorted(test)))


def fit_standardizer(ds: Dataset, idx: SplitIndices) -> Standardizer:
    """Fit mean/std on the training rows only (population std, floored)."""
    if not idx.train:
        raise DataError("cannot fit standardizer: empty training split")
    rows = ds.X[list(idx.train)]
    mean = rows.mean(axis=0)
    std = rows.std(axis=0)
    constant = tuple(int(j) for j in np.flatnonzero(std < STD_FLOOR))
    std = np.maximum(std, STD_FLOOR)
    return Standardizer(mean=mean, std=std, constant_features=constant)


def _two_class_linear() -> Dataset:
    rng = np.random.default_rng(_EMBEDDED_SEED)
    n_per, d = 30, 6
    X = rng.normal(size=(2 * n_per, d))
    shift = np.array([2.4, -2.0, 1.2, 0.0, 0.0, 0.0])
    X[:n_per] += shift
    X[n_per:] -= shift
    scales = np.array([1.0, 2.0, 0.5, 3.0, 1.0, 1.5])
    offsets = np.array([5.0, -1.0, 0.0, 12.0, 2.5, -4.0])
    X = X * scales + offsets
    y = np.array([0] * n_per + [1] * n_per, dtype=np.int64)
    order = rng.permutation(2 * n_per)
    return Dataset(
        X=X[order],
        y=y[order],
        feature_names=tuple(f"x{j}" for j in range(d)),
        class_count=2,
    )


def _three_class_interactions() -> Dataset:
    rng = np.random.default_rng(_EMBEDDED_SEED + 1)
    n_per, d = 30, 8
    g = rng.normal(size=(3 * n_per, d))
    y = np.repeat(np.arange(3), n_per).astype(np.int64)
    centers = np.array([[2.2, 0.0], [-1.1, 1.9], [-1.1, -1.9]])
    X = g.copy()
    X[:, 0] += centers[y, 0]
    X[:, 1] += centers[y, 1]
    # interaction columns: products of the informative pair and a class-tilted pair
    X[:, 4] = 0.6 * X[:, 0] * X[:, 1] + 0.4 * g[:, 4]
    X[:, 5] = 0.5 * X[:, 2] * X[:, 3] + 0.5 * g[:, 5] + 0.3 * centers[y, 0]
    scales = np.array([1.0, 1.0, 2.0, 0.5, 1.0, 1.0, 3.0, 0.8])
    offsets = np.array([0.0, 1.0, -3.0, 7.0, 0.0, 2.0, -1.0, 0.5])
    X = X * scales + offsets
    order = rng.permutation(3 * n_per)
    return Dataset(
        X=X[order],
        y=y[order],
        feature_names=tuple(f"x{j}" for j in range(d)),
        class_count=3,
    )


EMBEDDED_BUILDERS = {
    "two_class_linear": _two_class_linear,
    "three_class_interactions": _three_class_interactions,
}


def embedded_datasets() -> list[Dataset]:
    """Deterministic synthetic desk-scale datasets, rebuilt on every call."""
    return [build() for build in EMBEDDED_BUILDERS.values()]


def embedded_dataset(name: str) -> Dataset:
    try:
        return EMBEDDED_BUILDERS[name]()
    except KeyError:
        raise DataError(f"unknown embedded dataset {name!r}; available: {sorted(EMBEDDED_BUILDERS)}") from None
