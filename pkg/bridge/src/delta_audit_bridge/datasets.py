"""Dataset access for the bridge server: named scikit-learn datasets or a
CSV file, with the stratified split and scaler conventions the audit
expects (split seed 42, scaler fit on training rows only)."""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np
from sklearn.datasets import load_breast_cancer, load_digits, load_wine
from sklearn.model_selection import train_test_split
from sklearn.preprocessing import StandardScaler

NAMED_LOADERS = {
    "breast_cancer": load_breast_cancer,
    "wine": load_wine,
    "digits": load_digits,
}


def load_raw(source: str, label_column: str = "label"):
    """(X, y, feature_names, label_names) from a named dataset or CSV path."""
    if source in NAMED_LOADERS:
        bunch = NAMED_LOADERS[source]()
        X = np.asarray(bunch.data, dtype=np.float64)
        y = np.asarray(bunch.target, dtype=np.int64)
        names = [str(n) for n in getattr(bunch, "feature_names", range(X.shape[1]))]
        labels = [str(t) for t in getattr(bunch, "target_names", sorted(set(y.tolist())))]
        return X, y, names, labels
    path = Path(source)
    if not path.exists():
        raise FileNotFoundError(f"dataset {source!r} is neither a known name nor a file")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        label_pos = header.index(label_column)
        rows, labels = [], []
        for row in reader:
            labels.append(row[label_pos])
            rows.append([float(v) for i, v in enumerate(row) if i != label_pos])
    names = [n for i, n in enumerate(header) if i != label_pos]
    encoding: dict[str, int] = {}
    for lab in labels:
        encoding.setdefault(lab, len(encoding))
    y = np.array([encoding[lab] for lab in labels], dtype=np.int64)
    label_names = sorted(encoding, key=encoding.get)
    return np.array(rows, dtype=np.float64), y, names, label_names


def split_and_scale(X, y, role: str, sidecar: str | None, split_seed: int = 42,
                    test_fraction: float = 0.2):
    """Stratified split plus a scaler shared across the A and B servers.

    Role A fits the scaler on its training rows and writes the sidecar;
    role B loads the sidecar so both servers standardize identically.
    Returns (X_train_std, y_train, scaler_mean, scaler_scale, scaler_hash).
    """
    X_train, _, y_train, _ = train_test_split(
        X, y, test_size=test_fraction, random_state=split_seed, stratify=y
    )
    if role == "B" and sidecar:
        payload = json.loads(Path(sidecar).read_text(encoding="utf-8"))
        mean = np.asarray(payload["mean"], dtype=np.float64)
        scale = np.asarray(payload["scale"], dtype=np.float64)
    else:
        scaler = StandardScaler().fit(X_train)
        mean = np.asarray(scaler.mean_, dtype=np.float64)
        scale = np.asarray(scaler.scale_, dtype=np.float64)
    digest = scaler_hash(mean, scale)
    if role == "A" and sidecar:
        Path(sidecar).write_text(
            json.dumps({"mean": mean.tolist(), "scale": scale.tolist(), "hash": digest}),
            encoding="utf-8",
        )
    X_train_std = (X_train - mean) / scale
    return X_train_std, y_train, mean, scale, digest


def scaler_hash(mean: np.ndarray, scale: np.ndarray) -> str:
    blob = json.dumps({"mean": mean.tolist(), "scale": scale.tolist()}, sort_keys=True)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:12]


def export_csv(source: str, out_path: str, label_column: str = "label") -> int:
    """Dump a named dataset (or re-encode a CSV) for the audit client."""
    X, y, names, label_names = load_raw(source, label_column)
    out = Path(out_path)
    with out.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(names + [label_column])
        for row, label in zip(X, y):
            writer.writerow([repr(float(v)) for v in row] + [label_names[label]])
    return X.shape[0]
