"""Line-delimited JSON scoring server over stdin/stdout.

Wraps a scikit-learn estimator (or an explicit linear function) fit behind
a scaler shared between the A and B server instances via a sidecar file.
Incoming rows are in the dataset's original feature space; the server owns
standardization. Margins come from ``decision_function`` when the
estimator has one, probabilities from ``predict_proba``.

One JSON object per line; responses echo the request id; logs go to
stderr only. Protocol violations and scoring failures produce an error
envelope, never a crash.
"""

from __future__ import annotations

import json
import sys
import time
from pathlib import Path

import numpy as np
from sklearn.ensemble import GradientBoostingClassifier, RandomForestClassifier
from sklearn.linear_model import LogisticRegression
from sklearn.neighbors import KNeighborsClassifier
from sklearn.svm import SVC

from .datasets import load_raw, scaler_hash, split_and_scale

ESTIMATORS = {
    "svc": lambda p: SVC(probability=True, random_state=42, **p),
    "rf": lambda p: RandomForestClassifier(random_state=42, **p),
    "gb": lambda p: GradientBoostingClassifier(random_state=42, **p),
    "logreg": lambda p: LogisticRegression(max_iter=5000, **p),
    "knn": lambda p: KNeighborsClassifier(**p),
}


class LinearFunction:
    """Explicit affine scorer used for loopback parity against the audit's
    built-in models: params carry weights/intercepts in standardized space."""

    def __init__(self, params: dict):
        self.weights = np.asarray(params["weights"], dtype=np.float64)
        self.intercepts = np.asarray(
            params.get("intercepts", [0.0] * self.weights.shape[1]), dtype=np.float64
        )
        self.classes_ = np.arange(self.weights.shape[1])

    def decision_function(self, X):
        return X @ self.weights + self.intercepts

    def predict_proba(self, X):
        logits = self.decision_function(X)
        z = logits - logits.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)

    def predict(self, X):
        return np.argmax(self.decision_function(X), axis=1)


class ScoringServer:
    def __init__(self, estimator, mean, scale, class_count, tag):
        self.estimator = estimator
        self.mean = mean
        self.scale = scale
        self.class_count = class_count
        self.tag = tag
        self.has_margin = hasattr(estimator, "decision_function")
        self.has_proba = hasattr(estimator, "predict_proba")

    def _standardize(self, rows):
        X = np.asarray(rows, dtype=np.float64)
        if X.ndim != 2:
            raise ValueError("X must be a list of rows")
        expected = len(self.mean) if self.mean is not None else getattr(
            self.estimator, "n_features_in_", None)
        if expected is None and hasattr(self.estimator, "weights"):
            expected = self.estimator.weights.shape[0]
        if expected is not None and X.shape[1] != expected:
            raise ValueError(f"rows have {X.shape[1]} features, model expects {expected}")
        if self.mean is not None:
            X = (X - self.mean) / self.scale
        return X

    def handle(self, message: dict) -> tuple[dict, bool]:
        """(response, keep_running)."""
        rid = message.get("id")
        op = message.get("op")
        try:
            if op == "capabilities":
                return {
                    "id": rid,
                    "has_decision_function": self.has_margin,
                    "has_predict_proba": self.has_proba,
                    "class_count": self.class_count,
                    "model_tag": self.tag,
                }, True
            if op == "shutdown":
                return {"id": rid, "ok": True}, False
            if op == "predict":
                X = self._standardize(message["X"])
                return {"id": rid, "y": [int(v) for v in self.estimator.predict(X)]}, True
            if op == "margin":
                if not self.has_margin:
                    return {"id": rid, "error": "no decision function"}, True
                X = self._standardize(message["X"])
                M = np.asarray(self.estimator.decision_function(X), dtype=np.float64)
                if M.ndim == 1:
                    rows = [[float(v)] for v in M]
                else:
                    rows = M.tolist()
                return {"id": rid, "Y": rows}, True
            if op == "proba":
                if not self.has_proba:
                    return {"id": rid, "error": "no probability estimates"}, True
                X = self._standardize(message["X"])
                P = np.asarray(self.estimator.predict_proba(X), dtype=np.float64)
                return {"id": rid, "Y": P.tolist()}, True
            return {"id": rid, "error": f"unknown op {op!r}"}, True
        except Exception as exc:  # report, never crash
            return {"id": rid, "error": f"{type(exc).__name__}: {exc}"}, True

    def run(self, stdin=None, stdout=None) -> int:
        stdin = stdin or sys.stdin
        stdout = stdout or sys.stdout
        for line in stdin:
            line = line.strip()
            if not line:
                continue
            try:
                message = json.loads(line)
            except json.JSONDecodeError as exc:
                stdout.write(json.dumps({"id": None, "error": f"malformed request: {exc}"}) + "\n")
                stdout.flush()
                continue
            response, keep_running = self.handle(message)
            stdout.write(json.dumps(response, separators=(",", ":")) + "\n")
            stdout.flush()
            if not keep_running:
                return 0
        return 0


def _wait_for_sidecar(path: str, timeout: float) -> None:
    deadline = time.monotonic() + timeout
    while not Path(path).exists():
        if time.monotonic() >= deadline:
            raise FileNotFoundError(f"scaler sidecar {path!r} not written within {timeout}s")
        time.sleep(0.05)


def build_server(args) -> ScoringServer:
    params = json.loads(args.params) if args.params else {}
    if args.family == "linear":
        fn = LinearFunction(params)
        mean = scale = None
        digest = "none"
        if args.scaler_sidecar and Path(args.scaler_sidecar).exists():
            payload = json.loads(Path(args.scaler_sidecar).read_text(encoding="utf-8"))
            mean = np.asarray(payload["mean"], dtype=np.float64)
            scale = np.asarray(payload["scale"], dtype=np.float64)
            digest = scaler_hash(mean, scale)
        tag = args.tag or f"linear-{args.role}@scaler:{digest}"
        return ScoringServer(fn, mean, scale, fn.weights.shape[1], tag)
    if args.family not in ESTIMATORS:
        raise ValueError(f"unknown family {args.family!r}; choose from {sorted(ESTIMATORS)} or linear")
    if not args.dataset:
        raise ValueError("--dataset is required for estimator families")
    X, y, _, _ = load_raw(args.dataset, args.label_column)
    if args.role == "B" and args.scaler_sidecar:
        _wait_for_sidecar(args.scaler_sidecar, args.sidecar_wait)
    X_train_std, y_train, mean, scale, digest = split_and_scale(
        X, y, args.role, args.scaler_sidecar, args.split_seed, args.test_fraction
    )
    estimator = ESTIMATORS[args.family](params)
    estimator.fit(X_train_std, y_train)
    print(f"bridge: fitted {args.family} role={args.role} scaler={digest}", file=sys.stderr)
    tag = args.tag or f"{args.family}-{args.role}@scaler:{digest}"
    return ScoringServer(estimator, mean, scale, int(len(np.unique(y))), tag)
