"""Occlusion attributions in standardized space.

A feature's attribution is the drop in the anchored score when that feature
is clamped to a training-set baseline: phi_j(x) = f(x) - f(x with x_j <- b_j).
Attribution matrices for two model versions, produced with one shared
baseline and one shared anchor vector, difference into a delta matrix that
the metric suite consumes.

Each occlusion run costs exactly n * (d + 1) score evaluations per model:
one unclamped batch plus one batch per feature column.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scoring import ScoreModel, anchored_score

GROUP_EPS = 1e-12

BASELINE_KINDS = ("mean", "median", "averaged")


class ExplainerError(ValueError):
    """Baseline/attribution misuse or provenance mismatch."""


@dataclass(frozen=True)
class Baseline:
    kind: str
    values: np.ndarray

    def __post_init__(self):
        if self.kind not in BASELINE_KINDS:
            raise ExplainerError(f"baseline kind must be one of {BASELINE_KINDS}, got {self.kind!r}")
        values = np.array(self.values, dtype=np.float64, copy=True)
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        if not np.all(np.isfinite(values)):
            raise ExplainerError("baseline values must be finite")


@dataclass(frozen=True)
class AttributionMatrix:
    """Per-sample, per-feature occlusion attributions for one model."""

    values: np.ndarray
    baseline_kind: str
    anchors: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64, copy=True)
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        anchors = np.array(self.anchors, dtype=np.int64, copy=True)
        anchors.flags.writeable = False
        object.__setattr__(self, "anchors", anchors)
        if values.ndim != 2 or anchors.shape != (values.shape[0],):
            raise ExplainerError("attribution matrix must be n x d with one anchor per row")
        if not np.all(np.isfinite(values)):
            raise ExplainerError("attributions must be finite")


@dataclass(frozen=True)
class DeltaMatrix:
    """Elementwise difference of B's and A's attribution matrices."""

    values: np.ndarray
    baseline_kind: str | None = None
    anchors: np.ndarray | None = None
    attr_a: AttributionMatrix | None = None
    attr_b: AttributionMatrix | None = None

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64, copy=True)
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        if values.ndim != 2:
            raise ExplainerError("delta matrix must be 2-d")


def _lower_median(column: np.ndarray) -> float:
    ordered = np.sort(column)
    return float(ordered[(ordered.size - 1) // 2])


def make_baseline(X_train_std: np.ndarray, kind: str) -> Baseline:
    """Column means, lower medians, or their elementwise average."""
    X = np.asarray(X_train_std, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ExplainerError("need a non-empty 2-d training matrix")
    if kind == "mean":
        values = X.mean(axis=0)
    elif kind == "median":
        values = np.array([_lower_median(X[:, j]) for j in range(X.shape[1])])
    elif kind == "averaged":
        medians = np.array([_lower_median(X[:, j]) for j in range(X.shape[1])])
        values = (X.mean(axis=0) + medians) / 2.0
    else:
        raise ExplainerError(f"baseline kind must be one of {BASELINE_KINDS}, got {kind!r}")
    return Baseline(kind=kind, values=values)


def occlusion_attributions(
    model: ScoreModel,
    X: np.ndarray,
    anchors: np.ndarray,
    baseline: Baseline,
) -> AttributionMatrix:
    X = np.asarray(X, dtype=np.float64)
    n, d = X.shape
    if baseline.values.shape != (d,):
        raise ExplainerError(f"baseline has {baseline.values.shape[0]} entries, X has {d} features")
    full = anchored_score(model, X, anchors).values
    phi = np.empty((n, d))
    for j in range(d):
        clamped = X.copy()
        clamped[:, j] = baseline.values[j]
        try:
            scores = anchored_score(model, clamped, anchors).values
        except Exception as exc:
            raise ExplainerError(f"scoring failed while occluding feature {j}") from exc
        phi[:, j] = full - scores
    return AttributionMatrix(values=phi, baseline_kind=baseline.kind, anchors=anchors)


def delta_attributions(attr_a: AttributionMatrix, attr_b: AttributionMatrix) -> DeltaMatrix:
    if attr_a.values.shape != attr_b.values.shape:
        raise ExplainerError("attribution matrices differ in shape")
    if attr_a.baseline_kind != attr_b.baseline_kind:
        raise ExplainerError(
            f"baseline mismatch: {attr_a.baseline_kind!r} vs {attr_b.baseline_kind!r}"
        )
    if not np.array_equal(attr_a.anchors, attr_b.anchors):
        raise ExplainerError("anchor mismatch between attribution matrices")
    return DeltaMatrix(
        values=attr_b.values - attr_a.values,
        baseline_kind=attr_a.baseline_kind,
        anchors=attr_a.anchors,
        attr_a=attr_a,
        attr_b=attr_b,
    )


def top_k_indices(row_magnitudes: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k largest magnitudes; ties go to the lower index."""
    order = np.argsort(-row_magnitudes, kind="stable")
    return order[: min(k, row_magnitudes.size)]


def grouped_occlusion_ratio(
    model_a: ScoreModel,
    model_b: ScoreModel,
    X: np.ndarray,
    anchors: np.ndarray,
    baseline: Baseline,
    delta: DeltaMatrix,
    k: int = 2,
    mode: str = "scalar",
) -> float:
    """Interaction stress test: jointly clamp each sample's top-k features
    (ranked by B's attribution magnitudes) and compare the per-feature delta
    mass against the delta of the joint clamp.

    ``scalar`` divides by |g_B - g_A| where g is the joint-clamp score drop;
    ``revector`` divides by the L1 norm of the delta attributions recomputed
    at the jointly clamped input.
    """
    X = np.asarray(X, dtype=np.float64)
    n, d = X.shape
    if k < 1 or k > d:
        raise ExplainerError(f"group size k={k} outside [1, {d}]")
    if mode not in ("scalar", "revector"):
        raise ExplainerError(f"group mode must be scalar|revector, got {mode!r}")
    if delta.attr_b is None:
        raise ExplainerError("delta matrix lacks its parent attributions; build it via delta_attributions")
    groups = [top_k_indices(np.abs(delta.attr_b.values[i]), k) for i in range(n)]
    clamped = X.copy()
    for i, grp in enumerate(groups):
        clamped[i, grp] = baseline.values[grp]
    numer = np.abs(delta.values).sum(axis=1)
    if mode == "scalar":
        full_a = anchored_score(model_a, X, anchors).values
        full_b = anchored_score(model_b, X, anchors).values
        drop_a = full_a - anchored_score(model_a, clamped, anchors).values
        drop_b = full_b - anchored_score(model_b, clamped, anchors).values
        denom = np.abs(drop_b - drop_a)
    else:
        attr_a = occlusion_attributions(model_a, clamped, anchors, baseline)
        attr_b = occlusion_attributions(model_b, clamped, anchors, baseline)
        denom = np.abs(attr_b.values - attr_a.values).sum(axis=1)
    ratios = numer / (denom + GROUP_EPS)
    return math.fsum(ratios) / n


def make_delta_closure(model_a: ScoreModel, model_b: ScoreModel, anchors: np.ndarray, baseline: Baseline):
    """Closure recomputing the delta attribution matrix at arbitrary inputs
    with the anchors and baseline held fixed (used by the stability metric)."""

    def compute(X: np.ndarray) -> np.ndarray:
        attr_a = occlusion_attributions(model_a, X, anchors, baseline)
        attr_b = occlusion_attributions(model_b, X, anchors, baseline)
        return attr_b.values - attr_a.values

    return compute
