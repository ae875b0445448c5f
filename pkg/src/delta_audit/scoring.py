"""Uniform behavioural contract over built-in and external models.

A :class:`ScoreModel` exposes class prediction plus a scalar anchored score
f(x): the margin of a fixed reference class when the model has a decision
function, otherwise the (clamped) log-odds of that class. The reference
class for every sample is fixed once per audit, from the updated model's
predictions by default, and reused for both versions and every occlusion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import learners

LOG_ODDS_EPS = 1e-9


class ScoringError(ValueError):
    """Capability misuse or mismatched anchoring inputs."""


@dataclass(frozen=True)
class AnchoredScore:
    """Per-sample anchor class and the scalar score of that class."""

    anchor_class: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if self.anchor_class.shape != self.values.shape:
            raise ScoringError("anchor_class and values must align")
        if not np.all(np.isfinite(self.values)):
            raise ScoringError("anchored scores must be finite")


class ScoreModel:
    """Wraps a score provider; prediction is the argmax of the preferred
    score path (margin when available, else probability), ties to the
    lowest class index."""

    def __init__(self, provider):
        self.provider = provider
        if not (provider.has_margin or provider.has_probability):
            raise ScoringError("provider exposes neither margins nor probabilities")

    @property
    def has_margin(self) -> bool:
        return self.provider.has_margin

    @property
    def has_probability(self) -> bool:
        return self.provider.has_probability

    @property
    def class_count(self) -> int:
        return self.provider.class_count

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.provider.predict(X)

    def margin_scores(self, X: np.ndarray) -> np.ndarray:
        if not self.has_margin:
            raise ScoringError("model has no margin path")
        return self.provider.margin_scores(X)

    def probability_scores(self, X: np.ndarray) -> np.ndarray:
        if not self.has_probability:
            raise ScoringError("model has no probability path")
        return self.provider.probability_scores(X)


class BuiltinProvider:
    """Adapter from a trained built-in learner to the provider contract."""

    def __init__(self, model: learners.TrainedModel):
        self.model = model

    @property
    def has_margin(self) -> bool:
        return self.model.has_margin

    @property
    def has_probability(self) -> bool:
        return self.model.has_probability

    @property
    def class_count(self) -> int:
        return self.model.classes

    def predict(self, X):
        return learners.predict(self.model, X)

    def margin_scores(self, X):
        return learners.margin_scores(self.model, X)

    def probability_scores(self, X):
        return learners.probability_scores(self.model, X)


class LinearScoreModel:
    """Linear margin provider f_c(x) = w_c . x + b_c, handy for fixtures,
    loopback servers, and closed-form checks."""

    has_margin = True
    has_probability = True

    def __init__(self, weights, intercepts=None):
        self.weights = np.asarray(weights, dtype=np.float64)
        if self.weights.ndim != 2:
            raise ScoringError("weights must be (n_features, n_classes)")
        if intercepts is None:
            intercepts = np.zeros(self.weights.shape[1])
        self.intercepts = np.asarray(intercepts, dtype=np.float64)

    @property
    def class_count(self) -> int:
        return self.weights.shape[1]

    def margin_scores(self, X):
        return np.asarray(X, dtype=np.float64) @ self.weights + self.intercepts

    def probability_scores(self, X):
        logits = self.margin_scores(X)
        z = logits - logits.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)

    def predict(self, X):
        return np.argmax(self.margin_scores(X), axis=1).astype(np.int64)


def builtin_score_model(model: learners.TrainedModel) -> ScoreModel:
    return ScoreModel(BuiltinProvider(model))


def anchor_classes(model_b: ScoreModel, X: np.ndarray) -> np.ndarray:
    """Reference class per sample: the anchor model's own prediction."""
    anchors = np.asarray(model_b.predict(X), dtype=np.int64)
    if anchors.min(initial=0) < 0 or anchors.max(initial=0) >= model_b.class_count:
        raise ScoringError("anchor model predicted labels outside [0, C)")
    return anchors


def anchored_score(model: ScoreModel, X: np.ndarray, anchors: np.ndarray) -> AnchoredScore:
    """Scalar score of the anchor class for each row of X.

    Margin path when available; otherwise log-odds of the anchor class,
    routed through the eps-clamped form whenever p or 1-p underflows
    below ``LOG_ODDS_EPS`` so the result is always finite.
    """
    X = np.asarray(X, dtype=np.float64)
    anchors = np.asarray(anchors, dtype=np.int64)
    if anchors.shape != (X.shape[0],):
        raise ScoringError("need one anchor class per sample")
    if anchors.size and (anchors.min() < 0 or anchors.max() >= model.class_count):
        raise ScoringError("anchor classes outside [0, C)")
    rows = np.arange(X.shape[0])
    if model.has_margin:
        values = model.margin_scores(X)[rows, anchors]
        return AnchoredScore(anchor_class=anchors, values=np.asarray(values, dtype=np.float64))
    p = model.probability_scores(X)[rows, anchors]
    eps = LOG_ODDS_EPS
    degenerate = (p < eps) | (1.0 - p < eps)
    safe_p = np.where(degenerate, 0.5, p)
    values = np.where(
        degenerate,
        np.log((p + eps) / (1.0 - p + eps)),
        np.log(safe_p / (1.0 - safe_p)),
    )
    return AnchoredScore(anchor_class=anchors, values=values)


def delta_f(score_a: AnchoredScore, score_b: AnchoredScore) -> np.ndarray:
    """Per-sample behavioural delta f_B(x) - f_A(x); both scores must have
    been computed against the same anchors."""
    if not np.array_equal(score_a.anchor_class, score_b.anchor_class):
        raise ScoringError("anchor mismatch between the two scores")
    return score_b.values - score_a.values
