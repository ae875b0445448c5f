import math

import numpy as np
import pytest

from delta_audit import learners, scoring
from delta_audit.learners import LearnerSpec
from delta_audit.scoring import (
    LinearScoreModel,
    ScoreModel,
    ScoringError,
    anchor_classes,
    anchored_score,
    builtin_score_model,
    delta_f,
)


class SpyProvider:
    """Probability-only provider that records which anchors it was asked to
    score; predictions favour class 1 everywhere."""

    has_margin = False
    has_probability = True
    class_count = 2

    def __init__(self, p1=0.8):
        self.p1 = p1

    def predict(self, X):
        return np.ones(len(X), dtype=np.int64)

    def probability_scores(self, X):
        return np.tile([1 - self.p1, self.p1], (len(X), 1))

    def margin_scores(self, X):
        raise AssertionError("margin path must not be used")


def test_anchor_classes_constant_model(rng):
    model = ScoreModel(SpyProvider())
    X = rng.normal(size=(6, 3))
    assert anchor_classes(model, X).tolist() == [1] * 6


def test_anchor_classes_binary_logreg_sign(two_class_split):
    s = two_class_split
    model = builtin_score_model(learners.fit(LearnerSpec("logreg"), s.Z_train, s.y_train))
    anchors = anchor_classes(model, s.Z_test)
    logits = model.margin_scores(s.Z_test)
    expected = (logits[:, 1] > logits[:, 0]).astype(int)
    assert np.array_equal(anchors, expected)


def test_anchors_from_b_reused_on_a():
    # scoring A must use the anchor vector it is given, not A's own argmax
    w_a = np.array([[1.0, -1.0]])
    model_a = ScoreModel(LinearScoreModel(w_a))
    X = np.array([[2.0], [-2.0]])
    anchors = np.array([0, 0])  # pretend B predicted class 0 everywhere
    fa = anchored_score(model_a, X, anchors)
    np.testing.assert_allclose(fa.values, [2.0, -2.0])


def test_margin_path_preferred_over_probability(two_class_split):
    s = two_class_split
    model = builtin_score_model(learners.fit(LearnerSpec("logreg"), s.Z_train, s.y_train))
    anchors = anchor_classes(model, s.Z_test)
    values = anchored_score(model, s.Z_test, anchors).values
    logits = model.margin_scores(s.Z_test)
    np.testing.assert_array_equal(values, logits[np.arange(len(anchors)), anchors])


def test_log_odds_midpoint_is_zero():
    model = ScoreModel(SpyProvider(p1=0.5))
    values = anchored_score(model, np.zeros((3, 2)), np.array([1, 1, 1])).values
    np.testing.assert_allclose(values, 0.0, atol=1e-15)


def test_log_odds_clamp_at_certainty():
    model = ScoreModel(SpyProvider(p1=1.0))
    values = anchored_score(model, np.zeros((1, 2)), np.array([1])).values
    expected = math.log((1.0 + 1e-9) / 1e-9)
    assert values[0] == pytest.approx(expected, abs=1e-9)
    assert values[0] == pytest.approx(20.723, abs=1e-3)


def test_log_odds_clamp_at_zero_probability():
    model = ScoreModel(SpyProvider(p1=1.0))
    values = anchored_score(model, np.zeros((1, 2)), np.array([0])).values
    assert np.isfinite(values[0])
    assert values[0] == pytest.approx(math.log(1e-9 / (1.0 + 1e-9)), abs=1e-9)


def test_binary_margin_sign_convention():
    # single raw margin m = -1.7 means class-0 margin is +1.7
    dec = -1.7
    model = ScoreModel(LinearScoreModel(np.array([[-dec, dec]]).reshape(1, 2)))
    X = np.array([[1.0]])
    f0 = anchored_score(model, X, np.array([0])).values[0]
    f1 = anchored_score(model, X, np.array([1])).values[0]
    assert f0 == pytest.approx(1.7)
    assert f1 == pytest.approx(-1.7)


def test_delta_f_identity_and_shift(rng):
    X = rng.normal(size=(5, 2))
    w = rng.normal(size=(2, 2))
    model = ScoreModel(LinearScoreModel(w))
    anchors = anchor_classes(model, X)
    fa = anchored_score(model, X, anchors)
    np.testing.assert_array_equal(delta_f(fa, fa), 0.0)
    shifted = ScoreModel(LinearScoreModel(w, intercepts=np.array([2.0, 2.0])))
    fb = anchored_score(shifted, X, anchors)
    np.testing.assert_allclose(delta_f(fa, fb), 2.0, atol=1e-12)


def test_delta_f_anchor_mismatch():
    a = scoring.AnchoredScore(anchor_class=np.array([0, 1]), values=np.array([0.0, 1.0]))
    b = scoring.AnchoredScore(anchor_class=np.array([1, 1]), values=np.array([0.0, 1.0]))
    with pytest.raises(ScoringError, match="anchor mismatch"):
        delta_f(a, b)


def test_delta_f_matches_brute_force(three_class_split, rng):
    s = three_class_split
    model_a = builtin_score_model(learners.fit(LearnerSpec("logreg", {"l2_strength": 1.0}), s.Z_train, s.y_train))
    model_b = builtin_score_model(learners.fit(LearnerSpec("logreg", {"l2_strength": 10.0}), s.Z_train, s.y_train))
    anchors = anchor_classes(model_b, s.Z_test)
    dfs = delta_f(anchored_score(model_a, s.Z_test, anchors),
                  anchored_score(model_b, s.Z_test, anchors))
    rows = np.arange(len(anchors))
    brute = (model_b.margin_scores(s.Z_test)[rows, anchors]
             - model_a.margin_scores(s.Z_test)[rows, anchors])
    np.testing.assert_allclose(dfs, brute, atol=1e-12)


def test_relabel_equivariance(three_class_split):
    # permuting class identities permutes score columns; |delta f| is unchanged
    s = three_class_split
    perm = np.array([2, 0, 1])
    inv = np.argsort(perm)
    spec_a = LearnerSpec("logreg", {"l2_strength": 1.0})
    spec_b = LearnerSpec("logreg", {"l2_strength": 5.0})
    ma = builtin_score_model(learners.fit(spec_a, s.Z_train, s.y_train))
    mb = builtin_score_model(learners.fit(spec_b, s.Z_train, s.y_train))
    ma_p = builtin_score_model(learners.fit(spec_a, s.Z_train, perm[s.y_train]))
    mb_p = builtin_score_model(learners.fit(spec_b, s.Z_train, perm[s.y_train]))

    anchors = anchor_classes(mb, s.Z_test)
    anchors_p = anchor_classes(mb_p, s.Z_test)
    assert np.array_equal(perm[anchors], anchors_p)
    dfs = delta_f(anchored_score(ma, s.Z_test, anchors), anchored_score(mb, s.Z_test, anchors))
    dfs_p = delta_f(anchored_score(ma_p, s.Z_test, anchors_p), anchored_score(mb_p, s.Z_test, anchors_p))
    np.testing.assert_allclose(np.abs(dfs), np.abs(dfs_p), atol=1e-9)


def test_anchored_score_is_pure(three_class_split):
    s = three_class_split
    model = builtin_score_model(learners.fit(LearnerSpec("forest", {"n_trees": 8, "seed": 4}),
                                             s.Z_train, s.y_train))
    anchors = anchor_classes(model, s.Z_test)
    v1 = anchored_score(model, s.Z_test, anchors).values
    v2 = anchored_score(model, s.Z_test, anchors).values
    assert np.array_equal(v1, v2)


def test_provider_needs_a_capability():
    class NoCaps:
        has_margin = False
        has_probability = False
        class_count = 2

    with pytest.raises(ScoringError, match="neither"):
        ScoreModel(NoCaps())
