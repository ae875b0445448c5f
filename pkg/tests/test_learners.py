import numpy as np
import pytest

from delta_audit import learners
from delta_audit.learners import LearnerError, LearnerSpec


def test_unknown_family_rejected():
    with pytest.raises(LearnerError, match="unknown family"):
        LearnerSpec("svm")


def test_unknown_hyperparameter_rejected():
    with pytest.raises(LearnerError, match="unknown hyperparameters"):
        LearnerSpec("logreg", {"C": 1.0})


@pytest.mark.parametrize("family,params", [
    ("logreg", {"l2_strength": -1.0}),
    ("knn", {"k": 0}),
    ("knn", {"weighting": "gaussian"}),
    ("forest", {"n_trees": 0}),
    ("forest", {"feature_rule": "half"}),
    ("gbstumps", {"max_depth": 3}),
    ("gbstumps", {"n_rounds": -1}),
])
def test_bad_hyperparameters_rejected(family, params):
    with pytest.raises(LearnerError):
        LearnerSpec(family, params)


class TestLogreg:
    def test_separable_train_accuracy(self, two_class_split):
        s = two_class_split
        model = learners.fit(LearnerSpec("logreg", {"l2_strength": 0.01, "max_iterations": 1500}),
                             s.Z_train, s.y_train)
        assert (learners.predict(model, s.Z_train) == s.y_train).mean() == 1.0

    def test_zero_weights_zero_logits(self, two_class_split):
        s = two_class_split
        model = learners.fit(LearnerSpec("logreg"), s.Z_train, s.y_train)
        zeroed = learners.TrainedModel(
            spec=model.spec, classes=model.classes,
            state=learners._LogregState(
                weights=np.zeros_like(model.state.weights),
                intercept=np.zeros_like(model.state.intercept),
                converged=True, iterations=0),
        )
        np.testing.assert_array_equal(learners.decision_scores(zeroed, s.Z_test), 0.0)

    def test_nonconvergence_warns_but_returns(self, two_class_split):
        s = two_class_split
        with pytest.warns(RuntimeWarning, match="did not reach"):
            model = learners.fit(LearnerSpec("logreg", {"l2_strength": 1e-06, "max_iterations": 3}),
                                 s.Z_train, s.y_train)
        assert model.state.iterations == 3

    def test_determinism(self, three_class_split):
        s = three_class_split
        spec = LearnerSpec("logreg")
        m1 = learners.fit(spec, s.Z_train, s.y_train)
        m2 = learners.fit(spec, s.Z_train, s.y_train)
        assert np.array_equal(learners.decision_scores(m1, s.Z_test),
                              learners.decision_scores(m2, s.Z_test))

    def test_probability_rows(self, three_class_split):
        s = three_class_split
        model = learners.fit(LearnerSpec("logreg"), s.Z_train, s.y_train)
        P = learners.probability_scores(model, s.Z_test)
        assert np.all(P >= 0)
        np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-9)


class TestKnn:
    def test_k1_memorizes(self, three_class_split):
        s = three_class_split
        model = learners.fit(LearnerSpec("knn", {"k": 1}), s.Z_train, s.y_train)
        assert (learners.predict(model, s.Z_train) == s.y_train).mean() == 1.0

    def test_vote_fractions(self):
        X = np.array([[0.0], [0.1], [10.0]])
        y = np.array([0, 0, 1])
        model = learners.fit(LearnerSpec("knn", {"k": 3}), X, y)
        scores = learners.decision_scores(model, np.array([[0.05]]))
        np.testing.assert_allclose(scores, [[2 / 3, 1 / 3]])

    def test_distance_weighting_exact_hit(self, three_class_split):
        s = three_class_split
        model = learners.fit(LearnerSpec("knn", {"k": 7, "weighting": "distance"}),
                             s.Z_train, s.y_train)
        preds = learners.predict(model, s.Z_train)
        assert np.array_equal(preds, s.y_train)

    def test_scan_order_is_cosmetic(self, three_class_split):
        s = three_class_split
        fwd = learners.fit(LearnerSpec("knn", {"k": 5, "scan_order": "forward"}), s.Z_train, s.y_train)
        rev = learners.fit(LearnerSpec("knn", {"k": 5, "scan_order": "reverse"}), s.Z_train, s.y_train)
        assert np.array_equal(learners.decision_scores(fwd, s.Z_test),
                              learners.decision_scores(rev, s.Z_test))

    def test_k_exceeding_train_size(self):
        X = np.arange(6, dtype=float).reshape(3, 2)
        with pytest.raises(LearnerError, match="exceeds training size"):
            learners.fit(LearnerSpec("knn", {"k": 5}), X, np.array([0, 1, 0]))


class TestForest:
    def test_stump_majority(self):
        X = np.arange(20, dtype=float).reshape(10, 2)
        y = np.array([0] * 8 + [1] * 2)
        model = learners.fit(LearnerSpec("forest", {"n_trees": 1, "max_depth": 0, "seed": 5}), X, y)
        preds = learners.predict(model, X)
        assert np.all(preds == 0)

    def test_seed_determinism(self, three_class_split):
        s = three_class_split
        spec = LearnerSpec("forest", {"n_trees": 15, "seed": 9})
        m1 = learners.fit(spec, s.Z_train, s.y_train)
        m2 = learners.fit(spec, s.Z_train, s.y_train)
        assert np.array_equal(learners.decision_scores(m1, s.Z_test),
                              learners.decision_scores(m2, s.Z_test))

    def test_probability_rows(self, three_class_split):
        s = three_class_split
        model = learners.fit(LearnerSpec("forest", {"n_trees": 10, "seed": 2}), s.Z_train, s.y_train)
        P = learners.probability_scores(model, s.Z_test)
        assert np.all(P >= 0)
        np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-9)

    def test_candidate_counts_d8(self, three_class_split):
        s = three_class_split  # d = 8: ceil(sqrt(8)) = 3, ceil(log2(8)) = 3
        for rule in ("sqrt", "log2"):
            model = learners.fit(
                LearnerSpec("forest", {"n_trees": 3, "feature_rule": rule, "seed": 1}),
                s.Z_train, s.y_train)
            counts = [c for tree in model.state.trees for c in tree.node_feature_counts]
            assert counts and set(counts) == {3}

    def test_candidate_counts_d64(self, rng):
        X = rng.normal(size=(40, 64))
        y = (X[:, 0] > 0).astype(int)
        expect = {"sqrt": 8, "log2": 6}
        for rule, m in expect.items():
            model = learners.fit(
                LearnerSpec("forest", {"n_trees": 2, "feature_rule": rule, "seed": 3, "max_depth": 3}),
                X, y)
            counts = [c for tree in model.state.trees for c in tree.node_feature_counts]
            assert counts and set(counts) == {m}

    def test_feature_rule_all(self, rng):
        X = rng.normal(size=(30, 5))
        y = (X[:, 1] > 0).astype(int)
        model = learners.fit(LearnerSpec("forest", {"n_trees": 2, "feature_rule": "all", "seed": 0}), X, y)
        counts = {c for tree in model.state.trees for c in tree.node_feature_counts}
        assert counts == {5}


class TestGbStumps:
    def test_zero_rounds_prior_scores(self, three_class_split):
        s = three_class_split
        model = learners.fit(LearnerSpec("gbstumps", {"n_rounds": 0}), s.Z_train, s.y_train)
        scores = learners.decision_scores(model, s.Z_test)
        assert np.allclose(scores, scores[0])
        prior = np.bincount(s.y_train, minlength=3) / len(s.y_train)
        np.testing.assert_allclose(scores[0], np.log(prior / (1 - prior)), atol=1e-12)

    def test_learns_something(self, two_class_split):
        s = two_class_split
        model = learners.fit(LearnerSpec("gbstumps", {"n_rounds": 40}), s.Z_train, s.y_train)
        acc = (learners.predict(model, s.Z_test) == s.y_test).mean()
        assert acc >= 0.8

    def test_depth2_allowed(self, three_class_split):
        s = three_class_split
        model = learners.fit(LearnerSpec("gbstumps", {"n_rounds": 10, "max_depth": 2}),
                             s.Z_train, s.y_train)
        assert learners.decision_scores(model, s.Z_test).shape == (len(s.y_test), 3)

    def test_determinism(self, two_class_split):
        s = two_class_split
        spec = LearnerSpec("gbstumps", {"n_rounds": 25})
        m1 = learners.fit(spec, s.Z_train, s.y_train)
        m2 = learners.fit(spec, s.Z_train, s.y_train)
        assert np.array_equal(learners.decision_scores(m1, s.Z_test),
                              learners.decision_scores(m2, s.Z_test))

    def test_probability_rows(self, two_class_split):
        s = two_class_split
        model = learners.fit(LearnerSpec("gbstumps", {"n_rounds": 15}), s.Z_train, s.y_train)
        P = learners.probability_scores(model, s.Z_test)
        assert np.all(P >= 0)
        np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-9)


def test_dimension_mismatch_raises(two_class_split):
    s = two_class_split
    model = learners.fit(LearnerSpec("logreg"), s.Z_train, s.y_train)
    with pytest.raises(LearnerError, match="features"):
        learners.decision_scores(model, s.Z_test[:, :3])
