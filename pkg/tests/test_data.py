import numpy as np
import pytest

from delta_audit import data, learners
from delta_audit.data import DataError


def test_load_csv_first_appearance_encoding(tmp_path):
    p = tmp_path / "toy.csv"
    p.write_text("f0,f1,label\n1.0,2.0,a\n3.0,4.0,b\n5.0,6.0,a\n")
    ds = data.load_csv(p, "label")
    assert ds.y.tolist() == [0, 1, 0]
    assert ds.class_count == 2
    assert ds.label_names == ("a", "b")
    assert ds.feature_names == ("f0", "f1")


def test_load_csv_nan_cell_names_the_cell(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("f0,f1,label\n1.0,NaN,a\n2.0,3.0,b\n")
    with pytest.raises(DataError, match=r"row 2, column 'f1'"):
        data.load_csv(p, "label")


def test_load_csv_non_numeric_cell(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("f0,f1,label\n1.0,2.0,a\nx,3.0,b\n")
    with pytest.raises(DataError, match=r"row 3, column 'f0'"):
        data.load_csv(p, "label")


def test_load_csv_missing_file(tmp_path):
    with pytest.raises(DataError, match="no such file"):
        data.load_csv(tmp_path / "absent.csv", "label")


def test_load_csv_single_class(tmp_path):
    p = tmp_path / "one.csv"
    p.write_text("f0,label\n1.0,a\n2.0,a\n")
    with pytest.raises(DataError, match="fewer than 2 classes"):
        data.load_csv(p, "label")


def test_embedded_two_class_shape_via_csv_roundtrip(tmp_path, two_class):
    assert two_class.X.shape == (60, 6)
    p = tmp_path / "embedded.csv"
    data.save_csv(two_class, p)
    loaded = data.load_csv(p, "label")
    assert loaded.n_samples == 60 and loaded.n_features == 6
    np.testing.assert_allclose(loaded.X, two_class.X, atol=1e-12)
    assert loaded.y.tolist() == two_class.y.tolist()


def test_csv_roundtrip_relabels_to_first_appearance(tmp_path):
    # non-canonical codes: label 1 appears first, so reloading re-encodes it
    # as 0; the per-row label names survive exactly
    X = np.arange(12, dtype=float).reshape(4, 3)
    ds = data.Dataset(X=X, y=np.array([1, 0, 1, 0]), feature_names=("a", "b", "c"),
                      class_count=2, label_names=("neg", "pos"))
    p = tmp_path / "rt.csv"
    data.save_csv(ds, p)
    loaded = data.load_csv(p, "label")
    np.testing.assert_allclose(loaded.X, ds.X, atol=1e-12)
    names_before = [ds.label_names[c] for c in ds.y]
    names_after = [loaded.label_names[c] for c in loaded.y]
    assert names_after == names_before
    assert loaded.label_names == ("pos", "neg")


def test_dataset_rejects_nonfinite():
    X = np.ones((4, 2))
    X[2, 1] = np.inf
    with pytest.raises(DataError, match="non-finite"):
        data.Dataset(X=X, y=np.array([0, 1, 0, 1]), feature_names=("a", "b"), class_count=2)


def test_dataset_requires_every_class():
    with pytest.raises(DataError, match="no samples"):
        data.Dataset(X=np.ones((3, 1)), y=np.array([0, 0, 2]), feature_names=("a",), class_count=3)


class TestStratifiedSplit:
    def test_balanced_two_class_fraction(self):
        X = np.arange(20, dtype=float).reshape(10, 2)
        y = np.array([0] * 5 + [1] * 5)
        ds = data.Dataset(X=X, y=y, feature_names=("a", "b"), class_count=2)
        split = data.stratified_split(ds, 0.2, 0)
        test_y = ds.y[list(split.test)]
        assert len(split.test) == 2
        assert (test_y == 0).sum() == 1 and (test_y == 1).sum() == 1

    def test_deterministic_for_seed(self, two_class):
        s1 = data.stratified_split(two_class, 0.2, 7)
        s2 = data.stratified_split(two_class, 0.2, 7)
        assert s1 == s2

    def test_different_seeds_differ(self, two_class):
        s1 = data.stratified_split(two_class, 0.2, 1)
        s2 = data.stratified_split(two_class, 0.2, 2)
        assert s1.test != s2.test

    def test_partition_property(self, three_class):
        split = data.stratified_split(three_class, 0.25, 3)
        combined = sorted(split.train + split.test)
        assert combined == list(range(three_class.n_samples))

    def test_per_class_fraction_within_one_sample(self, three_class):
        frac = 0.3
        split = data.stratified_split(three_class, frac, 11)
        test_y = three_class.y[list(split.test)]
        for cls in range(three_class.class_count):
            n_cls = (three_class.y == cls).sum()
            n_test = (test_y == cls).sum()
            assert abs(n_test - frac * n_cls) <= 1.0

    def test_singleton_class_rejected(self):
        ds = data.Dataset(X=np.ones((3, 1)), y=np.array([0, 0, 1]),
                          feature_names=("a",), class_count=2)
        with pytest.raises(DataError, match="class 1 has 1"):
            data.stratified_split(ds, 0.5, 0)

    def test_empty_test_set_rejected(self):
        X = np.arange(8, dtype=float).reshape(4, 2)
        ds = data.Dataset(X=X, y=np.array([0, 0, 1, 1]), feature_names=("a", "b"), class_count=2)
        with pytest.raises(DataError, match="empty test set"):
            data.stratified_split(ds, 0.01, 0)


class TestStandardizer:
    def test_population_convention(self):
        ds = data.Dataset(X=np.array([[0.0], [2.0], [9.0]]), y=np.array([0, 1, 0]),
                          feature_names=("a",), class_count=2)
        idx = data.SplitIndices(train=(0, 1), test=(2,))
        std = data.fit_standardizer(ds, idx)
        assert std.mean[0] == pytest.approx(1.0)
        assert std.std[0] == pytest.approx(1.0)  # sqrt(((0-1)^2 + (2-1)^2)/2)

    def test_constant_feature_floored_and_flagged(self):
        X = np.column_stack([np.full(4, 3.0), np.arange(4, dtype=float)])
        ds = data.Dataset(X=X, y=np.array([0, 1, 0, 1]), feature_names=("c", "v"), class_count=2)
        idx = data.SplitIndices(train=(0, 1, 2), test=(3,))
        std = data.fit_standardizer(ds, idx)
        assert std.std[0] == data.STD_FLOOR
        assert std.constant_features == (0,)

    def test_all_equal_rows_floor_everywhere(self):
        X = np.tile([1.5, -2.0], (4, 1))
        ds = data.Dataset(X=X, y=np.array([0, 1, 0, 1]), feature_names=("a", "b"), class_count=2)
        idx = data.SplitIndices(train=(0, 1), test=(2, 3))
        std = data.fit_standardizer(ds, idx)
        assert np.all(std.std == data.STD_FLOOR)

    def test_transform_of_mean_is_zero(self, two_class):
        split = data.stratified_split(two_class, 0.2, 42)
        std = data.fit_standardizer(two_class, split)
        z = std.transform(std.mean.reshape(1, -1))
        np.testing.assert_allclose(z, 0.0, atol=1e-12)

    def test_roundtrip_identity(self, two_class, rng):
        split = data.stratified_split(two_class, 0.2, 42)
        std = data.fit_standardizer(two_class, split)
        X = rng.normal(size=(5, two_class.n_features)) * 10
        np.testing.assert_allclose(std.inverse_transform(std.transform(X)), X, atol=1e-12)

    def test_standardized_train_is_centered_unit(self, three_class):
        split = data.stratified_split(three_class, 0.2, 42)
        std = data.fit_standardizer(three_class, split)
        Z = std.transform(three_class.X[list(split.train)])
        assert np.abs(Z.mean(axis=0)).max() < 1e-9
        assert np.abs(Z.std(axis=0) - 1.0).max() < 1e-9


class TestEmbedded:
    def test_deterministic(self):
        a = data.embedded_datasets()
        b = data.embedded_datasets()
        for da, db in zip(a, b):
            assert np.array_equal(da.X, db.X)
            assert np.array_equal(da.y, db.y)

    def test_three_class_counts(self, three_class):
        assert three_class.X.shape == (90, 8)
        assert np.bincount(three_class.y).tolist() == [30, 30, 30]

    def test_two_class_linear_model_accuracy(self, two_class_split):
        s = two_class_split
        model = learners.fit(learners.LearnerSpec("logreg"), s.Z_train, s.y_train)
        acc = (learners.predict(model, s.Z_test) == s.y_test).mean()
        assert acc >= 0.9

    def test_unknown_name(self):
        with pytest.raises(DataError, match="unknown embedded dataset"):
            data.embedded_dataset("nope")
