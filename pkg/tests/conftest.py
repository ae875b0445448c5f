import numpy as np
import pytest

from delta_audit import data


class SplitData:
    """One embedded dataset, split, standardized, unpacked for tests."""

    def __init__(self, name: str, seed: int = 42):
        self.ds = data.embedded_dataset(name)
        self.split = data.stratified_split(self.ds, 0.2, seed)
        self.std = data.fit_standardizer(self.ds, self.split)
        Z = self.std.transform(self.ds.X)
        self.train = np.array(self.split.train)
        self.test = np.array(self.split.test)
        self.Z_train = Z[self.train]
        self.Z_test = Z[self.test]
        self.y_train = self.ds.y[self.train]
        self.y_test = self.ds.y[self.test]


@pytest.fixture(scope="session")
def two_class():
    return data.embedded_dataset("two_class_linear")


@pytest.fixture(scope="session")
def three_class():
    return data.embedded_dataset("three_class_interactions")


@pytest.fixture(scope="session")
def two_class_split():
    return SplitData("two_class_linear")


@pytest.fixture(scope="session")
def three_class_split():
    return SplitData("three_class_interactions")


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
