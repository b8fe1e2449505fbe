import numpy as np
import pytest

from fairlab.datagen import GroupedDataset


@pytest.fixture
def separable_data():
    """20 linearly separable points with all four (y, a) cells populated.

    y follows the sign of the first coordinate with a wide margin, so any
    moderately wide random-feature model can drive train error to zero.
    """
    rng = np.random.default_rng(42)
    n = 20
    labels = np.array([0, 1] * (n // 2))
    attrs = np.array([0, 0, 1, 1] * (n // 4))
    x0 = (2 * labels - 1) * (1.5 + rng.random(n))
    rest = rng.normal(0, 0.2, size=(n, 2))
    features = np.column_stack([x0, rest])
    return GroupedDataset(features, labels, attrs)


@pytest.fixture
def random_grouped():
    def make(n=40, d=5, seed=0):
        rng = np.random.default_rng(seed)
        labels = rng.integers(0, 2, size=n)
        attrs = rng.integers(0, 2, size=n)
        # Force every (y, a) cell to be present.
        labels[:4] = [0, 0, 1, 1]
        attrs[:4] = [0, 1, 0, 1]
        return GroupedDataset(rng.normal(size=(n, d)), labels, attrs)

    return make
