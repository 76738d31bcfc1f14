import numpy as np
import pytest

from diffpat.data import BinaryDataset, LabeledDataset


def random_labeled(rng, n=16, m=8, K=2):
    """Small random labeled dataset with every class populated."""
    rows = [np.flatnonzero(rng.random(m) < 0.4) for _ in range(n)]
    labels = rng.integers(0, K, size=n)
    labels[:K] = np.arange(K)  # guarantee populated classes
    return LabeledDataset(BinaryDataset(rows, m), labels, K=K)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
