"""Shared fixtures: small synthetic datasets and fast training configs."""

import os

import numpy as np
import pytest

from recdefend import SplitConfig, TrainConfig, split_dataset, synthetic_dataset


@pytest.fixture(scope="session")
def small_dataset():
    """Unsplit 60x80 dataset; cheap enough for per-test fits."""
    return synthetic_dataset(60, 80, d=4, ratings_per_user=10, rng_seed=1, noise=0.2)


@pytest.fixture(scope="session")
def small_split(small_dataset):
    return split_dataset(small_dataset, SplitConfig(rng_seed=0))


@pytest.fixture(scope="session")
def fast_cfg():
    return TrainConfig(epochs=3, batch_size=64, learning_rate=0.02, rng_seed=0)


@pytest.fixture(scope="session")
def medium_split():
    """200x300 dataset where attacks and the co-training defense have teeth."""
    ds = synthetic_dataset(200, 300, d=4, ratings_per_user=20, rng_seed=1, noise=0.2)
    return split_dataset(ds, SplitConfig(rng_seed=0))


def dataset_dir():
    return os.environ.get("RECDEFEND_DATA", os.path.join(os.path.dirname(__file__), "..", "data"))


def find_rating_file(*relpaths):
    """First existing real-data rating file among the candidates, else None."""
    for rel in relpaths:
        path = os.path.join(dataset_dir(), rel)
        if os.path.exists(path):
            return path
    return None
