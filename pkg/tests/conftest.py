import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ipfield import datasets, net

settings.register_profile(
    "ci", deadline=None, max_examples=50,
    suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ci")


def split_dataset(ds, holdout_frac, seed):
    """Shuffled train/holdout split of a labeled dataset."""
    rng = np.random.default_rng(seed)
    perm = rng.permutation(ds.n)
    k = int(ds.n * holdout_frac)
    train = datasets.LabeledDataset2D(
        points=ds.points[perm[k:]], labels=ds.labels[perm[k:]],
        num_classes=ds.num_classes)
    hold = datasets.LabeledDataset2D(
        points=ds.points[perm[:k]], labels=ds.labels[perm[:k]],
        num_classes=ds.num_classes)
    return train, hold


@pytest.fixture(scope="session")
def small_moons_model():
    """A quickly trained moons model for tests that need real features."""
    ds = datasets.make_two_moons(600, 0.1, 11)
    train, hold = split_dataset(ds, 0.2, 12)
    config = net.TrainConfig(epochs=80, seed=3)
    model, losses = net.train(train, config)
    return {"model": model, "train": train, "holdout": hold, "losses": losses}
