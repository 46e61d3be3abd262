import numpy as np
import pytest
import torch
from hypothesis import HealthCheck, settings

from guidemol.graphdata import DEFAULT_BONDS, QM9_ATOMS

settings.register_profile(
    "default", deadline=None,
    suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

torch.set_num_threads(1)


@pytest.fixture(scope="session")
def qm9():
    return QM9_ATOMS


@pytest.fixture(scope="session")
def bonds():
    return DEFAULT_BONDS


def random_distribution(rng: np.random.Generator, k: int,
                        allow_zero: bool = False) -> np.ndarray:
    """Random probability vector; by default bounded away from zero."""
    if allow_zero:
        raw = rng.uniform(0.0, 1.0, size=k)
    else:
        raw = rng.uniform(0.05, 1.0, size=k)
    return raw / raw.sum()
