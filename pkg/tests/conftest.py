import numpy as np
import pytest

from gcecsp.instancegen import GenConfig, generate_instance
from gcecsp.model import Instance, Job, example_instance


@pytest.fixture
def example():
    return example_instance()


@pytest.fixture
def small():
    return generate_instance(GenConfig(n=3, k=2, seed=7))


@pytest.fixture
def medium():
    return generate_instance(GenConfig(n=10, k=3, seed=1))


def make_instance(jobs, capacity=50.0, k=2, name="t"):
    """Jobs given as (E, r, d, pmin, pmax, jumps, weights)."""
    return Instance(capacity, tuple(Job(i, *spec) for i, spec in enumerate(jobs)),
                    k, name=name)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
