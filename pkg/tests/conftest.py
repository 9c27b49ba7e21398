import numpy as np
import pytest

from jumpdiff.model import Interval, JumpDistribution, ProcessSpec, unit_spec


@pytest.fixture
def spec0():
    return unit_spec(0.0)


@pytest.fixture
def spec20():
    return unit_spec(20.0)


@pytest.fixture
def two_atom_spec():
    return ProcessSpec(
        interval=Interval(0.0, 1.0),
        sigma=1.0,
        mu=5.0,
        nu=JumpDistribution(((0.25, 0.5), (0.75, 0.5))),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240808)
