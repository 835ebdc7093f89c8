import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile(
    "suite",
    max_examples=25,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "suite"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_tensor(rng, labels, precision="single"):
    from rqcsim.tensor import Tensor

    n = 1 << len(labels)
    vals = (rng.standard_normal(n) + 1j * rng.standard_normal(n)).astype(np.complex64)
    return Tensor(tuple(labels), vals.reshape((2,) * len(labels)), precision)


def small_grid_circuit(qubits=(2, 2), cycles=4, seed=1):
    from rqcsim.circuit import generate_rqc
    from rqcsim.topology import grid_topology

    w, h = qubits
    return generate_rqc(grid_topology(w, h), cycles, seed)
