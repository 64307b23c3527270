import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from noisy_synth.data import partition
from noisy_synth.experiments import COMPARISON_DATA
from noisy_synth.noise import from_energy_bound

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def scalar_data():
    """The scalar example: X+ = [0 1 0], X- = [0 0 1], U- = [-.5 .5 -1.5], bound W W^T <= 1."""
    xp, xm, um = partition(COMPARISON_DATA)
    return xp, xm, um, from_energy_bound(np.eye(1), 3)


def random_sym(rng, d, scale=1.0):
    a = rng.standard_normal((d, d)) * scale
    return (a + a.T) / 2
