import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from evsnn.core_model import NetworkConfig, WeightMatrix, validate_config
from evsnn.sim_kernel import collision_audit

# JIT compilation makes the first example of a property slow
settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("stress", parent=settings.get_profile("default"), max_examples=1000)
settings.load_profile("default")


def make_model(sizes, thresholds, signs=None, **kw):
    """Validated model; ``signs`` defaults to all +1 weights."""
    config = NetworkConfig.from_sizes(sizes, thresholds, **kw)
    if signs is None:
        signs = [np.ones((a, b), dtype=np.int8) for a, b in zip(sizes[:-1], sizes[1:])]
    return validate_config(config, [WeightMatrix.from_signs(s) for s in signs])


@pytest.fixture
def model_factory():
    return make_model


@pytest.fixture(scope="session", autouse=True)
def no_collisions_anywhere():
    """Every simulation run in the suite must be free of same-tick synaptic collisions."""
    yield
    audit = collision_audit()
    assert sum(audit) == 0, f"{sum(audit)} collisions across {len(audit)} runs"
