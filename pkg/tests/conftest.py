import pytest

from mpfc_tune.controller import DEFAULT_WEIGHTS, ControllerConfig
from mpfc_tune.simulation import evaluate
from mpfc_tune.track import build_default_loop
from mpfc_tune.vehicle import VehicleParams


@pytest.fixture(scope="session")
def loop():
    return build_default_loop()


@pytest.fixture(scope="session")
def params():
    return VehicleParams()


@pytest.fixture(scope="session")
def default_lap(loop, params):
    """One closed-loop lap with the hand-tuned weights, shared across tests."""
    return evaluate(loop, ControllerConfig(weights=DEFAULT_WEIGHTS), params)
