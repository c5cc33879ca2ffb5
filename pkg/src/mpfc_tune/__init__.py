"""Tuning the weights of a path-following model predictive controller by
constrained multi-objective Bayesian optimisation."""

from .controller import DEFAULT_WEIGHTS, ControllerConfig, WeightVector
from .simulation import ObjectiveTriple, evaluate, run_lap
from .track import TrackSpec, build_default_loop
from .vehicle import VehicleParams, VehicleState

__version__ = "0.1.0"

__all__ = ["DEFAULT_WEIGHTS", "ControllerConfig", "WeightVector", "ObjectiveTriple",
           "evaluate", "run_lap", "TrackSpec", "build_default_loop", "VehicleParams",
           "VehicleState"]
