"""Online path-loss map reconstruction from streamed, crowd-sourced measurements."""
from .apsm import ApsmConfig, ApsmEstimator, Hyperslab, RkhsFunction, apsm_update, project_hyperslab
from .errors import RadioMapError
from .harness import GridSpec, grid_eval, learning_curve, tracking_experiment
from .kernels import DictConfig, Dictionary, KernelBank, KernelSpec, Measurement, Position
from .multikernel import MeasurementSet, MkConfig, MultiKernelEstimator, fb_update, project_measurement_set
from .simulator import GroundTruthMap, ScenarioConfig, default_scenario, simulate_stream

__version__ = "0.1.0"

__all__ = [
    "ApsmConfig",
    "ApsmEstimator",
    "DictConfig",
    "Dictionary",
    "GridSpec",
    "GroundTruthMap",
    "Hyperslab",
    "KernelBank",
    "KernelSpec",
    "Measurement",
    "MeasurementSet",
    "MkConfig",
    "MultiKernelEstimator",
    "Position",
    "RadioMapError",
    "RkhsFunction",
    "ScenarioConfig",
    "apsm_update",
    "default_scenario",
    "fb_update",
    "grid_eval",
    "learning_curve",
    "project_hyperslab",
    "project_measurement_set",
    "simulate_stream",
    "tracking_experiment",
]
