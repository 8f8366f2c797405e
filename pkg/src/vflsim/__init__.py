"""Simulator for two-party vertical federated learning with a growing overlap."""

from .config import RunConfig
from .data import Dataset, EvalReport, load_bcw, make_synthetic
from .federation import Federation, run_baseline, run_dvfl, run_experiment

__all__ = [
    "Dataset",
    "EvalReport",
    "Federation",
    "RunConfig",
    "load_bcw",
    "make_synthetic",
    "run_baseline",
    "run_dvfl",
    "run_experiment",
]
__version__ = "0.1.0"
