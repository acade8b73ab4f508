"""Waiting-time analysis of a two-product, two-station tandem polling line.

Station 1 is solved exactly as a single polling queue. Station 2 is solved
from a coupled chain that tracks station 2 in full and station 1 only
through the queue being served, re-sampling the other queue from a
negative binomial law at each setup completion. A simple decomposition
baseline and a discrete-event simulator are included for comparison.
"""
from .baseline import solve_simple_decomposition
from .des import SimConfig, SimResult, simulate
from .experiments import render, run_experiment, solve_proposed
from .intervisit import build_intervisit_model
from .model import (
    InvalidParameters,
    ModelParams,
    SolverConfig,
    TruncationConfig,
    load_params,
    symmetric_params,
    traffic_intensities,
    validate_params,
)
from .report import PerformanceReport, error_delta
from .ss1 import Ss1Result, solve_ss1
from .ss2 import Ss2Result, solve_ss2

__version__ = "0.1.0"

__all__ = [
    "InvalidParameters",
    "ModelParams",
    "PerformanceReport",
    "SimConfig",
    "SimResult",
    "SolverConfig",
    "Ss1Result",
    "Ss2Result",
    "TruncationConfig",
    "build_intervisit_model",
    "error_delta",
    "load_params",
    "render",
    "run_experiment",
    "simulate",
    "solve_proposed",
    "solve_simple_decomposition",
    "solve_ss1",
    "solve_ss2",
    "symmetric_params",
    "traffic_intensities",
    "validate_params",
]
