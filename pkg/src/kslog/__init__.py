"""Simulation and analysis toolkit for the parabolic Keller-Segel system with
saturated logarithmic sensitivity chi*u*grad(v)/(v+c)."""

from .grid import Field, Grid, chemotaxis_divergence, integrate, laplacian_neumann
from .params import (
    DomainError,
    ModelParams,
    RawParams,
    RegionLabel,
    classify_region,
    scale_parameters,
    thresholds,
)
from .stepper import RunResult, SimState, StepperConfig, Termination, simulate, step

__version__ = "0.1.0"

__all__ = [
    "DomainError",
    "Field",
    "Grid",
    "ModelParams",
    "RawParams",
    "RegionLabel",
    "RunResult",
    "SimState",
    "StepperConfig",
    "Termination",
    "chemotaxis_divergence",
    "classify_region",
    "integrate",
    "laplacian_neumann",
    "scale_parameters",
    "simulate",
    "step",
    "thresholds",
]
