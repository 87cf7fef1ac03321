"""Galton-Watson processes with random lifetimes, analysed as age-typed branching processes."""

from __future__ import annotations

__version__ = "0.1.0"

from gwlife.distributions import (
    LifetimeModel,
    ModelSpecError,
    OffspringModel,
    make_lifetime,
    make_offspring,
)
from gwlife.extinction import ExtinctionReport, extinction_probability, is_certain_extinction
from gwlife.io import load_spec, models_from_spec
from gwlife.simulator import SimConfig, estimate_extinction, estimate_growth, run_replicate, step
from gwlife.spectral import (
    Recurrence,
    TheoremCase,
    classify,
    convergence_radius,
    growth_constant,
    invariant_system,
)
from gwlife.truncation import Method, mean_total, radius_sequence, truncated_radius

__all__ = [
    "ExtinctionReport",
    "LifetimeModel",
    "Method",
    "ModelSpecError",
    "OffspringModel",
    "Recurrence",
    "SimConfig",
    "TheoremCase",
    "classify",
    "convergence_radius",
    "estimate_extinction",
    "estimate_growth",
    "extinction_probability",
    "growth_constant",
    "invariant_system",
    "is_certain_extinction",
    "load_spec",
    "make_lifetime",
    "make_offspring",
    "mean_total",
    "models_from_spec",
    "radius_sequence",
    "run_replicate",
    "step",
    "truncated_radius",
]
