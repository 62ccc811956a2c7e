"""Deterministic network simulation and attack experiments."""

from .config import HashRateStep, SimConfig
from .experiments import (
    PrematureResult,
    TamperResult,
    premature_release_experiment,
    tamper_experiment,
    textbook_rho,
)
from .sim import SimReport, run_simulation

__all__ = [
    "HashRateStep",
    "PrematureResult",
    "SimConfig",
    "SimReport",
    "TamperResult",
    "premature_release_experiment",
    "run_simulation",
    "tamper_experiment",
    "textbook_rho",
]
