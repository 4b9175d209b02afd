"""Traveling waves of a two-dimensional lattice SIR model with saturated incidence.

Modules:
    model: parameters, equilibria and R0.
    dispersion: characteristic function, critical speed and decay rates.
    bounds: upper/lower envelope construction and certification.
    profile: truncated wave-profile solver and its diagnostics.
    lyapunov: Lyapunov functional along computed profiles.
    lattice: direct lattice simulation and front tracking.
    config, pipeline, report, cli: experiment orchestration and output.
"""

from .model import Equilibria, ModelParams, basic_reproduction, endemic_equilibrium, equilibria

__all__ = ["Equilibria", "ModelParams", "basic_reproduction", "endemic_equilibrium", "equilibria"]
__version__ = "0.1.0"
