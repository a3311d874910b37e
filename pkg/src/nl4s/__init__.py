"""Spectral laboratory for the focusing mass-critical fourth-order nonlinear Schroedinger equation."""

__version__ = "0.1.0"

from .spectral import GridSpec, PhysicalField, SpectralField, MultiplierSpec  # noqa: E402
from .observables import NonlinearityParams  # noqa: E402
from .ground_state import petviashvili_solve, ground_state  # noqa: E402
from .i_operator import IMultiplier, build_m, apply_I, modified_energy  # noqa: E402
from .evolution import EvolveConfig, strang_evolve  # noqa: E402

__all__ = [
    "GridSpec",
    "PhysicalField",
    "SpectralField",
    "MultiplierSpec",
    "NonlinearityParams",
    "petviashvili_solve",
    "ground_state",
    "IMultiplier",
    "build_m",
    "apply_I",
    "modified_energy",
    "EvolveConfig",
    "strang_evolve",
]
