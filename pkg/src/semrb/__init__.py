"""Spectral-element steady Navier-Stokes in a parametrized channel, with a
POD-Galerkin reduced model."""
from .assembly import Discretization
from .geometry import GeometryConfig, GeometryError
from .oseen import oseen_solve, snapshot_sweep, stokes_solve
from .rom import build_reduced_model, compute_pod

__all__ = ["Discretization", "GeometryConfig", "GeometryError", "oseen_solve",
           "snapshot_sweep", "stokes_solve", "build_reduced_model", "compute_pod"]
__version__ = "0.1.0"
