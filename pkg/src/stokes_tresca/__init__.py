"""Finite element Stokes flow with Tresca friction walls.

The velocity problem at frozen pressure (divergence confined to a band
``[-eps, eps]`` per element, threshold friction on part of the wall) is
solved by ADMM; an outer loop updates the pressure from the divergence.
"""

from .admm import AdmmReport, AdmmState, run_nisv
from .assembly import Discretization
from .config import SolverConfig
from .errors import ConfigurationError, ConvergenceError, MeshError, MshParseError
from .mesh import DIRICHLET, FRICTION, Mesh, boundary_frames, generate_rectangle, load_msh, save_msh
from .outer import NispResult, OuterReport, run_nisp

__version__ = "0.1.0"

__all__ = [
    "AdmmReport",
    "AdmmState",
    "ConfigurationError",
    "ConvergenceError",
    "DIRICHLET",
    "Discretization",
    "FRICTION",
    "Mesh",
    "MeshError",
    "MshParseError",
    "NispResult",
    "OuterReport",
    "SolverConfig",
    "boundary_frames",
    "generate_rectangle",
    "load_msh",
    "run_nisp",
    "run_nisv",
    "save_msh",
]
