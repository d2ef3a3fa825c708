"""Information potentials for trees of generalised linear models with orthogonally invariant matrices."""

from .errors import ConvergenceError, DomainError, QuadratureWarning, SpecError
from .network import TreeNetwork, compact_potential, domain_box, load_network, potential, validate_network
from .solver import SolverOptions, global_min, phase_scan, stationary_points

__version__ = "0.1.0"

__all__ = [
    "ConvergenceError",
    "DomainError",
    "QuadratureWarning",
    "SpecError",
    "TreeNetwork",
    "compact_potential",
    "domain_box",
    "load_network",
    "potential",
    "validate_network",
    "SolverOptions",
    "global_min",
    "phase_scan",
    "stationary_points",
]
