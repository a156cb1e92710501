"""Simulation of discontinuous dynamical systems as differential inclusions.

Event-driven Filippov and Gelig-Leonov-Yakubovich solutions, saturation
regularization, benchmark models and stability diagnostics.
"""

from .core import (
    PiecewiseSystem,
    SegmentSet,
    Side,
    SignChannel,
    SurfaceClass,
    SwitchingSurface,
    classify_surface_point,
    filippov_sliding_field,
    gly_surface_field,
)
from .integrator import (
    EventKind,
    Mode,
    SolverConfig,
    Trajectory,
    integrate_ap,
    integrate_filippov,
    integrate_smooth,
    trajectory_distance,
)

__all__ = [
    "PiecewiseSystem", "SegmentSet", "Side", "SignChannel", "SurfaceClass", "SwitchingSurface",
    "classify_surface_point", "filippov_sliding_field", "gly_surface_field",
    "EventKind", "Mode", "SolverConfig", "Trajectory",
    "integrate_ap", "integrate_filippov", "integrate_smooth", "trajectory_distance",
]

__version__ = "0.1.0"
