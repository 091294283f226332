"""Extremals of left-invariant polyhedral Finsler structures on Lie groups."""

from .lie_algebra import LieAlgebra, catalog as algebra
from .polynorm import PolyNorm
from .dynamics import ControlPolicy, Trajectory, integrate, verify_extremal
from .curvature import flag_curvature
from .uniqueness import classify_edge, classify_vertex

__all__ = [
    "LieAlgebra", "algebra", "PolyNorm", "ControlPolicy", "Trajectory", "integrate",
    "verify_extremal", "flag_curvature", "classify_edge", "classify_vertex",
]
__version__ = "0.1.0"
