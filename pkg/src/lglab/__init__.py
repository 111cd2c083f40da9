"""Isoperimetric profiles and curvature-constrained conformal deformations."""

__version__ = "0.1.0"

from .grid import SphereGrid
from .geometry import (
    BASE_RP2,
    BASE_SPHERE,
    ConformalMetric,
    Curve,
    CurvatureField,
    conformal_ricci_nd,
    curve_length,
    gauss_curvature,
    geodesic_curvature,
    integrate_volume,
    laplace_beltrami,
)

__all__ = [
    "SphereGrid",
    "ConformalMetric",
    "Curve",
    "CurvatureField",
    "BASE_SPHERE",
    "BASE_RP2",
    "laplace_beltrami",
    "gauss_curvature",
    "conformal_ricci_nd",
    "integrate_volume",
    "curve_length",
    "geodesic_curvature",
    "__version__",
]
