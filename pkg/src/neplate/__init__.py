"""Numerical tools for thin elastic plates whose rest state is a prescribed Riemannian metric.

Submodules: ``metric`` (catalog metrics and curvature), ``wells`` (distance to
``SO(3)A`` and reduced quadratic forms), ``plate3d`` (discrete 3d energy),
``kirchhoff`` (limiting bending functional), ``recovery`` (recovery sequences),
``rigidity`` (sampled rigidity estimate) and ``experiments``/``cli``.
"""

from .errors import (
    ConfigError,
    DegenerateImmersion,
    EmptyResult,
    LineSearchFailure,
    MeshMismatch,
    NeplateError,
    NotSPD,
    OutOfDomain,
    TooFewRows,
)
from .grids import Grid3D, Mesh2D, Rect
from .metric import AnalyticMetric, SampledMetric, catalog_metric, gaussian_curvature, riemann_flat_3d
from .wells import dist_to_well, project_sym_Ainv, q2, q2_bruteforce, q3

__version__ = "0.1.0"
