"""Closed-form isometric immersions of the catalog metrics.

Each entry maps points ``(..., 2)`` to ``(..., 3)`` and realizes the metric
of the same name exactly: ``(grad y)^T grad y = g``.
"""

from __future__ import annotations

from typing import Callable

import numpy as np
from scipy.integrate import quad

from .grids import Mesh2D


def plane(x):
    x = np.asarray(x, dtype=float)
    return np.concatenate([x, np.zeros(x.shape[:-1] + (1,))], axis=-1)


def polar_plane(x):
    """Planar isometry ``(x1 cos x2, x1 sin x2, 0)`` of ``diag(1, x1^2)``."""
    x = np.asarray(x, dtype=float)
    r, t = x[..., 0], x[..., 1]
    return np.stack([r * np.cos(t), r * np.sin(t), np.zeros_like(r)], axis=-1)


def sphere_patch(x):
    """Unit-sphere parametrization by colatitude ``x1`` and longitude ``x2``."""
    x = np.asarray(x, dtype=float)
    a, b = x[..., 0], x[..., 1]
    return np.stack([np.sin(a) * np.cos(b), np.sin(a) * np.sin(b), np.cos(a)], axis=-1)


def _hyperbolic_height(t: float) -> float:
    # profile of the surface of revolution with radius cosh(s) in arclength s
    return quad(lambda s: np.sqrt(1.0 - np.sinh(s) ** 2), 0.0, t, epsabs=1e-14, epsrel=1e-14)[0]


def hyperbolic_patch(x):
    """Surface of revolution of constant curvature -1 realizing ``diag(1, cosh^2 x1)``.

    Valid for ``|x1| < asinh(1)``.
    """
    x = np.asarray(x, dtype=float)
    a, b = x[..., 0], x[..., 1]
    if np.any(np.abs(a) >= np.arcsinh(1.0)):
        raise ValueError("hyperbolic patch needs |x1| < asinh(1)")
    flat = a.ravel()
    uniq, inv = np.unique(flat, return_inverse=True)
    z = np.array([_hyperbolic_height(t) for t in uniq])[inv].reshape(a.shape)
    return np.stack([np.cosh(a) * np.cos(b), np.cosh(a) * np.sin(b), z], axis=-1)


IMMERSIONS: dict[str, Callable] = {
    "identity": plane,
    "polar_flat": polar_plane,
    "sphere": sphere_patch,
    "hyperbolic": hyperbolic_patch,
}


def candidate_immersion(metric_name: str) -> Callable | None:
    return IMMERSIONS.get(metric_name)


def sample_immersion(fn: Callable, mesh: Mesh2D) -> np.ndarray:
    """Nodal values ``(nx, ny, 3)`` of an immersion on ``mesh``."""
    return fn(mesh.nodes())
