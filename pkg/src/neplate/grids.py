"""Structured rectangles, 2d meshes, 3d plate grids and their cell-gradient operators.

All nodal arrays are indexed ``[i, j(, k), component]`` with ``i`` running along
x1, ``j`` along x2 and ``k`` through the thickness.  Cell gradients are the
bilinear/trilinear element gradients evaluated at the cell center, i.e. the
average of the edge differences in each direction.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import MeshMismatch

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle ``[x1min, x1max] x [x2min, x2max]``."""

    x1min: float
    x1max: float
    x2min: float
    x2max: float

    def __post_init__(self):
        if not (self.x1max > self.x1min and self.x2max > self.x2min):
            raise ValueError(f"empty rectangle {self}")

    @property
    def lengths(self) -> tuple[float, float]:
        return self.x1max - self.x1min, self.x2max - self.x2min

    @property
    def area(self) -> float:
        a, b = self.lengths
        return a * b

    def contains(self, x, margin=0.0, atol: float = 1e-12) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        m1, m2 = np.broadcast_to(np.asarray(margin, dtype=float), (2,))
        return (
            (x[..., 0] >= self.x1min + m1 - atol)
            & (x[..., 0] <= self.x1max - m1 + atol)
            & (x[..., 1] >= self.x2min + m2 - atol)
            & (x[..., 1] <= self.x2max - m2 + atol)
        )

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x1min, self.x1max, self.x2min, self.x2max)


@dataclass(frozen=True)
class Mesh2D:
    """Uniform node lattice on a rectangle (the plate mid-surface)."""

    domain: Rect
    nx: int
    ny: int

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise ValueError("a mesh needs at least 2 nodes per axis")

    @cached_property
    def x1(self) -> np.ndarray:
        return np.linspace(self.domain.x1min, self.domain.x1max, self.nx)

    @cached_property
    def x2(self) -> np.ndarray:
        return np.linspace(self.domain.x2min, self.domain.x2max, self.ny)

    @property
    def dx(self) -> float:
        return self.domain.lengths[0] / (self.nx - 1)

    @property
    def dy(self) -> float:
        return self.domain.lengths[1] / (self.ny - 1)

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    def nodes(self) -> np.ndarray:
        """Node coordinates, shape ``(nx, ny, 2)``."""
        X1, X2 = np.meshgrid(self.x1, self.x2, indexing="ij")
        return np.stack([X1, X2], axis=-1)

    def cell_centers(self) -> np.ndarray:
        """Cell center coordinates, shape ``(nx-1, ny-1, 2)``."""
        c1 = 0.5 * (self.x1[1:] + self.x1[:-1])
        c2 = 0.5 * (self.x2[1:] + self.x2[:-1])
        C1, C2 = np.meshgrid(c1, c2, indexing="ij")
        return np.stack([C1, C2], axis=-1)

    def check_nodal(self, y: np.ndarray, ncomp: int | None = None) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if y.shape[:2] != self.shape or (ncomp is not None and y.shape[2:] != (ncomp,)):
            raise MeshMismatch(f"nodal array of shape {y.shape} does not fit mesh {self.shape}")
        return y


@dataclass(frozen=True)
class Grid3D:
    """Structured grid on the plate ``Omega x (-h/2, h/2)``.

    ``nz`` must be odd so that the mid-plane ``x3 = 0`` is a node layer.
    """

    domain: Rect
    nx: int
    ny: int
    nz: int
    h: float

    def __post_init__(self):
        if self.nz < 3 or self.nz % 2 == 0:
            raise ValueError(f"nz must be odd and >= 3, got {self.nz}")
        if self.nx < 2 or self.ny < 2:
            raise ValueError("a grid needs at least 2 nodes per in-plane axis")
        if not self.h > 0:
            raise ValueError("thickness h must be positive")
        if not self.aspect_ok:
            log.debug(
                "thin-direction spacing dz=%.3g exceeds in-plane spacing %.3g",
                self.dz,
                min(self.dx, self.dy),
            )

    @classmethod
    def over(cls, mesh: Mesh2D, nz: int, h: float) -> "Grid3D":
        return cls(mesh.domain, mesh.nx, mesh.ny, nz, h)

    @property
    def mesh(self) -> Mesh2D:
        return Mesh2D(self.domain, self.nx, self.ny)

    @property
    def dx(self) -> float:
        return self.domain.lengths[0] / (self.nx - 1)

    @property
    def dy(self) -> float:
        return self.domain.lengths[1] / (self.ny - 1)

    @property
    def dz(self) -> float:
        return self.h / (self.nz - 1)

    @property
    def aspect_ok(self) -> bool:
        return self.dz <= min(self.dx, self.dy) * (1 + 1e-12)

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.nx, self.ny, self.nz)

    @property
    def n_cells(self) -> int:
        return (self.nx - 1) * (self.ny - 1) * (self.nz - 1)

    @property
    def cell_volume(self) -> float:
        return self.dx * self.dy * self.dz

    @property
    def volume(self) -> float:
        return self.domain.area * self.h

    @property
    def diameter(self) -> float:
        a, b = self.domain.lengths
        return float(np.sqrt(a * a + b * b + self.h * self.h))

    @cached_property
    def x3(self) -> np.ndarray:
        return np.linspace(-self.h / 2, self.h / 2, self.nz)

    def nodes(self) -> np.ndarray:
        """Node coordinates, shape ``(nx, ny, nz, 3)``."""
        m = self.mesh
        X1, X2, X3 = np.meshgrid(m.x1, m.x2, self.x3, indexing="ij")
        return np.stack([X1, X2, X3], axis=-1)

    def cell_x3(self) -> np.ndarray:
        return 0.5 * (self.x3[1:] + self.x3[:-1])

    def check_nodal(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape != self.shape + (3,):
            raise MeshMismatch(f"deformation of shape {u.shape} does not fit grid {self.shape}")
        return u


# -- 2d operators -------------------------------------------------------------


def cell_gradient_2d(y: np.ndarray, dx: float, dy: float) -> np.ndarray:
    """Bilinear-element gradient at cell centers.

    ``y`` has shape ``(nx, ny, m)``; the result has shape ``(nx-1, ny-1, m, 2)``.
    """
    d1 = y[1:, :] - y[:-1, :]
    d1 = 0.5 * (d1[:, 1:] + d1[:, :-1]) / dx
    d2 = y[:, 1:] - y[:, :-1]
    d2 = 0.5 * (d2[1:, :] + d2[:-1, :]) / dy
    return np.stack([d1, d2], axis=-1)


def cell_gradient_2d_adjoint(G: np.ndarray, dx: float, dy: float) -> np.ndarray:
    """Adjoint of :func:`cell_gradient_2d`: maps cell covectors back to nodes."""
    ncx, ncy = G.shape[:2]
    out = np.zeros((ncx + 1, ncy + 1) + G.shape[2:-1])
    w1 = 0.5 * G[..., 0] / dx
    w2 = 0.5 * G[..., 1] / dy
    for sj in (0, 1):
        out[1:, sj : sj + ncy] += w1
        out[:-1, sj : sj + ncy] -= w1
    for si in (0, 1):
        out[si : si + ncx, 1:] += w2
        out[si : si + ncx, :-1] -= w2
    return out


def cell_average_2d(y: np.ndarray) -> np.ndarray:
    return 0.25 * (y[1:, 1:] + y[1:, :-1] + y[:-1, 1:] + y[:-1, :-1])


def cell_to_node_2d(values: np.ndarray, weights: np.ndarray | None = None) -> np.ndarray:
    """Weighted average of per-cell values onto the nodes touching each cell."""
    ncx, ncy = values.shape[:2]
    if weights is None:
        weights = np.ones((ncx, ncy))
    wv = values * weights.reshape(weights.shape + (1,) * (values.ndim - 2))
    num = np.zeros((ncx + 1, ncy + 1) + values.shape[2:])
    den = np.zeros((ncx + 1, ncy + 1))
    for si in (0, 1):
        for sj in (0, 1):
            num[si : si + ncx, sj : sj + ncy] += wv
            den[si : si + ncx, sj : sj + ncy] += weights
    return num / den.reshape(den.shape + (1,) * (values.ndim - 2))


# -- 3d operators -------------------------------------------------------------


def _corner_mean(d: np.ndarray, axes: tuple[int, int]) -> np.ndarray:
    a, b = axes
    s = [slice(None)] * d.ndim
    out = 0.0
    for pa in (slice(1, None), slice(None, -1)):
        for pb in (slice(1, None), slice(None, -1)):
            s[a], s[b] = pa, pb
            out = out + d[tuple(s)]
    return 0.25 * out


def cell_gradient_3d(u: np.ndarray, dx: float, dy: float, dz: float) -> np.ndarray:
    """Trilinear-element gradient at cell centers.

    ``u`` has shape ``(nx, ny, nz, 3)``; the result ``G`` has shape
    ``(nx-1, ny-1, nz-1, 3, 3)`` with ``G[..., a, k] = d u_a / d x_k``.
    """
    d1 = _corner_mean(u[1:] - u[:-1], (1, 2)) / dx
    d2 = _corner_mean(u[:, 1:] - u[:, :-1], (0, 2)) / dy
    d3 = _corner_mean(u[:, :, 1:] - u[:, :, :-1], (0, 1)) / dz
    return np.stack([d1, d2, d3], axis=-1)


def cell_gradient_3d_adjoint(G: np.ndarray, dx: float, dy: float, dz: float) -> np.ndarray:
    """Adjoint of :func:`cell_gradient_3d`."""
    cx, cy, cz = G.shape[:3]
    out = np.zeros((cx + 1, cy + 1, cz + 1, G.shape[3]))
    w = (0.25 * G[..., 0] / dx, 0.25 * G[..., 1] / dy, 0.25 * G[..., 2] / dz)
    n = (cx, cy, cz)
    for axis in range(3):
        others = [ax for ax in range(3) if ax != axis]
        for pa in (0, 1):
            for pb in (0, 1):
                hi = [None, None, None]
                lo = [None, None, None]
                hi[axis] = slice(1, None)
                lo[axis] = slice(None, -1)
                for ax, p in zip(others, (pa, pb)):
                    hi[ax] = lo[ax] = slice(p, p + n[ax])
                out[tuple(hi)] += w[axis]
                out[tuple(lo)] -= w[axis]
    return out
