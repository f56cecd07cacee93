"""The rescaled 3d energy of a thin plate with a prescribed metric, and its minimization.

Deformations live on a :class:`~neplate.grids.Grid3D` with trilinear elements and
one midpoint quadrature point per cell.  No boundary conditions are imposed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import MeshMismatch
from .grids import Grid3D, Rect, cell_gradient_3d, cell_gradient_3d_adjoint
from .metric import MetricField, WellFrame
from .optimize import EnergyReport, LBFGSOptions, lbfgs
from .wells import DIST2, StoredEnergy

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DeformationField3D:
    grid: Grid3D
    u: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "u", self.grid.check_nodal(self.u))

    @cached_property
    def gradient(self) -> np.ndarray:
        """Cell-center gradients, shape ``(nx-1, ny-1, nz-1, 3, 3)``."""
        g = self.grid
        return cell_gradient_3d(self.u, g.dx, g.dy, g.dz)

    def midplane(self) -> np.ndarray:
        return self.u[:, :, self.grid.nz // 2, :]

    def rigidly_moved(self, R: np.ndarray, c) -> "DeformationField3D":
        return DeformationField3D(self.grid, self.u @ np.asarray(R).T + np.asarray(c))


class PlateEnergy:
    """Energy ``I^h(u) = (1/h) int W(x', grad u)`` for a fixed metric and grid.

    Square roots of the metric at the cell centers are computed once.
    """

    def __init__(self, metric: MetricField, grid: Grid3D, energy: StoredEnergy = DIST2):
        if not np.all(metric.domain.contains(grid.mesh.cell_centers())):
            raise MeshMismatch("grid extends outside the metric's domain")
        self.metric = metric
        self.grid = grid
        self.energy = energy
        frame = WellFrame.from_tangential(metric.g(grid.mesh.cell_centers()))
        cz = grid.nz - 1
        self.A = np.ascontiguousarray(
            np.broadcast_to(frame.A[:, :, None], frame.A.shape[:2] + (cz, 3, 3))
        ).reshape(-1, 3, 3)
        self.weight = grid.cell_volume / grid.h

    def _cells(self, u):
        g = self.grid
        G = cell_gradient_3d(u, g.dx, g.dy, g.dz)
        return G.reshape(-1, 3, 3)

    def value(self, u) -> float:
        u = self.grid.check_nodal(u)
        W, _ = self.energy.evaluate(self._cells(u), self.A)
        return float(np.sum(W) * self.weight)

    def value_and_gradient(self, u) -> tuple[float, np.ndarray]:
        u = self.grid.check_nodal(u)
        g = self.grid
        W, dW = self.energy.evaluate(self._cells(u), self.A)
        dW = dW.reshape((g.nx - 1, g.ny - 1, g.nz - 1, 3, 3)) * self.weight
        grad = cell_gradient_3d_adjoint(dW, g.dx, g.dy, g.dz)
        return float(np.sum(W) * self.weight), grad

    def densities(self, u) -> np.ndarray:
        g = self.grid
        W, _ = self.energy.evaluate(self._cells(self.grid.check_nodal(u)), self.A)
        return W.reshape(g.nx - 1, g.ny - 1, g.nz - 1)


def _field_array(u) -> np.ndarray:
    return u.u if isinstance(u, DeformationField3D) else np.asarray(u, dtype=float)


def energy_Ih(u, metric: MetricField, grid: Grid3D, energy: StoredEnergy = DIST2) -> float:
    """Midpoint-quadrature value of ``(1/h) int_{Omega^h} W(x', grad u) dx``."""
    return PlateEnergy(metric, grid, energy).value(_field_array(u))


def energy_gradient(u, metric: MetricField, grid: Grid3D, energy: StoredEnergy = DIST2) -> np.ndarray:
    """Exact gradient of the discrete :func:`energy_Ih` with respect to nodal values."""
    return PlateEnergy(metric, grid, energy).value_and_gradient(_field_array(u))[1]


def minimize_Ih(metric: MetricField, grid: Grid3D, init, opts: LBFGSOptions = LBFGSOptions(),
                energy: StoredEnergy = DIST2, problem: PlateEnergy | None = None):
    """Quasi-Newton descent on the discrete 3d energy, starting from ``init``.

    Returns ``(DeformationField3D, EnergyReport)``; the returned energy never
    exceeds the energy of ``init``.
    """
    problem = problem or PlateEnergy(metric, grid, energy)
    shape = grid.shape + (3,)

    def fun(x):
        E, G = problem.value_and_gradient(x.reshape(shape))
        return E, G.ravel()

    x, report = lbfgs(fun, _field_array(init), opts)
    log.info("minimize_Ih h=%g: E=%.6g after %d iterations (%s)", grid.h, report.energy,
             report.iterations, report.message)
    return DeformationField3D(grid, x.reshape(shape)), report


# -- initial deformations -----------------------------------------------------


def flat_deformation(grid: Grid3D) -> DeformationField3D:
    return DeformationField3D(grid, grid.nodes())


def perturbed_deformation(base: DeformationField3D, amplitude: float, seed: int) -> DeformationField3D:
    if amplitude == 0:
        return DeformationField3D(base.grid, base.u.copy())
    rng = np.random.default_rng(seed)
    noise = rng.uniform(-amplitude, amplitude, size=base.u.shape)
    return DeformationField3D(base.grid, base.u + noise)


def init_deformation(kind: str, grid: Grid3D, *, metric: MetricField | None = None, y=None,
                     base: DeformationField3D | None = None, amplitude: float = 0.0,
                     seed: int = 0) -> DeformationField3D:
    """``kind`` is ``"flat"``, ``"from_recovery"`` (needs ``y`` and ``metric``) or ``"perturbed"``."""
    if kind == "flat":
        return flat_deformation(grid)
    if kind == "from_recovery":
        from .recovery import build_recovery

        if y is None or metric is None:
            raise ValueError("from_recovery needs an immersion y and a metric")
        return build_recovery(y, metric, grid)
    if kind == "perturbed":
        return perturbed_deformation(base if base is not None else flat_deformation(grid), amplitude, seed)
    raise ValueError(f"unknown initial deformation kind {kind!r}")


# -- checkpoints --------------------------------------------------------------


def write_deformation(field_: DeformationField3D, path) -> None:
    """CSV ``i,j,k,u1,u2,u3`` preceded by ``# h=<h> nx=<nx> ny=<ny> nz=<nz>``."""
    g = field_.grid
    d = g.domain
    with open(path, "w") as fh:
        fh.write(f"# h={g.h!r} nx={g.nx} ny={g.ny} nz={g.nz} "
                 f"domain={d.x1min!r},{d.x1max!r},{d.x2min!r},{d.x2max!r}\n")
        fh.write("i,j,k,u1,u2,u3\n")
        for (i, j, k) in np.ndindex(*g.shape):
            u = field_.u[i, j, k]
            fh.write(f"{i},{j},{k},{float(u[0])!r},{float(u[1])!r},{float(u[2])!r}\n")


def _parse_header(line: str) -> dict[str, str]:
    if not line.startswith("#"):
        raise MeshMismatch("checkpoint is missing its '# key=value' header line")
    return dict(tok.split("=", 1) for tok in line[1:].split())


def read_deformation(path, domain: Rect | None = None) -> DeformationField3D:
    path = Path(path)
    with open(path) as fh:
        meta = _parse_header(fh.readline())
    if domain is None:
        if "domain" not in meta:
            raise MeshMismatch("checkpoint has no domain; pass one explicitly")
        domain = Rect(*(float(v) for v in meta["domain"].split(",")))
    grid = Grid3D(domain, int(meta["nx"]), int(meta["ny"]), int(meta["nz"]), float(meta["h"]))
    rows = np.loadtxt(path, delimiter=",", skiprows=2, ndmin=2)
    if len(rows) != grid.nx * grid.ny * grid.nz:
        raise MeshMismatch("checkpoint row count does not match its header")
    u = np.empty(grid.shape + (3,))
    idx = rows[:, :3].astype(int)
    u[idx[:, 0], idx[:, 1], idx[:, 2]] = rows[:, 3:]
    return DeformationField3D(grid, u)
