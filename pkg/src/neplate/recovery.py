"""Recovery deformations ``u = y + x3 n + (x3^2/2) d`` built from a mid-plate immersion.

Their rescaled energies ``I^h(u)/h^2`` approach the limiting bending energy of
``y`` as the thickness goes to zero.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import MeshMismatch
from .grids import Grid3D, Mesh2D, cell_to_node_2d
from .kirchhoff import ImmersionField2D, _cell_metric, _immersion, isometry_defect, limit_energy
from .metric import MetricField, WellFrame
from .plate3d import DeformationField3D, energy_Ih
from .wells import QuadraticForm, lemma2_maps, q3

log = logging.getLogger(__name__)

RATIO_FLOOR = 1e-12


def d_field(y, metric: MetricField, mesh: Mesh2D, form: QuadraticForm = q3) -> np.ndarray:
    """Per-cell second-order corrector ``d = Q A^{-1} c``, shape ``(nx-1, ny-1, 3)``.

    ``Q = [d1 y, d2 y, n]`` and ``c`` is the optimal completion vector of the
    tangential strain ``A_tan^{-1} (grad y)^T grad n``.
    """
    imm = _immersion(y, mesh)
    imm.check_nondegenerate()
    defect = isometry_defect(imm, metric, mesh)
    if defect > 1e-3 * mesh.domain.area:
        log.warning("immersion is far from isometric (defect %.3g)", defect)
    frame = WellFrame.from_tangential(_cell_metric(metric, mesh))
    Q = np.concatenate([imm.grad, imm.cell_normals[..., None]], axis=-1)
    Q = np.where(imm.degenerate[..., None, None], 0.0, Q)
    return corrector(Q, frame, imm.shape_operator, form)


def corrector(Q: np.ndarray, frame: WellFrame, shape_term: np.ndarray, form: QuadraticForm = q3) -> np.ndarray:
    """``Q A^{-1} c`` with ``c`` the optimal completion of ``A_tan^{-1} shape_term``; linear in ``shape_term``."""
    F = np.linalg.inv(frame.A_tan) @ shape_term
    c = lemma2_maps(frame.A_tan, F, form).c
    return np.einsum("...ij,...jk,...k->...i", Q, frame.A_inv, c)


def nodal_d(y, metric: MetricField, mesh: Mesh2D, form: QuadraticForm = q3) -> np.ndarray:
    """Area-weighted nodal average of :func:`d_field`."""
    imm = _immersion(y, mesh)
    return cell_to_node_2d(d_field(imm, metric, mesh, form), imm.area_element)


def build_recovery(y, metric: MetricField, grid: Grid3D, form: QuadraticForm = q3) -> DeformationField3D:
    """Nodal ``u(x', x3) = y(x') + x3 n(x') + (x3^2/2) d(x')`` on ``grid``."""
    mesh = grid.mesh
    imm = _immersion(y, mesh)
    if imm.mesh.shape != mesh.shape:
        raise MeshMismatch("immersion mesh does not match the 3d grid")
    imm.check_nondegenerate()
    n = imm.nodal_normals
    d = nodal_d(imm, metric, mesh, form)
    x3 = grid.x3.copy()
    x3[grid.nz // 2] = 0.0
    z = x3[None, None, :, None]
    u = imm.y[:, :, None, :] + z * n[:, :, None, :] + 0.5 * z**2 * d[:, :, None, :]
    return DeformationField3D(grid, u)


@dataclass(frozen=True)
class RecoveryBundle:
    y: ImmersionField2D
    d: np.ndarray
    h: float
    u: DeformationField3D


def recovery_bundle(y, metric: MetricField, grid: Grid3D, form: QuadraticForm = q3) -> RecoveryBundle:
    imm = _immersion(y, grid.mesh)
    return RecoveryBundle(imm, d_field(imm, metric, grid.mesh, form), grid.h,
                          build_recovery(imm, metric, grid, form))


@dataclass(frozen=True)
class ConvergenceRow:
    h: float
    energy_over_h2: float
    limit_energy: float

    @property
    def ratio(self) -> float:
        if abs(self.limit_energy) < RATIO_FLOOR or abs(self.energy_over_h2) < RATIO_FLOOR:
            return math.nan
        return self.energy_over_h2 / self.limit_energy

    @property
    def relative_error(self) -> float:
        r = self.ratio
        return abs(r - 1.0) if math.isfinite(r) else math.nan

    def csv(self) -> str:
        r = self.ratio
        rs = "N/A" if math.isnan(r) else repr(r)
        return f"{self.h!r},{self.energy_over_h2!r},{self.limit_energy!r},{rs}"


CONVERGENCE_HEADER = "h,energy_over_h2,limit_energy,ratio"


def convergence_study(y, metric: MetricField, h_list, mesh: Mesh2D | None = None, nz: int = 7,
                      form: QuadraticForm = q3) -> list[ConvergenceRow]:
    """One row per thickness: recovery energy over ``h^2`` against the limit energy."""
    if isinstance(y, ImmersionField2D):
        mesh = y.mesh
    elif mesh is None:
        raise ValueError("a mesh is needed when y is a plain array")
    h_list = [float(h) for h in h_list]
    if any(b >= a for a, b in zip(h_list, h_list[1:])) or any(h <= 0 for h in h_list):
        raise ValueError("h_list must be positive and strictly decreasing")
    imm = _immersion(y, mesh)
    lim = limit_energy(imm, metric, mesh, form)
    rows = []
    for h in h_list:
        grid = Grid3D.over(mesh, nz, h)
        u = build_recovery(imm, metric, grid, form)
        e = energy_Ih(u, metric, grid) / h**2
        rows.append(ConvergenceRow(h, e, lim))
        log.info("recovery h=%g: I/h^2=%.8g limit=%.8g", h, e, lim)
    return rows


def write_convergence_csv(rows, path, preamble: str = "") -> None:
    with open(path, "w") as fh:
        if preamble:
            fh.write(preamble)
        fh.write(CONVERGENCE_HEADER + "\n")
        for r in rows:
            fh.write(r.csv() + "\n")
