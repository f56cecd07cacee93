"""Discrete immersions of the mid-plate and the limiting bending functional.

Per cell: the gradient ``grad y`` (3x2), the unit normal, and the shape term
``(grad y)^T grad n``.  Nodal normals are area-weighted averages of the
adjacent cell normals; ``grad n`` is the cell gradient of those.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import DegenerateImmersion, MeshMismatch
from .grids import Mesh2D, Rect, cell_gradient_2d, cell_gradient_2d_adjoint
from .metric import MetricField, WellFrame
from .optimize import EnergyReport, LBFGSOptions, lbfgs
from .wells import QuadraticForm, q2, q2_dist2, q2_gradient, q3

log = logging.getLogger(__name__)

DEGENERACY_TOL = 1e-10
MAX_DEGENERATE_FRACTION = 0.01
DEFAULT_PENALTIES = (1e2, 1e3, 1e4)


def _node_sum(cell_values: np.ndarray) -> np.ndarray:
    cx, cy = cell_values.shape[:2]
    out = np.zeros((cx + 1, cy + 1) + cell_values.shape[2:])
    for si in (0, 1):
        for sj in (0, 1):
            out[si : si + cx, sj : sj + cy] += cell_values
    return out


def _cell_gather(node_values: np.ndarray) -> np.ndarray:
    """Adjoint of :func:`_node_sum`."""
    return node_values[1:, 1:] + node_values[1:, :-1] + node_values[:-1, 1:] + node_values[:-1, :-1]


@dataclass(frozen=True)
class ImmersionField2D:
    mesh: Mesh2D
    y: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "y", self.mesh.check_nodal(self.y, 3))

    @cached_property
    def grad(self) -> np.ndarray:
        """``(nx-1, ny-1, 3, 2)``."""
        return cell_gradient_2d(self.y, self.mesh.dx, self.mesh.dy)

    @cached_property
    def cross(self) -> np.ndarray:
        return np.cross(self.grad[..., 0], self.grad[..., 1])

    @cached_property
    def area_element(self) -> np.ndarray:
        return np.linalg.norm(self.cross, axis=-1)

    @cached_property
    def degenerate(self) -> np.ndarray:
        return self.area_element < DEGENERACY_TOL

    @cached_property
    def cell_normals(self) -> np.ndarray:
        n = np.full(self.cross.shape, np.nan)
        ok = ~self.degenerate
        n[ok] = self.cross[ok] / self.area_element[ok][:, None]
        return n

    @cached_property
    def _nodal_sum(self) -> np.ndarray:
        # area-weighted sum of unit cell normals == sum of cross products
        return _node_sum(np.where(self.degenerate[..., None], 0.0, self.cross))

    @cached_property
    def nodal_normals(self) -> np.ndarray:
        N = self._nodal_sum
        norm = np.linalg.norm(N, axis=-1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            return N / norm

    @cached_property
    def grad_normal(self) -> np.ndarray:
        return cell_gradient_2d(self.nodal_normals, self.mesh.dx, self.mesh.dy)

    @cached_property
    def shape_operator(self) -> np.ndarray:
        """``(grad y)^T grad n`` per cell, ``(nx-1, ny-1, 2, 2)``."""
        return np.einsum("...ka,...kb->...ab", self.grad, self.grad_normal)

    def check_nondegenerate(self) -> None:
        frac = float(np.mean(self.degenerate))
        if frac > MAX_DEGENERATE_FRACTION:
            raise DegenerateImmersion(f"{frac:.1%} of cells have a vanishing area element")


def _immersion(y, mesh: Mesh2D) -> ImmersionField2D:
    return y if isinstance(y, ImmersionField2D) else ImmersionField2D(mesh, y)


def normal_field(y, mesh: Mesh2D) -> tuple[np.ndarray, np.ndarray]:
    """Per-cell unit normals (NaN where degenerate) and the degeneracy flags."""
    imm = _immersion(y, mesh)
    imm.check_nondegenerate()
    return imm.cell_normals, imm.degenerate


def _cell_metric(metric: MetricField, mesh: Mesh2D) -> np.ndarray:
    centers = mesh.cell_centers()
    if not np.all(metric.domain.contains(centers)):
        raise MeshMismatch("mesh extends outside the metric's domain")
    return metric.g(centers)


def isometry_defect(y, metric: MetricField, mesh: Mesh2D) -> float:
    """Midpoint quadrature of ``int |(grad y)^T grad y - g|^2``."""
    imm = _immersion(y, mesh)
    G = imm.grad
    D = np.einsum("...ka,...kb->...ab", G, G) - _cell_metric(metric, mesh)
    return float(np.sum(D * D) * mesh.cell_area)


def limit_integrand(y, metric: MetricField, mesh: Mesh2D, form: QuadraticForm = q3) -> np.ndarray:
    """Per-cell ``Q2(A_tan^{-1} (grad y)^T grad n)``."""
    imm = _immersion(y, mesh)
    imm.check_nondegenerate()
    frame = WellFrame.from_tangential(_cell_metric(metric, mesh))
    A_tan = frame.A_tan
    F = np.linalg.inv(A_tan) @ imm.shape_operator
    vals = q2(A_tan, F, form)
    return np.where(imm.degenerate, 0.0, vals)


def limit_energy(y, metric: MetricField, mesh: Mesh2D, form: QuadraticForm = q3) -> float:
    """``(1/24) int Q2(A_tan^{-1} (grad y)^T grad n) dx'`` by midpoint quadrature."""
    return float(np.sum(limit_integrand(y, metric, mesh, form)) * mesh.cell_area / 24.0)


class LimitProblem:
    """Penalized objective ``limit_energy + mu * isometry_defect`` with its exact gradient.

    Specialized to the default ``dist^2`` well, whose reduced form is ``2 |P F|^2``.
    """

    def __init__(self, metric: MetricField, mesh: Mesh2D):
        self.metric = metric
        self.mesh = mesh
        self.g = _cell_metric(metric, mesh)
        frame = WellFrame.from_tangential(self.g)
        self.A_tan = frame.A_tan
        self.A_tan_inv = np.linalg.inv(self.A_tan)

    def parts(self, y) -> tuple[float, np.ndarray, float, np.ndarray]:
        """``(limit energy, its gradient, isometry defect, its gradient)``."""
        m = self.mesh
        imm = ImmersionField2D(m, y)
        dA = m.cell_area
        G = imm.grad
        # isometry defect
        D = np.einsum("...ka,...kb->...ab", G, G) - self.g
        defect = float(np.sum(D * D) * dA)
        dG_def = 4.0 * dA * np.einsum("...ka,...ab->...kb", G, D)
        grad_def = cell_gradient_2d_adjoint(dG_def, m.dx, m.dy)

        # bending term
        ok = ~imm.degenerate
        F = self.A_tan_inv @ imm.shape_operator
        vals = np.where(ok, q2_dist2(self.A_tan, F), 0.0)
        energy = float(np.sum(vals) * dA / 24.0)
        Phi = np.where(ok[..., None, None], q2_gradient(self.A_tan, F), 0.0) * (dA / 24.0)
        Psi = self.A_tan_inv @ Phi  # A_tan^{-1} symmetric
        Gn = imm.grad_normal
        dG = np.einsum("...ka,...ba->...kb", Gn, Psi)
        dGn = np.einsum("...ka,...ab->...kb", G, Psi)
        dn = cell_gradient_2d_adjoint(dGn, m.dx, m.dy)
        N = imm._nodal_sum
        nrm = np.linalg.norm(N, axis=-1, keepdims=True)
        n = N / nrm
        dN = (dn - n * np.sum(n * dn, axis=-1, keepdims=True)) / nrm
        dcross = _cell_gather(dN)
        dcross = np.where(imm.degenerate[..., None], 0.0, dcross)
        a, b = G[..., 0], G[..., 1]
        dG[..., 0] += np.cross(b, dcross)
        dG[..., 1] += np.cross(dcross, a)
        grad_energy = cell_gradient_2d_adjoint(dG, m.dx, m.dy)
        return energy, grad_energy, defect, grad_def


def minimize_limit(metric: MetricField, mesh: Mesh2D, init, penalty_schedule=DEFAULT_PENALTIES,
                   opts: LBFGSOptions = LBFGSOptions()):
    """Minimize ``limit_energy + mu * isometry_defect`` for increasing ``mu``.

    Returns ``(ImmersionField2D, EnergyReport)``; the report's ``energy`` is the
    final limit energy and ``message`` records the final isometry defect.
    """
    problem = LimitProblem(metric, mesh)
    y = _immersion(init, mesh)
    y.check_nondegenerate()
    x = y.y.ravel().copy()
    shape = mesh.shape + (3,)
    reports = []
    for mu in penalty_schedule:
        def fun(v, mu=mu):
            e, ge, d, gd = problem.parts(v.reshape(shape))
            return e + mu * d, (ge + mu * gd).ravel()

        try:
            x, rep = lbfgs(fun, x, opts)
        except DegenerateImmersion:
            log.warning("minimize_limit aborted at mu=%g: degenerate immersion", mu)
            break
        reports.append(rep)
        log.info("minimize_limit mu=%g: objective %.6g, %d iterations", mu, rep.energy, rep.iterations)
    final = ImmersionField2D(mesh, x.reshape(shape))
    e, _, d, _ = problem.parts(final.y)
    report = EnergyReport(
        energy=e,
        grad_norm=reports[-1].grad_norm if reports else float("nan"),
        iterations=sum(r.iterations for r in reports),
        converged=bool(reports) and all(r.converged for r in reports),
        wall_time=sum(r.wall_time for r in reports),
        message=f"isometry_defect={d:.6g}",
    )
    report.defect = d
    return final, report


# -- checkpoints --------------------------------------------------------------


def write_immersion(imm: ImmersionField2D, path) -> None:
    """CSV ``i,j,y1,y2,y3`` preceded by ``# nx=<nx> ny=<ny>``."""
    m = imm.mesh
    d = m.domain
    with open(path, "w") as fh:
        fh.write(f"# nx={m.nx} ny={m.ny} domain={d.x1min!r},{d.x1max!r},{d.x2min!r},{d.x2max!r}\n")
        fh.write("i,j,y1,y2,y3\n")
        for i, j in np.ndindex(m.nx, m.ny):
            v = imm.y[i, j]
            fh.write(f"{i},{j},{float(v[0])!r},{float(v[1])!r},{float(v[2])!r}\n")


def read_immersion(path, domain: Rect | None = None) -> ImmersionField2D:
    path = Path(path)
    with open(path) as fh:
        header = fh.readline()
    if not header.startswith("#"):
        raise MeshMismatch("immersion checkpoint is missing its header line")
    meta = dict(tok.split("=", 1) for tok in header[1:].split())
    if domain is None:
        if "domain" not in meta:
            raise MeshMismatch("checkpoint has no domain; pass one explicitly")
        domain = Rect(*(float(v) for v in meta["domain"].split(",")))
    mesh = Mesh2D(domain, int(meta["nx"]), int(meta["ny"]))
    rows = np.loadtxt(path, delimiter=",", skiprows=2, ndmin=2)
    if len(rows) != mesh.nx * mesh.ny:
        raise MeshMismatch("immersion checkpoint row count does not match its header")
    y = np.empty(mesh.shape + (3,))
    idx = rows[:, :2].astype(int)
    y[idx[:, 0], idx[:, 1]] = rows[:, 2:]
    return ImmersionField2D(mesh, y)
