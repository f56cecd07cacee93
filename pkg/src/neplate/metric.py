"""Two-dimensional Riemannian metrics on a rectangle and their 3d plate extension.

A :class:`MetricField` evaluates ``g``, its first derivatives ``dg[..., a, b, k]
= d_k g_ab`` and second derivatives ``d2g[..., a, b, k, l]`` at arrays of points
of shape ``(..., 2)``.  Catalog metrics do this analytically; :class:`SampledMetric`
uses fourth-order finite differences on its grid and bicubic interpolation
between nodes.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.interpolate import RectBivariateSpline

from .errors import MeshMismatch, NotSPD, OutOfDomain
from .grids import Mesh2D, Rect

FLAT_TOL_ANALYTIC = 1e-8
FLAT_TOL_SAMPLED = 1e-5
_SYM_TOL = 1e-12


# -- matrix square roots ------------------------------------------------------


def _check_spd(g: np.ndarray) -> None:
    scale = np.maximum(1.0, np.abs(g).max(axis=(-2, -1)))
    asym = np.abs(g - np.swapaxes(g, -1, -2)).max(axis=(-2, -1))
    if np.any(asym > _SYM_TOL * scale):
        raise NotSPD(f"matrix not symmetric (asymmetry {asym.max():.3g})")


def sqrt_metric(g) -> np.ndarray:
    """Symmetric positive definite square root of an SPD matrix (or stack of them)."""
    g = np.asarray(g, dtype=float)
    _check_spd(g)
    gs = 0.5 * (g + np.swapaxes(g, -1, -2))
    lam, V = np.linalg.eigh(gs)
    if np.any(~(lam > 0)):
        raise NotSPD(f"matrix has a non-positive eigenvalue ({np.min(lam):.3g})")
    A = (V * np.sqrt(lam)[..., None, :]) @ np.swapaxes(V, -1, -2)
    return 0.5 * (A + np.swapaxes(A, -1, -2))


def extend_metric_3d(g_tan) -> np.ndarray:
    """Block extension ``[[g_tan, 0], [0, 1]]`` of a tangential 2x2 metric."""
    g_tan = np.asarray(g_tan, dtype=float)
    _check_spd(g_tan)
    if np.any(~(np.linalg.eigvalsh(0.5 * (g_tan + np.swapaxes(g_tan, -1, -2))) > 0)):
        raise NotSPD("tangential metric is not positive definite")
    out = np.zeros(g_tan.shape[:-2] + (3, 3))
    out[..., :2, :2] = g_tan
    out[..., 2, 2] = 1.0
    return out


@dataclass(frozen=True)
class WellFrame:
    """Cached square-root data of the block metric at one point or a stack of points."""

    A: np.ndarray
    A_inv: np.ndarray
    A_tan_inv_sq: np.ndarray
    sqrt_det_g: np.ndarray

    @classmethod
    def from_tangential(cls, g_tan) -> "WellFrame":
        g_tan = np.asarray(g_tan, dtype=float)
        A_tan = sqrt_metric(g_tan)
        A = extend_metric_3d(A_tan)
        A_inv = np.linalg.inv(A)
        return cls(
            A=A,
            A_inv=A_inv,
            A_tan_inv_sq=np.linalg.inv(g_tan),
            sqrt_det_g=np.sqrt(np.linalg.det(g_tan)),
        )

    @property
    def A_tan(self) -> np.ndarray:
        return self.A[..., :2, :2]


# -- metric fields ------------------------------------------------------------


class MetricField:
    """Base class; subclasses provide ``_eval(x) -> (g, dg, d2g)``."""

    domain: Rect
    derivative_step: float
    analytic: bool = True
    name: str = "metric"

    @property
    def interior_margin(self) -> tuple[float, float]:
        return (0.0, 0.0)

    @property
    def flat_tol(self) -> float:
        return FLAT_TOL_ANALYTIC if self.analytic else FLAT_TOL_SAMPLED

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        margin = self.interior_margin
        if not np.all(self.domain.contains(x, margin=margin)):
            raise OutOfDomain(f"point(s) outside {self.domain} (margin {margin})")
        return x

    def g(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if not np.all(self.domain.contains(x)):
            raise OutOfDomain(f"point(s) outside {self.domain}")
        return self._g(x)

    def dg(self, x) -> np.ndarray:
        return self._eval(self._check(x))[1]

    def d2g(self, x) -> np.ndarray:
        return self._eval(self._check(x))[2]

    def jet(self, x) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self._eval(self._check(x))

    def frame(self, x) -> WellFrame:
        return WellFrame.from_tangential(self.g(x))

    def _g(self, x):
        return self._eval(x)[0]

    def _eval(self, x):
        raise NotImplementedError

    def describe(self) -> str:
        return self.name


class AnalyticMetric(MetricField):
    """Metric given by a callable returning ``(g, dg, d2g)`` for points ``(..., 2)``."""

    analytic = True

    def __init__(self, name: str, domain: Rect, jet: Callable, params: dict | None = None,
                 derivative_step: float = 1e-3):
        self.name = name
        self.domain = domain
        self._jet = jet
        self.params = dict(params or {})
        self.derivative_step = derivative_step

    def _eval(self, x):
        return self._jet(np.asarray(x, dtype=float))

    def describe(self) -> str:
        if not self.params:
            return self.name
        ps = ",".join(f"{k}={v:g}" for k, v in sorted(self.params.items()))
        return f"{self.name}({ps})"


def _diag_jet(G, dG, d2G):
    """Jet of ``diag(1, G(x1))``."""

    def jet(x):
        s = x.shape[:-1]
        x1 = x[..., 0]
        g = np.zeros(s + (2, 2))
        g[..., 0, 0] = 1.0
        g[..., 1, 1] = G(x1)
        dg = np.zeros(s + (2, 2, 2))
        dg[..., 1, 1, 0] = dG(x1)
        d2g = np.zeros(s + (2, 2, 2, 2))
        d2g[..., 1, 1, 0, 0] = d2G(x1)
        return g, dg, d2g

    return jet


def _identity_jet(x):
    s = x.shape[:-1]
    g = np.broadcast_to(np.eye(2), s + (2, 2)).copy()
    return g, np.zeros(s + (2, 2, 2)), np.zeros(s + (2, 2, 2, 2))


def _conformal_jet(f, df, d2f):
    """Jet of ``f(x) * Id`` given the scalar jet of ``f``."""

    def jet(x):
        eye = np.eye(2)
        fv, dfv, d2fv = f(x), df(x), d2f(x)
        g = fv[..., None, None] * eye
        dg = eye[:, :, None] * dfv[..., None, None, :]
        d2g = eye[:, :, None, None] * d2fv[..., None, None, :, :]
        return g, dg, d2g

    return jet


def radial_bump_jet(c: float, sigma: float):
    s2 = sigma * sigma

    def f(x):
        return 1.0 + c * np.exp(-(x**2).sum(-1) / s2)

    def df(x):
        e = c * np.exp(-(x**2).sum(-1) / s2)
        return (-2.0 / s2) * e[..., None] * x

    def d2f(x):
        e = c * np.exp(-(x**2).sum(-1) / s2)
        outer = x[..., :, None] * x[..., None, :]
        return e[..., None, None] * (4.0 / s2**2 * outer - 2.0 / s2 * np.eye(2))

    return _conformal_jet(f, df, d2f)


# -- smooth diffeomorphisms and their pull-back metrics -----------------------


@dataclass(frozen=True)
class Diffeomorphism:
    """A smooth planar map given with derivatives up to third order.

    ``jet(x)`` returns ``(phi, D1, D2, D3)`` with ``D1[..., k, i] = d_i phi_k``,
    ``D2[..., k, i, j]`` and ``D3[..., k, i, j, l]`` the higher derivatives.
    """

    name: str
    jet: Callable

    def __call__(self, x):
        return self.jet(np.asarray(x, dtype=float))[0]


def _shear_sine(a: float):
    def jet(x):
        s = x.shape[:-1]
        x1, x2 = x[..., 0], x[..., 1]
        phi = np.stack([x1 + a * np.sin(x2), x2 + a * np.sin(x1)], -1)
        D1 = np.zeros(s + (2, 2))
        D1[..., 0, 0] = 1
        D1[..., 0, 1] = a * np.cos(x2)
        D1[..., 1, 0] = a * np.cos(x1)
        D1[..., 1, 1] = 1
        D2 = np.zeros(s + (2, 2, 2))
        D2[..., 0, 1, 1] = -a * np.sin(x2)
        D2[..., 1, 0, 0] = -a * np.sin(x1)
        D3 = np.zeros(s + (2, 2, 2, 2))
        D3[..., 0, 1, 1, 1] = -a * np.cos(x2)
        D3[..., 1, 0, 0, 0] = -a * np.cos(x1)
        return phi, D1, D2, D3

    return Diffeomorphism(f"shear_sine({a:g})", jet)


def _polar():
    def jet(x):
        s = x.shape[:-1]
        r, t = x[..., 0], x[..., 1]
        c, sn = np.cos(t), np.sin(t)
        phi = np.stack([r * c, r * sn], -1)
        D1 = np.zeros(s + (2, 2))
        D1[..., 0, 0], D1[..., 0, 1] = c, -r * sn
        D1[..., 1, 0], D1[..., 1, 1] = sn, r * c
        D2 = np.zeros(s + (2, 2, 2))
        D2[..., 0, 0, 1] = D2[..., 0, 1, 0] = -sn
        D2[..., 0, 1, 1] = -r * c
        D2[..., 1, 0, 1] = D2[..., 1, 1, 0] = c
        D2[..., 1, 1, 1] = -r * sn
        D3 = np.zeros(s + (2, 2, 2, 2))
        for idx in [(0, 1, 1), (1, 0, 1), (1, 1, 0)]:
            D3[(...,) + (0,) + idx] = -c
            D3[(...,) + (1,) + idx] = -sn
        D3[..., 0, 1, 1, 1] = r * sn
        D3[..., 1, 1, 1, 1] = -r * c
        return phi, D1, D2, D3

    return Diffeomorphism("polar", jet)


def _quadratic_shear(a: float):
    def jet(x):
        s = x.shape[:-1]
        x1, x2 = x[..., 0], x[..., 1]
        phi = np.stack([x1 + a * x2**2, x2 + a * x1**2], -1)
        D1 = np.zeros(s + (2, 2))
        D1[..., 0, 0] = 1
        D1[..., 0, 1] = 2 * a * x2
        D1[..., 1, 0] = 2 * a * x1
        D1[..., 1, 1] = 1
        D2 = np.zeros(s + (2, 2, 2))
        D2[..., 0, 1, 1] = 2 * a
        D2[..., 1, 0, 0] = 2 * a
        return phi, D1, D2, np.zeros(s + (2, 2, 2, 2))

    return Diffeomorphism(f"quadratic_shear({a:g})", jet)


def _exp_map(a: float):
    """(x1, x2) -> (exp(a x1) cos x2, exp(a x1) sin x2) / a, a conformal map."""

    def jet(x):
        s = x.shape[:-1]
        e = np.exp(a * x[..., 0])
        c, sn = np.cos(x[..., 1]), np.sin(x[..., 1])
        phi = np.stack([e * c, e * sn], -1) / a
        # derivatives of e*c/a and e*sn/a: d1 multiplies by a, d2 rotates (c, s) -> (-s, c)
        base = [np.stack([c, sn], -1), np.stack([-sn, c], -1), np.stack([-c, -sn], -1),
                np.stack([sn, -c], -1)]
        out = [None, np.zeros(s + (2, 2)), np.zeros(s + (2, 2, 2)), np.zeros(s + (2, 2, 2, 2))]
        for order in (1, 2, 3):
            arr = out[order]
            for idx in np.ndindex(*(2,) * order):
                n1 = idx.count(0)
                n2 = order - n1
                val = e[..., None] * a ** (n1 - 1) * base[n2]
                arr[(...,) + (slice(None),) + idx] = val
        return phi, out[1], out[2], out[3]

    return Diffeomorphism(f"exp_map({a:g})", jet)


DIFFEOMORPHISMS: dict[str, Callable[..., Diffeomorphism]] = {
    "shear_sine": lambda a=0.2: _shear_sine(a),
    "polar": lambda: _polar(),
    "quadratic_shear": lambda a=0.15: _quadratic_shear(a),
    "exp_map": lambda a=0.7: _exp_map(a),
}


def pullback_jet(phi: Diffeomorphism):
    """Jet of the pull-back ``(grad phi)^T grad phi`` of the Euclidean metric."""

    def jet(x):
        _, D1, D2, D3 = phi.jet(x)
        g = np.einsum("...ki,...kj->...ij", D1, D1)
        dg = np.einsum("...kil,...kj->...ijl", D2, D1)
        dg = dg + np.swapaxes(dg, -3, -2)
        t1 = np.einsum("...kilm,...kj->...ijlm", D3, D1)
        t2 = np.einsum("...kil,...kjm->...ijlm", D2, D2)
        d2g = t1 + np.swapaxes(t1, -4, -3) + t2 + np.swapaxes(t2, -2, -1)
        return g, dg, d2g

    return jet


def pullback_metric(phi: Diffeomorphism, domain: Rect) -> AnalyticMetric:
    return AnalyticMetric(f"pullback[{phi.name}]", domain, pullback_jet(phi))


# -- catalog ------------------------------------------------------------------

CATALOG_DOMAINS = {
    "identity": Rect(0.0, 1.0, 0.0, 1.0),
    "polar_flat": Rect(1.0, 2.0, 0.0, 1.0),
    "sphere": Rect(0.4, 1.2, 0.0, 1.0),
    "hyperbolic": Rect(-0.5, 0.5, 0.0, 1.0),
    "radial_bump": Rect(-1.0, 1.0, -1.0, 1.0),
}


def catalog_metric(name: str, domain: Rect | None = None, **params) -> AnalyticMetric:
    """Build one of the named catalog metrics.

    ``identity``, ``polar_flat`` (diag(1, x1^2)), ``sphere`` (diag(1, sin^2 x1)),
    ``hyperbolic`` (diag(1, cosh^2 x1)) and ``radial_bump``
    ((1 + c exp(-|x|^2/sigma^2)) Id, parameters ``c`` and ``sigma``).
    """
    if name not in CATALOG_DOMAINS:
        raise KeyError(f"unknown catalog metric {name!r}; known: {sorted(CATALOG_DOMAINS)}")
    domain = domain or CATALOG_DOMAINS[name]
    if name == "identity":
        jet = _identity_jet
    elif name == "polar_flat":
        jet = _diag_jet(lambda t: t**2, lambda t: 2 * t, lambda t: 2 + 0 * t)
    elif name == "sphere":
        jet = _diag_jet(lambda t: np.sin(t) ** 2, lambda t: np.sin(2 * t), lambda t: 2 * np.cos(2 * t))
    elif name == "hyperbolic":
        jet = _diag_jet(lambda t: np.cosh(t) ** 2, lambda t: np.sinh(2 * t),
                        lambda t: 2 * np.cosh(2 * t))
    else:
        params = {"c": params.get("c", 0.5), "sigma": params.get("sigma", 0.5)}
        jet = radial_bump_jet(params["c"], params["sigma"])
        return AnalyticMetric(name, domain, jet, params)
    if params:
        raise TypeError(f"metric {name!r} takes no parameters, got {sorted(params)}")
    return AnalyticMetric(name, domain, jet)


# -- sampled metrics ----------------------------------------------------------


def _fd_weights(offsets: np.ndarray, order: int) -> np.ndarray:
    """Finite-difference weights for the ``order``-th derivative on integer ``offsets``."""
    n = len(offsets)
    V = np.vander(offsets.astype(float), n, increasing=True).T
    rhs = np.zeros(n)
    rhs[order] = math.factorial(order)
    return np.linalg.solve(V, rhs)


def _diff(f: np.ndarray, axis: int, step: float, order: int) -> np.ndarray:
    """Fourth-order accurate derivative along ``axis``.

    Centered five-point stencils in the interior, one-sided stencils of the
    same order in the two rows next to each end.
    """
    f = np.moveaxis(f, axis, 0)
    n = f.shape[0]
    width = 5 if order == 1 else 6
    if n < width:
        raise MeshMismatch(f"need at least {width} nodes per axis for derivatives")
    out = np.empty_like(f)
    w = _fd_weights(np.arange(-2, 3), order)
    out[2:-2] = sum(wk * f[2 + o : n - 2 + o] for wk, o in zip(w, range(-2, 3)))
    for i in (0, 1, n - 2, n - 1):
        start = min(max(i - 2, 0), n - width) if order == 1 else (0 if i < 2 else n - width)
        offs = np.arange(start, start + width) - i
        wi = _fd_weights(offs, order)
        out[i] = np.tensordot(wi, f[start : start + width], axes=1)
    return np.moveaxis(out, 0, axis) / step**order


class SampledMetric(MetricField):
    """Metric known on a uniform grid of nodes.

    Derivatives use fourth-order finite differences with the grid spacing as
    step (centered inside, one-sided near the edges); values between nodes
    come from bicubic spline interpolation of ``g`` and its derivatives.
    """

    analytic = False

    def __init__(self, mesh: Mesh2D, values: np.ndarray, name: str = "sampled"):
        values = np.asarray(values, dtype=float)
        if values.shape != (mesh.nx, mesh.ny, 2, 2):
            raise MeshMismatch(f"sampled metric of shape {values.shape} does not fit {mesh.shape}")
        if min(mesh.nx, mesh.ny) < 6:
            raise MeshMismatch("sampled metrics need at least 6 nodes per axis")
        sqrt_metric(values)  # validates SPD at every node
        self.mesh = mesh
        self.domain = mesh.domain
        self.name = name
        self.values = values
        self.derivative_step = max(mesh.dx, mesh.dy)
        steps = (mesh.dx, mesh.dy)
        self._dg = np.stack([_diff(values, k, steps[k], 1) for k in (0, 1)], -1)
        d2 = np.empty(values.shape + (2, 2))
        d2[..., 0, 0] = _diff(values, 0, mesh.dx, 2)
        d2[..., 1, 1] = _diff(values, 1, mesh.dy, 2)
        mixed = _diff(self._dg[..., 0], 1, mesh.dy, 1)
        d2[..., 0, 1] = d2[..., 1, 0] = mixed
        self._d2g = d2
        self._splines: dict = {}

    @classmethod
    def from_metric(cls, metric: MetricField, nx: int, ny: int) -> "SampledMetric":
        mesh = Mesh2D(metric.domain, nx, ny)
        return cls(mesh, metric.g(mesh.nodes()), name=f"sampled[{metric.describe()}]")

    def _interp(self, key, arr: np.ndarray, x: np.ndarray) -> np.ndarray:
        if key not in self._splines:
            flat = arr.reshape(self.mesh.nx, self.mesh.ny, -1)
            self._splines[key] = [
                RectBivariateSpline(self.mesh.x1, self.mesh.x2, flat[..., c], kx=3, ky=3)
                for c in range(flat.shape[-1])
            ]
        x1 = np.clip(x[..., 0], self.domain.x1min, self.domain.x1max).ravel()
        x2 = np.clip(x[..., 1], self.domain.x2min, self.domain.x2max).ravel()
        cols = [s(x1, x2, grid=False) for s in self._splines[key]]
        return np.stack(cols, -1).reshape(x.shape[:-1] + arr.shape[2:])

    @property
    def interior_margin(self) -> tuple[float, float]:
        return (self.mesh.dx, self.mesh.dy)

    def _g(self, x):
        return self._interp("g", self.values, x)

    def _eval(self, x):
        return (self._interp("g", self.values, x), self._interp("dg", self._dg, x),
                self._interp("d2g", self._d2g, x))

    def nodal_jet(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(g, dg, d2g)`` at the grid nodes, without interpolation."""
        return self.values, self._dg, self._d2g

    def to_csv(self, path) -> None:
        write_sampled_metric(self, path)


def write_sampled_metric(metric: SampledMetric, path) -> None:
    nodes = metric.mesh.nodes()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x1", "x2", "g11", "g12", "g22"])
        for i in range(metric.mesh.nx):
            for j in range(metric.mesh.ny):
                g = metric.values[i, j]
                w.writerow([repr(float(v)) for v in (*nodes[i, j], g[0, 0], g[0, 1], g[1, 1])])


def read_sampled_metric(path) -> SampledMetric:
    """Read ``x1,x2,g11,g12,g22`` rows on a uniform grid; dimensions are inferred."""
    rows = np.loadtxt(Path(path), delimiter=",", skiprows=1, ndmin=2)
    if rows.shape[1] != 5:
        raise MeshMismatch("expected columns x1,x2,g11,g12,g22")
    x1 = np.unique(rows[:, 0])
    x2 = np.unique(rows[:, 1])
    nx, ny = len(x1), len(x2)
    if nx * ny != len(rows):
        raise MeshMismatch(f"{len(rows)} rows do not form a {nx}x{ny} grid")
    order = np.lexsort((rows[:, 1], rows[:, 0]))
    rows = rows[order]
    mesh = Mesh2D(Rect(x1[0], x1[-1], x2[0], x2[-1]), nx, ny)
    if not (np.allclose(np.diff(x1), mesh.dx) and np.allclose(np.diff(x2), mesh.dy)):
        raise MeshMismatch("sampled metric grid is not uniform")
    g = np.empty((nx, ny, 2, 2))
    g[..., 0, 0] = rows[:, 2].reshape(nx, ny)
    g[..., 0, 1] = g[..., 1, 0] = rows[:, 3].reshape(nx, ny)
    g[..., 1, 1] = rows[:, 4].reshape(nx, ny)
    return SampledMetric(mesh, g, name=f"file[{Path(path).name}]")


# -- geometry -----------------------------------------------------------------


def christoffel_from_jet(g: np.ndarray, dg: np.ndarray) -> np.ndarray:
    """``Gamma[..., m, i, j] = 1/2 g^{km} (d_i g_kj + d_j g_ik - d_k g_ij)``."""
    ginv = np.linalg.inv(g)
    # dg[..., a, b, k] = d_k g_ab
    t = (np.einsum("...kji->...kij", dg) + np.einsum("...ikj->...kij", dg)
         - np.einsum("...ijk->...kij", dg))
    return 0.5 * np.einsum("...mk,...kij->...mij", ginv, t)


def christoffel(field: MetricField, x) -> np.ndarray:
    """Christoffel symbols of the second kind, shape ``(..., 2, 2, 2)`` indexed ``[m, i, j]``."""
    g, dg, _ = field.jet(x)
    return christoffel_from_jet(g, dg)


def riemann_from_jet(g: np.ndarray, dg: np.ndarray, d2g: np.ndarray) -> np.ndarray:
    """Covariant curvature tensor ``R[..., i, k, l, m]``, normalised so R_1212 = K det g."""
    Gam = christoffel_from_jet(g, dg)
    # d2g[..., a, b, p, q] = d_p d_q g_ab
    lin = 0.5 * (np.einsum("...imkl->...iklm", d2g) + np.einsum("...klim->...iklm", d2g)
                 - np.einsum("...ilkm->...iklm", d2g) - np.einsum("...kmil->...iklm", d2g))
    quad = (np.einsum("...np,...nkl,...pim->...iklm", g, Gam, Gam)
            - np.einsum("...np,...nkm,...pil->...iklm", g, Gam, Gam))
    return lin + quad


def gaussian_curvature_from_jet(g, dg, d2g) -> np.ndarray:
    R = riemann_from_jet(g, dg, d2g)
    return R[..., 0, 1, 0, 1] / np.linalg.det(g)


def gaussian_curvature(field: MetricField, x) -> np.ndarray:
    """Gaussian curvature of the 2d metric at ``x`` (scalar or array over points)."""
    K = gaussian_curvature_from_jet(*field.jet(x))
    return K if np.ndim(K) else float(K)


@dataclass(frozen=True)
class FlatnessReport:
    flat: bool
    max_abs_curvature: float
    max_abs_riemann: float
    tolerance: float

    def __iter__(self):
        return iter((self.flat, self.max_abs_curvature))


def interior_sample_points(field: MetricField, n: int = 33) -> np.ndarray:
    if isinstance(field, SampledMetric):
        nodes = field.mesh.nodes()
        return nodes[1:-1, 1:-1].reshape(-1, 2)
    d = field.domain
    m1, m2 = field.interior_margin
    x1 = np.linspace(d.x1min + m1, d.x1max - m1, n)
    x2 = np.linspace(d.x2min + m2, d.x2max - m2, n)
    X1, X2 = np.meshgrid(x1, x2, indexing="ij")
    return np.stack([X1, X2], -1).reshape(-1, 2)


def riemann_flat_3d(field: MetricField, points=None) -> FlatnessReport:
    """Decide whether the block 3d metric is flat, via the Gaussian curvature of its 2d block.

    ``max_abs_riemann`` is the largest component of the covariant curvature
    tensor of the 3x3 block metric over the same points.
    """
    pts = interior_sample_points(field) if points is None else np.asarray(points, float)
    g, dg, d2g = field.jet(pts)
    K = gaussian_curvature_from_jet(g, dg, d2g)
    g3 = extend_metric_3d(g)
    dg3 = np.zeros(g.shape[:-2] + (3, 3, 3))
    dg3[..., :2, :2, :2] = dg
    d2g3 = np.zeros(g.shape[:-2] + (3, 3, 3, 3))
    d2g3[..., :2, :2, :2, :2] = d2g
    R3 = riemann_from_jet(g3, dg3, d2g3)
    kmax = float(np.max(np.abs(K)))
    return FlatnessReport(kmax <= field.flat_tol, kmax, float(np.max(np.abs(R3))), field.flat_tol)


def laplace_beltrami(field: MetricField, f, mesh: Mesh2D) -> np.ndarray:
    """Centered, conservative discretisation of the Laplace-Beltrami operator.

    Returns an ``(nx, ny)`` array; boundary nodes are NaN.
    """
    f = np.asarray(f, dtype=float)
    if f.shape != mesh.shape:
        raise MeshMismatch(f"samples of shape {f.shape} do not fit mesh {mesh.shape}")
    if not (np.all(field.domain.contains(mesh.nodes()))):
        raise MeshMismatch("mesh extends outside the metric's domain")
    dx, dy = mesh.dx, mesh.dy

    def coeffs(pts):
        g = field.g(pts)
        sq = np.sqrt(np.linalg.det(g))
        return sq[..., None, None] * np.linalg.inv(g), sq

    nodes = mesh.nodes()
    a_node, sq_node = coeffs(nodes)
    half1 = 0.5 * (nodes[1:, :] + nodes[:-1, :])
    half2 = 0.5 * (nodes[:, 1:] + nodes[:, :-1])
    a_h1, _ = coeffs(half1)
    a_h2, _ = coeffs(half2)

    out = np.full(mesh.shape, np.nan)
    I = slice(1, -1)
    flux1 = a_h1[..., 0, 0] * (f[1:, :] - f[:-1, :]) / dx  # at (i+1/2, j)
    flux2 = a_h2[..., 1, 1] * (f[:, 1:] - f[:, :-1]) / dy  # at (i, j+1/2)
    d2f = np.gradient(f, dy, axis=1)
    d1f = np.gradient(f, dx, axis=0)
    m12 = a_node[..., 0, 1] * d2f
    m21 = a_node[..., 1, 0] * d1f
    div = ((flux1[1:, I] - flux1[:-1, I]) / dx
           + (flux2[I, 1:] - flux2[I, :-1]) / dy
           + (m12[2:, I] - m12[:-2, I]) / (2 * dx)
           + (m21[I, 2:] - m21[I, :-2]) / (2 * dy))
    out[I, I] = div / sq_node[I, I]
    return out
