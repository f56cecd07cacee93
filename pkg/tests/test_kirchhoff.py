import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_rotation
from neplate.errors import DegenerateImmersion
from neplate.grids import Mesh2D, Rect
from neplate.immersions import (
    hyperbolic_patch,
    plane,
    polar_plane,
    sample_immersion,
    sphere_patch,
)
from neplate.kirchhoff import (
    ImmersionField2D,
    LimitProblem,
    isometry_defect,
    limit_energy,
    limit_integrand,
    minimize_limit,
    normal_field,
    read_immersion,
    write_immersion,
)
from neplate.metric import WellFrame, catalog_metric
from neplate.optimize import LBFGSOptions
from neplate.wells import q2_bruteforce


def _setup(name, n=12):
    m = catalog_metric(name)
    mesh = Mesh2D(m.domain, n, n)
    return m, mesh


def test_immersions_are_isometric():
    for name, fn in [("polar_flat", polar_plane), ("sphere", sphere_patch), ("hyperbolic", hyperbolic_patch)]:
        m = catalog_metric(name)
        pts = Mesh2D(m.domain, 7, 7).nodes()
        eps = 1e-6
        d1 = (fn(pts + [eps, 0]) - fn(pts - [eps, 0])) / (2 * eps)
        d2 = (fn(pts + [0, eps]) - fn(pts - [0, eps])) / (2 * eps)
        J = np.stack([d1, d2], -1)
        assert np.allclose(np.swapaxes(J, -1, -2) @ J, m.g(pts), atol=1e-8)


def test_plane_normal():
    m, mesh = _setup("identity")
    n, bad = normal_field(sample_immersion(plane, mesh), mesh)
    assert np.allclose(n, [0, 0, 1]) and not bad.any()


def test_sphere_normal_is_radial():
    errs = []
    for k in (8, 16, 32):
        m, mesh = _setup("sphere", k)
        n, _ = normal_field(sample_immersion(sphere_patch, mesh), mesh)
        exact = sphere_patch(mesh.cell_centers())
        errs.append(np.abs(n - exact).max())
        assert np.allclose(np.linalg.norm(n, axis=-1), 1.0)
    assert errs[0] / errs[1] > 3.5 and errs[1] / errs[2] > 3.5


def test_degenerate_cells():
    m, mesh = _setup("identity", 12)
    y = sample_immersion(plane, mesh)
    y[3, 3] = y[4, 3] = y[3, 4] = y[4, 4] = y[3, 3]  # collapse one cell
    imm = ImmersionField2D(mesh, y)
    assert imm.degenerate[3, 3] and imm.degenerate.sum() == 1
    n, bad = normal_field(imm, mesh)
    assert bad[3, 3] and np.isnan(n[3, 3]).all()
    with pytest.raises(DegenerateImmersion):
        normal_field(np.zeros((12, 12, 3)), mesh)


def test_isometry_defect_examples():
    m, mesh = _setup("identity")
    y = sample_immersion(plane, mesh)
    assert isometry_defect(y, m, mesh) == pytest.approx(0.0, abs=1e-28)
    y2 = y.copy()
    y2[..., 0] *= 2
    assert isometry_defect(y2, m, mesh) == pytest.approx(9.0 * mesh.domain.area, rel=1e-12)
    defects = []
    for k in (9, 17, 33):
        ms, meshs = _setup("sphere", k)
        defects.append(isometry_defect(sample_immersion(sphere_patch, meshs), ms, meshs))
    assert defects[0] / defects[1] > 10 and defects[1] / defects[2] > 10


def test_limit_energy_flat_cases():
    m, mesh = _setup("identity")
    assert limit_energy(sample_immersion(plane, mesh), m, mesh) == 0.0
    m, mesh = _setup("polar_flat")
    assert limit_energy(sample_immersion(polar_plane, mesh), m, mesh) == pytest.approx(0.0, abs=1e-24)


def test_sphere_limit_energy_matches_bruteforce_cellwise():
    m, mesh = _setup("sphere", 10)
    imm = ImmersionField2D(mesh, sample_immersion(sphere_patch, mesh))
    vals = limit_integrand(imm, m, mesh)
    A_tan = WellFrame.from_tangential(m.g(mesh.cell_centers())).A_tan
    F = np.linalg.inv(A_tan) @ imm.shape_operator
    brute = q2_bruteforce(A_tan, F)
    assert np.all(vals > 0)
    assert np.allclose(vals, brute, rtol=1e-8, atol=0)
    assert limit_energy(imm, m, mesh) > 0


def test_sphere_limit_energy_approaches_continuum():
    # continuum value (1/12) * int (1 + sin^2 x1) over [0.4, 1.2] x [0, 1]
    exact = (0.8 + 0.4 - 0.25 * (np.sin(2.4) - np.sin(0.8))) / 12
    errs = []
    for k in (17, 33, 65):
        m, mesh = _setup("sphere", k)
        errs.append(abs(limit_energy(sample_immersion(sphere_patch, mesh), m, mesh) - exact))
    # first order: boundary nodal normals average one-sided cells
    assert errs[0] / errs[1] > 1.8 and errs[1] / errs[2] > 1.8
    assert errs[2] / exact < 0.03


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_limit_energy_invariances(seed):
    rng = np.random.default_rng(seed)
    m, mesh = _setup("sphere", 8)
    y = sample_immersion(sphere_patch, mesh) + 0.02 * rng.normal(size=(8, 8, 3))
    E = limit_energy(y, m, mesh)
    assert E >= 0
    R = random_rotation(rng)
    assert limit_energy(y @ R.T + rng.normal(size=3), m, mesh) == pytest.approx(E, abs=1e-10)
    mirror = y * [1, 1, -1]
    assert limit_energy(mirror, m, mesh) == pytest.approx(E, abs=1e-10)


def test_limit_problem_gradients(rng):
    m, mesh = _setup("hyperbolic", 7)
    y = sample_immersion(hyperbolic_patch, mesh) + 0.01 * rng.normal(size=(7, 7, 3))
    P = LimitProblem(m, mesh)
    e, ge, d, gd = P.parts(y)
    assert e == pytest.approx(limit_energy(y, m, mesh), rel=1e-12)
    assert d == pytest.approx(isometry_defect(y, m, mesh), rel=1e-12)
    for _ in range(5):
        v = rng.normal(size=y.shape)
        eps = 1e-6
        p, q = P.parts(y + eps * v), P.parts(y - eps * v)
        assert np.sum(ge * v) == pytest.approx((p[0] - q[0]) / (2 * eps), rel=1e-5)
        assert np.sum(gd * v) == pytest.approx((p[2] - q[2]) / (2 * eps), rel=1e-5)


def test_minimize_limit_identity():
    m, mesh = _setup("identity", 6)
    imm, rep = minimize_limit(m, mesh, sample_immersion(plane, mesh))
    assert rep.energy == 0.0 and rep.defect <= 1e-28 and rep.iterations == 0


def test_minimize_limit_polar_flat():
    m, mesh = _setup("polar_flat", 8)
    y0 = sample_immersion(polar_plane, mesh)
    noisy = y0 + 0.01 * np.random.default_rng(0).uniform(-1, 1, y0.shape)
    imm, rep = minimize_limit(m, mesh, noisy, opts=LBFGSOptions(max_iters=3000))
    assert rep.energy <= 1e-6
    # at most the discretization-level defect of the exact planar map
    assert rep.defect <= isometry_defect(y0, m, mesh)


def test_minimize_limit_sphere_descends():
    m, mesh = _setup("sphere", 8)
    y0 = sample_immersion(sphere_patch, mesh)
    imm, rep = minimize_limit(m, mesh, y0, opts=LBFGSOptions(max_iters=300))
    P = LimitProblem(m, mesh)
    e0, _, d0, _ = P.parts(y0)
    assert rep.energy + 1e4 * rep.defect <= e0 + 1e4 * d0


def test_immersion_checkpoint(tmp_path, rng):
    m, mesh = _setup("sphere", 5)
    imm = ImmersionField2D(mesh, rng.normal(size=(5, 5, 3)))
    path = tmp_path / "y.csv"
    write_immersion(imm, path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# nx=5 ny=5") and lines[1] == "i,j,y1,y2,y3"
    assert np.array_equal(read_immersion(path).y, imm.y)
