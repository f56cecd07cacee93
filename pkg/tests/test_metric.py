import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neplate.errors import MeshMismatch, NotSPD, OutOfDomain
from neplate.grids import Mesh2D, Rect
from neplate.metric import (
    CATALOG_DOMAINS,
    DIFFEOMORPHISMS,
    SampledMetric,
    WellFrame,
    catalog_metric,
    christoffel,
    extend_metric_3d,
    gaussian_curvature,
    interior_sample_points,
    laplace_beltrami,
    pullback_metric,
    read_sampled_metric,
    riemann_flat_3d,
    sqrt_metric,
    write_sampled_metric,
)

PULLBACK_DOMAIN = Rect(1.0, 2.0, 0.0, 1.0)


def test_sqrt_metric_examples():
    assert np.allclose(sqrt_metric(np.eye(2)), np.eye(2))
    assert np.allclose(sqrt_metric(np.diag([4.0, 1.0])), np.diag([2.0, 1.0]))
    g = np.array([[2.0, 1.0], [1.0, 2.0]])
    A = sqrt_metric(g)
    assert np.allclose(A @ A, g, rtol=1e-12, atol=1e-14)
    assert np.allclose(A, A.T)
    v = np.array([1.0, 1.0]) / np.sqrt(2)
    w = np.array([1.0, -1.0]) / np.sqrt(2)
    assert A @ v == pytest.approx(np.sqrt(3) * v)
    assert A @ w == pytest.approx(w)


@pytest.mark.parametrize("bad", [np.diag([1.0, -1.0]), np.array([[1.0, 0.5], [0.0, 1.0]]), np.zeros((2, 2))])
def test_sqrt_metric_rejects_non_spd(bad):
    with pytest.raises(NotSPD):
        sqrt_metric(bad)


def test_extend_metric_3d():
    assert np.array_equal(extend_metric_3d(np.eye(2)), np.eye(3))
    assert np.array_equal(extend_metric_3d(np.diag([4.0, 9.0])), np.diag([4.0, 9.0, 1.0]))
    out = extend_metric_3d(np.array([[2.0, 1.0], [1.0, 2.0]]))
    assert np.array_equal(out, [[2, 1, 0], [1, 2, 0], [0, 0, 1]])


@pytest.mark.parametrize("name", sorted(CATALOG_DOMAINS))
def test_catalog_square_roots(name, rng):
    m = catalog_metric(name)
    d = m.domain
    pts = np.column_stack([rng.uniform(d.x1min, d.x1max, 1000), rng.uniform(d.x2min, d.x2max, 1000)])
    g = m.g(pts)
    frame = WellFrame.from_tangential(g)
    A = frame.A
    assert np.allclose(A, np.swapaxes(A, -1, -2), atol=0)
    assert np.all(np.linalg.eigvalsh(A) > 0)
    g3 = extend_metric_3d(g)
    rel = np.abs(A @ A - g3).max(axis=(-2, -1)) / np.abs(g3).max(axis=(-2, -1))
    assert rel.max() <= 1e-12
    # block structure
    assert np.array_equal(A[:, :, 2], np.tile([0.0, 0.0, 1.0], (1000, 1)))
    assert np.allclose(frame.A_tan_inv_sq, np.linalg.inv(g))


def test_christoffel_identity_is_zero():
    m = catalog_metric("identity")
    assert np.array_equal(christoffel(m, [0.3, 0.7]), np.zeros((2, 2, 2)))


def test_christoffel_polar_flat():
    m = catalog_metric("polar_flat")
    G = christoffel(m, [2.0, 0.5])
    expected = np.zeros((2, 2, 2))
    expected[0, 1, 1] = -2.0
    expected[1, 0, 1] = expected[1, 1, 0] = 0.5
    assert np.allclose(G, expected, atol=1e-14)
    # sampled on a wider rectangle so that x1 = 2 is interior
    s = SampledMetric.from_metric(catalog_metric("polar_flat", Rect(1.0, 3.0, 0.0, 1.0)), 41, 21)
    assert np.allclose(christoffel(s, [2.0, 0.5]), expected, atol=1e-6)


@settings(max_examples=50, deadline=None)
@given(st.sampled_from(sorted(CATALOG_DOMAINS)), st.floats(0.05, 0.95), st.floats(0.05, 0.95))
def test_christoffel_symmetric(name, s, t):
    m = catalog_metric(name)
    d = m.domain
    x = [d.x1min + s * (d.x1max - d.x1min), d.x2min + t * (d.x2max - d.x2min)]
    G = christoffel(m, x)
    assert np.array_equal(G, np.swapaxes(G, -1, -2))


def test_gaussian_curvature_examples():
    assert gaussian_curvature(catalog_metric("identity"), [0.5, 0.5]) == 0.0
    assert gaussian_curvature(catalog_metric("sphere"), [np.pi / 3, 0.2]) == pytest.approx(1.0, abs=1e-12)
    assert gaussian_curvature(catalog_metric("hyperbolic", Rect(0.0, 0.8, 0.0, 1.0)), [0.5, 0.2]) == pytest.approx(
        -1.0, abs=1e-12)


def test_radial_bump_has_both_signs():
    m = catalog_metric("radial_bump")
    K = gaussian_curvature(m, interior_sample_points(m))
    assert K.max() > 0.1 and K.min() < -0.01


def test_out_of_domain():
    s = SampledMetric.from_metric(catalog_metric("sphere"), 16, 16)
    with pytest.raises(OutOfDomain):
        christoffel(s, [0.4, 0.5])
    with pytest.raises(OutOfDomain):
        catalog_metric("sphere").g([2.0, 0.5])


def test_riemann_flat_examples():
    rep = riemann_flat_3d(catalog_metric("identity"))
    assert rep.flat and rep.max_abs_curvature == 0.0 and rep.max_abs_riemann == 0.0
    flat, kmax = riemann_flat_3d(catalog_metric("sphere"))
    assert not flat and kmax == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("name", sorted(DIFFEOMORPHISMS))
def test_pullbacks_are_flat(name):
    m = pullback_metric(DIFFEOMORPHISMS[name](), PULLBACK_DOMAIN)
    rep = riemann_flat_3d(m)
    assert rep.flat and rep.max_abs_curvature <= 1e-5
    rep_s = riemann_flat_3d(SampledMetric.from_metric(m, 48, 48))
    assert rep_s.flat and rep_s.max_abs_curvature <= 1e-5


def test_sampled_metric_roundtrip(tmp_path):
    s = SampledMetric.from_metric(catalog_metric("radial_bump"), 12, 9)
    path = tmp_path / "g.csv"
    write_sampled_metric(s, path)
    assert path.read_text().splitlines()[0] == "x1,x2,g11,g12,g22"
    back = read_sampled_metric(path)
    assert back.mesh.shape == (12, 9)
    assert np.array_equal(back.values, s.values)


def test_sampled_metric_rejects_bad_shape():
    mesh = Mesh2D(Rect(0, 1, 0, 1), 8, 8)
    with pytest.raises(MeshMismatch):
        SampledMetric(mesh, np.tile(np.eye(2), (7, 8, 1, 1)))


def test_laplace_beltrami_examples():
    mesh = Mesh2D(Rect(0, 1, 0, 1), 11, 11)
    X = mesh.nodes()
    ident = catalog_metric("identity")
    L = laplace_beltrami(ident, X[..., 0] ** 2, mesh)
    assert np.all(np.isnan(L[0])) and np.all(np.isnan(L[:, -1]))
    assert np.allclose(L[1:-1, 1:-1], 2.0, atol=1e-10)
    assert np.allclose(laplace_beltrami(ident, X[..., 0] * X[..., 1], mesh)[1:-1, 1:-1], 0.0, atol=1e-10)
    pmesh = Mesh2D(Rect(1, 2, 0, 1), 21, 11)
    P = pmesh.nodes()
    L = laplace_beltrami(catalog_metric("polar_flat"), P[..., 0], pmesh)
    assert np.allclose(L[1:-1, 1:-1], 1.0 / P[1:-1, 1:-1, 0], atol=1e-3)


def _lb_error(metric, exact, f, n):
    mesh = Mesh2D(metric.domain, n, n)
    X = mesh.nodes()
    L = laplace_beltrami(metric, f(X), mesh)
    return np.nanmax(np.abs(L - exact(X)))


def test_laplace_beltrami_second_order_sphere():
    m = catalog_metric("sphere")

    def f(X):
        return X[..., 0] ** 3 + X[..., 0] * X[..., 1] ** 2

    def exact(X):
        a, b = X[..., 0], X[..., 1]
        s, c = np.sin(a), np.cos(a)
        return c / s * (3 * a**2 + b**2) + 6 * a + 2 * a / s**2

    errs = [_lb_error(m, exact, f, n) for n in (21, 41, 81)]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert orders.min() >= 1.8


def test_laplace_beltrami_second_order_offdiagonal():
    # Delta of a pulled-back function equals the Euclidean Laplacian pulled back
    phi = DIFFEOMORPHISMS["shear_sine"]()
    m = pullback_metric(phi, PULLBACK_DOMAIN)

    def f(X):
        Z = phi(X)
        return Z[..., 0] ** 2 + Z[..., 1] ** 2

    errs = [_lb_error(m, lambda X: 4.0, f, n) for n in (21, 41, 81)]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert orders.min() >= 1.8
