import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neplate.errors import MeshMismatch
from neplate.grids import (
    Grid3D,
    Mesh2D,
    Rect,
    cell_gradient_2d,
    cell_gradient_2d_adjoint,
    cell_gradient_3d,
    cell_gradient_3d_adjoint,
)


def test_rect_basics():
    r = Rect(1.0, 2.0, 0.0, 3.0)
    assert r.area == 3.0
    assert r.contains([1.5, 1.0])
    assert not r.contains([2.5, 1.0])
    assert not r.contains([1.05, 1.0], margin=0.1)


def test_grid3d_counts_and_spacing():
    g = Grid3D(Rect(0, 1, 0, 1), 5, 4, 7, 0.3)
    assert g.n_cells == 4 * 3 * 6
    assert g.dz == pytest.approx(0.05)
    assert g.x3[3] == pytest.approx(0.0, abs=1e-15)
    assert g.volume == pytest.approx(0.3)


def test_grid3d_rejects_even_nz():
    with pytest.raises(ValueError):
        Grid3D(Rect(0, 1, 0, 1), 5, 5, 4, 0.1)


def test_check_nodal_shape():
    g = Grid3D(Rect(0, 1, 0, 1), 3, 3, 3, 0.1)
    with pytest.raises(MeshMismatch):
        g.check_nodal(np.zeros((3, 3, 2, 3)))


def test_gradient_exact_on_affine_maps(rng):
    g = Grid3D(Rect(0, 1, 0, 2), 4, 5, 3, 0.2)
    M = rng.normal(size=(3, 3))
    u = g.nodes() @ M.T + 1.0
    G = cell_gradient_3d(u, g.dx, g.dy, g.dz)
    assert np.allclose(G, M, atol=1e-12)
    m = Mesh2D(Rect(0, 1, 0, 2), 4, 5)
    N = rng.normal(size=(3, 2))
    y = m.nodes() @ N.T
    assert np.allclose(cell_gradient_2d(y, m.dx, m.dy), N, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_gradient_adjoints(seed):
    rng = np.random.default_rng(seed)
    g = Grid3D(Rect(0, 1, 0, 1), 3, 4, 3, 0.5)
    u = rng.normal(size=g.shape + (3,))
    w = rng.normal(size=(2, 3, 2, 3, 3))
    lhs = np.sum(cell_gradient_3d(u, g.dx, g.dy, g.dz) * w)
    rhs = np.sum(u * cell_gradient_3d_adjoint(w, g.dx, g.dy, g.dz))
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)
    m = Mesh2D(Rect(0, 1, 0, 1), 4, 3)
    y = rng.normal(size=(4, 3, 3))
    v = rng.normal(size=(3, 2, 3, 2))
    assert np.sum(cell_gradient_2d(y, m.dx, m.dy) * v) == pytest.approx(
        np.sum(y * cell_gradient_2d_adjoint(v, m.dx, m.dy)), rel=1e-12, abs=1e-12)
