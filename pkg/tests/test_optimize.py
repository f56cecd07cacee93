import numpy as np
import pytest

from neplate.optimize import LBFGSOptions, lbfgs


def rosenbrock(x):
    f = 100 * (x[1] - x[0] ** 2) ** 2 + (1 - x[0]) ** 2
    g = np.array([-400 * x[0] * (x[1] - x[0] ** 2) - 2 * (1 - x[0]), 200 * (x[1] - x[0] ** 2)])
    return f, g


def test_rosenbrock():
    x, rep = lbfgs(rosenbrock, np.array([-1.2, 1.0]))
    assert rep.converged
    assert np.allclose(x, [1.0, 1.0], atol=1e-6)


def test_history_is_monotone():
    _, rep = lbfgs(rosenbrock, np.array([-1.2, 1.0]))
    h = np.array(rep.history)
    assert np.all(np.diff(h) <= 0)
    assert rep.energy == h[-1]


def test_quadratic_and_determinism(rng):
    M = rng.normal(size=(30, 30))
    H = M @ M.T + np.eye(30)
    b = rng.normal(size=30)

    def f(x):
        return 0.5 * x @ H @ x - b @ x, H @ x - b

    x1, r1 = lbfgs(f, np.zeros(30))
    x2, r2 = lbfgs(f, np.zeros(30))
    assert r1.converged
    assert np.allclose(x1, np.linalg.solve(H, b), atol=1e-6)
    assert np.array_equal(x1, x2) and r1.energy == r2.energy


def test_iteration_limit_reported():
    _, rep = lbfgs(rosenbrock, np.array([-1.2, 1.0]), LBFGSOptions(max_iters=3))
    assert not rep.converged and rep.iterations == 3
    assert rep.message == "iteration limit reached"


def test_line_search_failure_returns_best():
    # gradient inconsistent with the values: no step can satisfy Armijo
    def bad(x):
        return float(x @ x), -2 * x

    x0 = np.array([1.0, -2.0])
    x, rep = lbfgs(bad, x0)
    assert not rep.converged and rep.message == "line search failed"
    assert np.array_equal(x, x0) and rep.energy == 5.0
