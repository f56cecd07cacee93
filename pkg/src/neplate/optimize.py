"""Limited-memory BFGS with Armijo backtracking, shared by the 3d and 2d minimizers."""

from __future__ import annotations

import logging
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LBFGSOptions:
    tol: float | None = None  # None -> 1e-8 * (1 + |E|)
    max_iters: int = 5000
    memory: int = 10
    armijo_c: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 60


@dataclass
class EnergyReport:
    energy: float
    grad_norm: float
    iterations: int
    converged: bool
    wall_time: float
    message: str = ""
    history: list[float] = field(default_factory=list, repr=False)


def lbfgs(fun: Callable[[np.ndarray], tuple[float, np.ndarray]], x0: np.ndarray,
          opts: LBFGSOptions = LBFGSOptions(),
          callback: Callable[[int, np.ndarray, float], None] | None = None):
    """Minimize ``fun`` (returning value and gradient) from ``x0``.

    Stops when the sup-norm of the gradient drops below the tolerance, after
    ``max_iters`` iterations, or when backtracking fails; in every case the best
    iterate seen is returned together with an :class:`EnergyReport`.
    """
    t0 = time.perf_counter()
    x = np.array(x0, dtype=float).ravel()
    f, g = fun(x)
    s_hist: deque = deque(maxlen=opts.memory)
    y_hist: deque = deque(maxlen=opts.memory)
    history = [float(f)]

    def tolerance(fv):
        return opts.tol if opts.tol is not None else 1e-8 * (1.0 + abs(fv))

    it = 0
    converged = float(np.max(np.abs(g), initial=0.0)) <= tolerance(f)
    message = "gradient tolerance reached" if converged else ""
    while not converged and it < opts.max_iters:
        # two-loop recursion
        q = g.copy()
        alphas = []
        for s, y in reversed(list(zip(s_hist, y_hist))):
            rho = 1.0 / np.dot(y, s)
            a = rho * np.dot(s, q)
            q -= a * y
            alphas.append((rho, a))
        if s_hist:
            s, y = s_hist[-1], y_hist[-1]
            q *= np.dot(s, y) / np.dot(y, y)
        else:
            q *= min(1.0, 1.0 / max(np.linalg.norm(g), 1e-300))
        for (s, y), (rho, a) in zip(zip(s_hist, y_hist), reversed(alphas)):
            b = rho * np.dot(y, q)
            q += (a - b) * s
        d = -q
        slope = float(np.dot(g, d))
        if not slope < 0:
            s_hist.clear()
            y_hist.clear()
            d = -g * min(1.0, 1.0 / max(np.linalg.norm(g), 1e-300))
            slope = float(np.dot(g, d))

        step = 1.0
        for _ in range(opts.max_backtracks):
            x_new = x + step * d
            if np.array_equal(x_new, x):
                # the step no longer moves x in floating point
                step = 0.0
                break
            f_new, g_new = fun(x_new)
            if f_new <= f + opts.armijo_c * step * slope:
                break
            step *= opts.backtrack
        else:
            step = 0.0
        if step == 0.0:
            message = "line search failed"
            log.info("lbfgs: %s at iteration %d (E=%.6g)", message, it, f)
            break

        s = x_new - x
        y = g_new - g
        sy = float(np.dot(s, y))
        if sy > 1e-12 * float(np.dot(y, y)) and sy > 0:
            s_hist.append(s)
            y_hist.append(y)
        x, f, g = x_new, float(f_new), g_new
        it += 1
        history.append(f)
        if callback is not None:
            callback(it, x, f)
        converged = float(np.max(np.abs(g))) <= tolerance(f)
        if converged:
            message = "gradient tolerance reached"
    if not converged and not message:
        message = "iteration limit reached"
    report = EnergyReport(
        energy=float(f),
        grad_norm=float(np.max(np.abs(g), initial=0.0)),
        iterations=it,
        converged=bool(converged),
        wall_time=time.perf_counter() - t0,
        message=message,
        history=history,
    )
    return x, report
