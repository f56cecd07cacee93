"""Configuration-driven studies: thickness sweeps, immersibility verdicts, recovery tables, plots.

Configs are flat ``key=value`` text, one key per line, ``#`` starting a comment.
"""

from __future__ import annotations

import dataclasses
import io
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, EmptyResult, NeplateError, TooFewRows
from .grids import Grid3D, Mesh2D, Rect
from .immersions import candidate_immersion, sample_immersion
from .metric import CATALOG_DOMAINS, MetricField, catalog_metric, read_sampled_metric
from .optimize import LBFGSOptions
from .plate3d import PlateEnergy, flat_deformation, minimize_Ih
from .recovery import build_recovery, convergence_study, write_convergence_csv

log = logging.getLogger(__name__)

VERDICTS = ("flat", "immersible_W22", "obstructed", "inconclusive")
VERDICT_TEXT = {
    "flat": "flat: energy/h^2 vanishes toward the discretization floor",
    "immersible_W22": "immersible_W22: energy/h^2 stays in a bounded positive band",
    "obstructed": "obstructed: consistent with no W2,2 immersion",
    "inconclusive": "inconclusive",
}


# -- configuration ------------------------------------------------------------


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(t) for t in text.split(",") if t.strip())


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass(frozen=True)
class Thresholds:
    eps_flat: float = 1e-8
    band_lo: float = 0.5
    band_hi: float = 2.0
    growth: float = 10.0


@dataclass(frozen=True)
class ExperimentConfig:
    metric: str = "identity"
    metric_params: dict = field(default_factory=dict)
    metric_file: str | None = None
    domain: tuple[float, float, float, float] | None = None
    nx: int = 32
    ny: int = 32
    nz: int = 7
    h_list: tuple[float, ...] = (0.2, 0.1, 0.05, 0.025)
    h: float | None = None
    tol: float | None = None
    max_iters: int = 5000
    seed: int = 0
    output_dir: str = "out"
    immersion: str = "auto"
    init: str = "flat"
    amplitude: float = 0.0
    penalties: tuple[float, ...] = (1e2, 1e3, 1e4)
    eps_flat: float = 1e-8
    band_lo: float = 0.5
    band_hi: float = 2.0
    growth: float = 10.0
    rigidity_n: int = 500
    rigidity_amplitude: float = 0.1
    rigidity_families: tuple[str, ...] = ("affine", "trig", "spline")
    threads: int = 1
    input: str | None = None

    _PARSERS = {
        "metric": str,
        "metric_file": str,
        "domain": _floats,
        "nx": int,
        "ny": int,
        "nz": int,
        "h_list": _floats,
        "h": float,
        "tol": float,
        "max_iters": int,
        "seed": int,
        "output_dir": str,
        "immersion": str,
        "init": str,
        "amplitude": float,
        "penalties": _floats,
        "eps_flat": float,
        "band_lo": float,
        "band_hi": float,
        "growth": float,
        "rigidity_n": int,
        "rigidity_amplitude": float,
        "rigidity_families": lambda s: tuple(t.strip() for t in s.split(",") if t.strip()),
        "threads": int,
        "input": str,
    }

    def __post_init__(self):
        self.validate()

    # parsing

    @classmethod
    def from_text(cls, text: str, **overrides) -> "ExperimentConfig":
        kwargs: dict = {}
        params: dict = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            if key.startswith("metric_param."):
                try:
                    params[key.split(".", 1)[1]] = float(value)
                except ValueError as exc:
                    raise ConfigError(f"line {lineno}: {exc}") from None
                continue
            if key not in cls._PARSERS:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            try:
                kwargs[key] = cls._PARSERS[key](value)
            except ValueError as exc:
                raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None
        if params:
            kwargs["metric_params"] = params
        kwargs.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path, **overrides) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_text(text, **overrides)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def validate(self) -> None:
        if not self.h_list or any(h <= 0 for h in self.h_list):
            raise ConfigError("h_list must contain positive thicknesses")
        if any(b >= a for a, b in zip(self.h_list, self.h_list[1:])):
            raise ConfigError("h_list must be strictly decreasing")
        if self.h is not None and self.h <= 0:
            raise ConfigError("h must be positive")
        if self.nz < 3 or self.nz % 2 == 0:
            raise ConfigError("nz must be odd and at least 3")
        if self.nx < 2 or self.ny < 2:
            raise ConfigError("nx and ny must be at least 2")
        if self.max_iters < 0 or self.threads < 1 or self.rigidity_n < 1:
            raise ConfigError("max_iters, threads and rigidity_n must be positive")
        if self.domain is not None and len(self.domain) != 4:
            raise ConfigError("domain needs four numbers x1min,x1max,x2min,x2max")
        if self.init not in ("flat", "from_recovery", "perturbed"):
            raise ConfigError(f"unknown init {self.init!r}")
        if self.metric_file is None and self.metric not in CATALOG_DOMAINS:
            raise ConfigError(f"unknown metric {self.metric!r}; choose from {sorted(CATALOG_DOMAINS)}")
        if not (0 < self.band_lo <= 1 <= self.band_hi) or self.growth <= 1 or self.eps_flat < 0:
            raise ConfigError("thresholds need 0 < band_lo <= 1 <= band_hi, growth > 1, eps_flat >= 0")

    def echo(self) -> str:
        """``# key=value`` lines for every setting, in a fixed order."""
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if f.name == "metric_params":
                for k in sorted(v):
                    lines.append(f"# metric_param.{k}={v[k]!r}")
                continue
            if isinstance(v, tuple):
                v = ",".join(repr(x) if isinstance(x, float) else str(x) for x in v)
            lines.append(f"# {f.name}={v}")
        return "\n".join(lines) + "\n"

    # derived objects

    @property
    def thresholds(self) -> Thresholds:
        return Thresholds(self.eps_flat, self.band_lo, self.band_hi, self.growth)

    @property
    def lbfgs_options(self) -> LBFGSOptions:
        return LBFGSOptions(tol=self.tol, max_iters=self.max_iters)

    @property
    def single_h(self) -> float:
        return self.h if self.h is not None else self.h_list[0]

    def build_metric(self) -> MetricField:
        if self.metric_file is not None:
            try:
                return read_sampled_metric(self.metric_file)
            except OSError as exc:
                raise ConfigError(f"cannot read metric file: {exc}") from None
        domain = Rect(*self.domain) if self.domain is not None else None
        try:
            return catalog_metric(self.metric, domain, **self.metric_params)
        except TypeError as exc:
            raise ConfigError(f"bad metric parameters: {exc}") from None

    def mesh(self, metric: MetricField) -> Mesh2D:
        return Mesh2D(metric.domain, self.nx, self.ny)

    def candidate(self):
        if self.immersion == "none":
            return None
        name = self.metric if self.immersion == "auto" else self.immersion
        if self.metric_file is not None and self.immersion == "auto":
            return None
        fn = candidate_immersion(name)
        if fn is None and self.immersion != "auto":
            raise ConfigError(f"no closed-form immersion named {self.immersion!r}")
        return fn

    def output_path(self, name: str) -> Path:
        out = Path(self.output_dir)
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"cannot create output directory {out}: {exc}") from None
        if not os.access(out, os.W_OK):
            raise ConfigError(f"output directory {out} is not writable")
        return out / name


# -- scaling sweeps -----------------------------------------------------------


@dataclass(frozen=True)
class ScalingRow:
    h: float
    min_energy: float
    iterations: int
    converged: bool

    @property
    def energy_over_h2(self) -> float:
        return self.min_energy / self.h**2

    def csv(self) -> str:
        return (f"{self.h!r},{self.min_energy!r},{self.energy_over_h2!r},"
                f"{self.iterations},{int(self.converged)}")


SCALING_HEADER = "h,min_energy,energy_over_h2,iterations,converged"


@dataclass
class ScalingStudyResult:
    rows: list[ScalingRow]
    verdict: str
    slope: float
    note: str = ""
    error: str | None = None

    @property
    def aborted(self) -> bool:
        return self.error is not None


def fit_slope(rows) -> float:
    """Least-squares slope of ``log min_energy`` against ``log h`` over converged, positive rows."""
    pts = [(r.h, r.min_energy) for r in rows if r.converged and r.min_energy > 0]
    if len(pts) < 2:
        return math.nan
    h, e = np.log(np.array(pts)).T
    return float(np.polyfit(h, e, 1)[0])


def classify_immersability(result, thresholds: Thresholds = Thresholds()) -> str:
    """Verdict from the trend of ``min_energy/h^2`` over converged rows, ordered by decreasing h.

    ``flat`` if the value at the smallest h is at most ``eps_flat`` or fell by the
    growth factor across the sweep; ``immersible_W22`` if every value lies within
    ``[band_lo, band_hi]`` times the median; ``obstructed`` if it grew by the
    growth factor; ``inconclusive`` otherwise.
    """
    rows = result.rows if isinstance(result, ScalingStudyResult) else result
    rows = sorted((r for r in rows if r.converged), key=lambda r: -r.h)
    if len(rows) < 3:
        raise TooFewRows(f"need at least 3 converged rows, got {len(rows)}")
    v = np.array([r.energy_over_h2 for r in rows])
    first, last = v[0], v[-1]
    if last <= thresholds.eps_flat or first >= thresholds.growth * last:
        return "flat"
    med = float(np.median(v))
    if np.all(v >= thresholds.band_lo * med) and np.all(v <= thresholds.band_hi * med):
        return "immersible_W22"
    if last >= thresholds.growth * first:
        return "obstructed"
    return "inconclusive"


def _scaling_row(metric: MetricField, mesh: Mesh2D, y, h: float, config: ExperimentConfig) -> ScalingRow:
    grid = Grid3D.over(mesh, config.nz, h)
    problem = PlateEnergy(metric, grid)
    candidates = [flat_deformation(grid)]
    if y is not None:
        candidates.append(build_recovery(y, metric, grid))
    energies = [problem.value(c.u) for c in candidates]
    init = candidates[int(np.argmin(energies))]
    _, report = minimize_Ih(metric, grid, init, config.lbfgs_options, problem=problem)
    return ScalingRow(h, report.energy, report.iterations, report.converged)


def write_scaling_csv(result: ScalingStudyResult, path, preamble: str = "") -> None:
    rows = sorted(result.rows, key=lambda r: -r.h)
    with open(path, "w") as fh:
        fh.write(preamble)
        fh.write(SCALING_HEADER + "\n")
        for r in rows:
            fh.write(r.csv() + "\n")
        fh.write(f"# verdict={result.verdict} slope={result.slope!r}\n")
        if result.note:
            fh.write(f"# note={result.note}\n")
        if result.error:
            fh.write(f"# aborted={result.error}\n")


def read_scaling_csv(path) -> list[ScalingRow]:
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#") or line.startswith("h,"):
                continue
            h, e, _, it, conv = line.split(",")
            rows.append(ScalingRow(float(h), float(e), int(it), bool(int(conv))))
    return rows


def run_scaling(config: ExperimentConfig, csv_path=None) -> ScalingStudyResult:
    """Minimize the plate energy for each thickness and classify the trend of ``min_energy/h^2``.

    Any failing thickness aborts the sweep: completed rows are still written and
    the verdict is ``inconclusive``.
    """
    metric = config.build_metric()
    mesh = config.mesh(metric)
    fn = config.candidate()
    y = sample_immersion(fn, mesh) if fn is not None else None

    rows: list[ScalingRow] = []
    error = None

    def task(h):
        return _scaling_row(metric, mesh, y, h, config)

    with ThreadPoolExecutor(config.threads) as pool:
        futures = [pool.submit(task, h) for h in config.h_list]
        for h, fut in zip(config.h_list, futures):
            try:
                rows.append(fut.result())
            except (NeplateError, FloatingPointError, np.linalg.LinAlgError) as exc:
                error = error or f"h={h!r}: {type(exc).__name__}: {exc}"
                log.error("scaling sweep aborted at h=%g: %s", h, exc)

    slope = fit_slope(rows)
    note = ""
    if error is not None:
        verdict = "inconclusive"
    else:
        try:
            verdict = classify_immersability(rows, config.thresholds)
        except TooFewRows as exc:
            verdict, note = "inconclusive", str(exc)
    if not note:
        note = VERDICT_TEXT[verdict]
    result = ScalingStudyResult(rows, verdict, slope, note, error)
    if csv_path is not None:
        write_scaling_csv(result, csv_path, config.echo())
    return result


# -- recovery tables ----------------------------------------------------------


def run_recovery_study(config: ExperimentConfig, csv_path=None):
    """Recovery energies against the limit energy for every thickness in ``h_list``."""
    metric = config.build_metric()
    fn = config.candidate()
    if fn is None:
        raise ConfigError("a recovery study needs a closed-form immersion (set immersion=<name>)")
    mesh = config.mesh(metric)
    y = sample_immersion(fn, mesh)
    rows = convergence_study(y, metric, config.h_list, mesh=mesh, nz=config.nz)
    if csv_path is not None:
        write_convergence_csv(rows, csv_path, config.echo())
    return rows


# -- plots --------------------------------------------------------------------


def emit_plot(result, path) -> tuple[Path, Path]:
    """Log-log SVG of ``min_energy`` and ``min_energy/h^2`` against ``h``, plus the matching CSV.

    Output bytes depend only on the rows.
    """
    rows = result.rows if isinstance(result, ScalingStudyResult) else list(result)
    if not rows:
        raise EmptyResult("nothing to plot: the result has no rows")
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = sorted(rows, key=lambda r: -r.h)
    path = Path(path)
    csv_path = path.with_suffix(".csv")
    h = np.array([r.h for r in rows])
    e = np.array([r.min_energy for r in rows])
    with matplotlib.rc_context({"svg.hashsalt": "neplate", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(5.0, 3.6))
        # zero energies are masked by the log scale
        ax.plot(h, np.where(e > 0, e, np.nan), "o-", label="min energy")
        ax.plot(h, np.where(e > 0, e / h**2, np.nan), "s--", label="min energy / h^2")
        ax.set_xscale("log")
        ax.set_yscale("log", nonpositive="mask")
        ax.set_xlabel("h")
        ax.set_ylabel("energy")
        ax.legend()
        fig.tight_layout()
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
        plt.close(fig)
    path.write_text(buf.getvalue())
    with open(csv_path, "w") as fh:
        fh.write(SCALING_HEADER + "\n")
        for r in rows:
            fh.write(r.csv() + "\n")
    return path, csv_path
