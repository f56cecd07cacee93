"""Command-line front end.

Exit codes: 0 on success, 2 for configuration errors, 3 for numerical failures.
"""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from .errors import ConfigError, NeplateError
from .experiments import (
    ExperimentConfig,
    emit_plot,
    read_scaling_csv,
    run_recovery_study,
    run_scaling,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

log = logging.getLogger("neplate")


def _geometry(cfg: ExperimentConfig) -> int:
    from .metric import gaussian_curvature, interior_sample_points, riemann_flat_3d

    metric = cfg.build_metric()
    pts = interior_sample_points(metric)
    K = gaussian_curvature(metric, pts)
    report = riemann_flat_3d(metric, pts)
    path = cfg.output_path("geometry.csv")
    with open(path, "w") as fh:
        fh.write(cfg.echo())
        fh.write("x1,x2,gaussian_curvature\n")
        for p, k in zip(pts.reshape(-1, 2), K.ravel()):
            fh.write(f"{p[0]!r},{p[1]!r},{k!r}\n")
    print(f"metric={metric.describe()} K_min={K.min():.10g} K_max={K.max():.10g} "
          f"max_abs_riemann={report.max_abs_riemann:.3g} flat={report.flat}")
    return EXIT_OK


def _minimize3d(cfg: ExperimentConfig) -> int:
    from .grids import Grid3D
    from .plate3d import init_deformation, minimize_Ih, write_deformation

    metric = cfg.build_metric()
    mesh = cfg.mesh(metric)
    grid = Grid3D.over(mesh, cfg.nz, cfg.single_h)
    y = None
    if cfg.init == "from_recovery":
        fn = cfg.candidate()
        if fn is None:
            raise ConfigError("init=from_recovery needs a closed-form immersion")
        from .immersions import sample_immersion

        y = sample_immersion(fn, mesh)
    init = init_deformation(cfg.init, grid, metric=metric, y=y, amplitude=cfg.amplitude, seed=cfg.seed)
    field, rep = minimize_Ih(metric, grid, init, cfg.lbfgs_options)
    write_deformation(field, cfg.output_path("deformation.csv"))
    print(f"h={grid.h!r} energy={rep.energy!r} energy_over_h2={rep.energy / grid.h**2!r} "
          f"iterations={rep.iterations} converged={rep.converged} ({rep.message})")
    return EXIT_OK


def _minimize2d(cfg: ExperimentConfig) -> int:
    from .immersions import plane, sample_immersion
    from .kirchhoff import minimize_limit, write_immersion

    metric = cfg.build_metric()
    mesh = cfg.mesh(metric)
    fn = cfg.candidate() or plane
    y0 = sample_immersion(fn, mesh)
    if cfg.amplitude:
        y0 = y0 + np.random.default_rng(cfg.seed).uniform(-cfg.amplitude, cfg.amplitude, y0.shape)
    imm, rep = minimize_limit(metric, mesh, y0, cfg.penalties, cfg.lbfgs_options)
    write_immersion(imm, cfg.output_path("immersion.csv"))
    print(f"limit_energy={rep.energy!r} isometry_defect={rep.defect!r} "
          f"iterations={rep.iterations} converged={rep.converged}")
    return EXIT_OK


def _recovery(cfg: ExperimentConfig) -> int:
    rows = run_recovery_study(cfg, cfg.output_path("recovery.csv"))
    for r in rows:
        print(r.csv())
    return EXIT_OK


def _scaling(cfg: ExperimentConfig) -> int:
    result = run_scaling(cfg, cfg.output_path("scaling.csv"))
    if result.rows:
        emit_plot(result, cfg.output_path("scaling_plot.svg"))
    print(f"verdict={result.verdict} slope={result.slope:.4g} ({result.note})")
    if result.aborted:
        print(f"aborted: {result.error}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def _rigidity(cfg: ExperimentConfig) -> int:
    from .grids import Grid3D
    from .rigidity import SamplerSpec, rigidity_sweep

    metric = cfg.build_metric()
    grid = Grid3D.over(cfg.mesh(metric), cfg.nz, cfg.single_h)
    try:
        spec = SamplerSpec(cfg.rigidity_families, cfg.rigidity_amplitude)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    report = rigidity_sweep(metric, grid, spec, cfg.rigidity_n, cfg.seed, cfg.threads)
    report.write_csv(cfg.output_path("rigidity.csv"))
    print(report.summary().lstrip("# "))
    return EXIT_OK


def _plot(cfg: ExperimentConfig, source: str | None) -> int:
    source = source or cfg.input
    if source is None:
        raise ConfigError("plot needs an input scaling CSV (positional argument or input=<path>)")
    try:
        rows = read_scaling_csv(source)
    except OSError as exc:
        raise ConfigError(f"cannot read {source}: {exc}") from None
    svg, csv = emit_plot(rows, cfg.output_path("scaling_plot.svg"))
    print(f"wrote {svg} and {csv}")
    return EXIT_OK


COMMANDS = {
    "geometry": "curvature report for the configured metric",
    "minimize3d": "minimize the plate energy at one thickness",
    "minimize2d": "minimize the penalized limit energy",
    "recovery": "recovery-sequence convergence table",
    "scaling": "thickness sweep with immersibility verdict",
    "rigidity": "sampled rigidity-estimate sweep",
    "plot": "plot a scaling CSV",
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="key=value config file")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS)
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="neplate", parents=[common],
                                     description="Thin non-Euclidean plate experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=text, description=text)
        if name == "plot":
            p.add_argument("input", nargs="?", help="scaling CSV to plot")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    opts = vars(args)
    logging.basicConfig(level=logging.INFO if opts.get("verbose") else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {"output_dir": opts.get("out"), "seed": opts.get("seed"), "threads": opts.get("threads")}
    try:
        if opts.get("config"):
            cfg = ExperimentConfig.from_file(opts["config"], **overrides)
        else:
            cfg = ExperimentConfig.from_text("", **overrides)
        if args.command == "plot":
            return _plot(cfg, opts.get("input"))
        handler = globals()[f"_{args.command}"]
        return handler(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NeplateError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
