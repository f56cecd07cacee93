import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import neplate.experiments as ex
from neplate.errors import ConfigError, EmptyResult, LineSearchFailure, TooFewRows
from neplate.experiments import (
    ExperimentConfig,
    ScalingRow,
    Thresholds,
    classify_immersability,
    emit_plot,
    read_scaling_csv,
    run_recovery_study,
    run_scaling,
)


def rows_from(values, hs=(0.2, 0.1, 0.05, 0.025)):
    return [ScalingRow(h, v * h**2, 10, True) for h, v in zip(hs, values)]


# -- configuration ------------------------------------------------------------


def test_config_parsing(tmp_path):
    text = """
    # a comment
    metric = sphere
    h_list = 0.2, 0.1,0.05   # trailing comment
    nz = 5
    metric_param.R = 2.0
    """
    cfg = ExperimentConfig.from_text(text, seed=7)
    assert cfg.metric == "sphere" and cfg.h_list == (0.2, 0.1, 0.05)
    assert cfg.nz == 5 and cfg.seed == 7 and cfg.metric_params == {"R": 2.0}
    assert "# metric=sphere" in cfg.echo()
    path = tmp_path / "c.cfg"
    path.write_text(text)
    assert ExperimentConfig.from_file(path) == ExperimentConfig.from_text(text)


@pytest.mark.parametrize("text", [
    "bogus = 1",
    "nz = 4",
    "h_list = 0.1, 0.2",
    "h_list = 0.1, -0.2",
    "metric = torus",
    "init = random",
    "nx = many",
    "no equals sign",
    "band_lo = 3",
])
def test_config_errors(text):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_text(text)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_file(tmp_path / "absent.cfg")


# -- classifier ---------------------------------------------------------------


def test_classifier_examples():
    assert classify_immersability(rows_from([0.0, 0.0, 0.0, 0.0])) == "flat"
    assert classify_immersability(rows_from([0.7, 0.7, 0.7, 0.7])) == "immersible_W22"
    assert classify_immersability(rows_from([1.0, 8.0, 64.0], hs=(0.2, 0.1, 0.05))) == "obstructed"
    assert classify_immersability(rows_from([1.0, 0.1, 1e-3])) == "flat"
    assert classify_immersability(rows_from([1.0, 3.0, 5.0])) == "inconclusive"
    with pytest.raises(TooFewRows):
        classify_immersability(rows_from([0.7, 0.7]))


def test_classifier_ignores_unconverged_rows():
    rows = rows_from([0.7, 0.7, 0.7]) + [ScalingRow(0.0125, 1e3, 5000, False)]
    assert classify_immersability(rows) == "immersible_W22"
    rows = rows_from([0.7, 0.7]) + [ScalingRow(0.05, 0.7 * 0.05**2, 5000, False)]
    with pytest.raises(TooFewRows):
        classify_immersability(rows)


def test_classifier_row_order_irrelevant():
    rows = rows_from([1.0, 8.0, 64.0, 512.0])
    assert classify_immersability(rows[::-1]) == classify_immersability(rows) == "obstructed"


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(1e-6, 1e3), min_size=3, max_size=6),
       st.floats(1e-3, 1e3))
def test_classifier_scale_consistency(values, scale):
    # scaling all energies leaves the verdict unchanged unless the flat floor is crossed
    th = Thresholds(eps_flat=0.0)
    hs = [0.4 / 2**k for k in range(len(values))]
    a = classify_immersability(rows_from(values, hs), th)
    b = classify_immersability(rows_from([scale * v for v in values], hs), th)
    assert a == b


# -- sweeps -------------------------------------------------------------------


SMALL = dict(nx=8, ny=8, nz=3, h_list=(0.2, 0.1, 0.05))


def test_identity_sweep_is_flat(tmp_path):
    cfg = ExperimentConfig(metric="identity", output_dir=str(tmp_path), **SMALL)
    path = tmp_path / "scaling.csv"
    result = run_scaling(cfg, path)
    assert result.verdict == "flat" and not result.aborted
    assert all(r.min_energy <= 1e-12 for r in result.rows)
    text = path.read_text()
    assert "# metric=identity" in text and "# verdict=flat" in text
    back = read_scaling_csv(path)
    assert [r.h for r in back] == [0.2, 0.1, 0.05]
    assert [r.min_energy for r in back] == [r.min_energy for r in sorted(result.rows, key=lambda r: -r.h)]


def test_partial_failure_flushes_rows(tmp_path, monkeypatch):
    real = ex._scaling_row

    def flaky(metric, mesh, y, h, config):
        if h == 0.05:
            raise LineSearchFailure("synthetic failure")
        return real(metric, mesh, y, h, config)

    monkeypatch.setattr(ex, "_scaling_row", flaky)
    cfg = ExperimentConfig(metric="identity", output_dir=str(tmp_path), **SMALL)
    path = tmp_path / "scaling.csv"
    result = run_scaling(cfg, path)
    assert result.aborted and result.verdict == "inconclusive"
    assert len(result.rows) == 2
    assert len(read_scaling_csv(path)) == 2
    assert "# aborted=h=0.05" in path.read_text()


def test_too_few_rows_is_inconclusive(tmp_path):
    cfg = ExperimentConfig(metric="identity", nx=6, ny=6, nz=3, h_list=(0.2, 0.1))
    result = run_scaling(cfg)
    assert result.verdict == "inconclusive" and "at least 3" in result.note


def test_recovery_study_for_flat_metric(tmp_path):
    cfg = ExperimentConfig(metric="identity", **SMALL)
    path = tmp_path / "recovery.csv"
    rows = run_recovery_study(cfg, path)
    assert all(math.isnan(r.ratio) for r in rows)
    body = [l for l in path.read_text().splitlines() if not l.startswith("#")]
    assert body[0] == "h,energy_over_h2,limit_energy,ratio"
    assert all(l.endswith(",N/A") for l in body[1:])


# -- plots --------------------------------------------------------------------


def test_plot_outputs_are_reproducible(tmp_path):
    rows = rows_from([1.0, 8.0, 64.0], hs=(0.2, 0.1, 0.05))
    svg, csv = emit_plot(rows, tmp_path / "a.svg")
    text = svg.read_text()
    assert text.count("<path") > 0 and text.count("min energy") >= 2
    assert len(csv.read_text().splitlines()) == 4
    first = svg.read_bytes()
    svg2, _ = emit_plot(rows, tmp_path / "a.svg")
    assert svg2.read_bytes() == first
    svg3, _ = emit_plot(rows[::-1], tmp_path / "b.svg")
    assert svg3.read_bytes() == first


def test_plot_of_nothing():
    with pytest.raises(EmptyResult):
        emit_plot([], "never.svg")
