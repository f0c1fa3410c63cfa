import json
import math

import numpy as np
import pytest

from pamgap.cli import main
from pamgap.harness import (
    ExperimentConfig,
    LADDER_COLUMNS,
    bump,
    emit,
    fit_slope,
    make_phi,
    read_csv,
    render,
    run_correction,
    run_first_order_check,
    run_k_convergence,
    run_ladder,
)
from pamgap.wick import ConfigError

SMALL = dict(K=4, N=3, eps_ladder=(0.2, 0.1), seeds=(1, 2), x_grid=(0.5, 1.5, 2.5))


@pytest.mark.parametrize("bad", [
    dict(N=1),
    dict(eps_ladder=(0.1, 0.2)),
    dict(eps_ladder=(0.1, 0.1)),
    dict(eps_ladder=(0.1, -0.05)),
    dict(x_grid=(0.1, 3.5)),
    dict(T=0.0),
    dict(t_report=(0.3, 0.2)),
    dict(t_report=(0.2, 0.7)),
    dict(phi="cosine"),
    dict(phi="coeffs"),
    dict(seeds=(-1,)),
    dict(scheme="rk4"),
    dict(workers=0),
])
def test_config_validation(bad):
    with pytest.raises(ConfigError):
        ExperimentConfig(**bad).validate()


def test_config_roundtrip_and_hash():
    cfg = ExperimentConfig(**SMALL)
    back = ExperimentConfig.from_dict(cfg.to_dict())
    assert back == cfg and back.config_hash() == cfg.config_hash()
    assert ExperimentConfig(**SMALL, workers=4).config_hash() == cfg.config_hash()
    assert ExperimentConfig(**{**SMALL, "K": 5}).config_hash() != cfg.config_hash()
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"K": 4, "colour": 1})


def test_phi_presets():
    assert make_phi("sin", 3).coeffs.tolist() == [math.sqrt(math.pi / 2), 0, 0]
    np.testing.assert_array_equal(make_phi("coeffs", 4, [1.0, 2.0]).coeffs, [1, 2, 0, 0])
    b = make_phi("bump", 16)
    assert b.coeffs[1] == pytest.approx(0, abs=1e-14)  # even about pi/2
    assert bump(np.array([0.1, np.pi / 2, 3.0])).tolist() == [0.0, 1.0, 0.0]


def test_fit_slope():
    eps = [0.2, 0.1, 0.05]
    assert fit_slope(eps, [3 * e**2 for e in eps], 0.0) == pytest.approx(2.0)
    assert fit_slope([0.1], [1e-2], 0.0) is None
    # points below the floor are dropped, leaving too few to fit
    assert fit_slope(eps, [1e-3, 1e-12, 1e-13], 1e-12) is None


def test_single_eps_ladder_reports_absent_slope():
    report = run_ladder(ExperimentConfig(**{**SMALL, "eps_ladder": (0.1,)}))
    assert all(v is None for v in report.slope_fits.values())
    fits = json.loads(render(report, "json"))["slope_fits"]
    assert fits and all(f["slope"] is None for f in fits)


def test_ladder_rows_and_columns():
    cfg = ExperimentConfig(**SMALL, t_report=(0.25, 0.5))
    report = run_ladder(cfg)
    assert report.columns == LADDER_COLUMNS == [
        "seed", "t", "x", "eps", "u_wick", "u_strat", "gap", "scaled_gap", "correction_ref", "noise_floor"]
    assert len(report.rows) == 2 * 2 * 2 * 3
    for r in report.rows:
        assert r.gap == r.u_strat - r.u_wick
        assert r.scaled_gap == r.gap / r.eps**2
    assert report.failures == 0
    assert set(report.diagnostics) >= {"series_decay", "hgamma_max", "correction_limit"}


def test_csv_roundtrip_is_exact(tmp_path):
    report = run_ladder(ExperimentConfig(**SMALL))
    path = tmp_path / "ladder.csv"
    emit(report, "csv", path)
    header, rows = read_csv(path)
    assert header == LADDER_COLUMNS
    first = path.read_text().splitlines()[0]
    assert report.metadata["config_hash"] in first and "seeds=1,2" in first
    for parsed, row in zip(rows, report.rows):
        for name, text in zip(header, parsed):
            assert float(text) == float(getattr(row, name))


def test_json_contains_hash_and_unknown_format(tmp_path):
    cfg = ExperimentConfig(**SMALL)
    report = run_ladder(cfg)
    path = tmp_path / "r.json"
    emit(report, "json", path)
    data = json.loads(path.read_text())
    assert data["metadata"]["config_hash"] == cfg.config_hash()
    assert data["metadata"]["seeds"] == [1, 2]
    with pytest.raises(ConfigError):
        render(report, "xml")


def test_emit_reports_path_on_io_error(tmp_path):
    report = run_ladder(ExperimentConfig(**SMALL))
    bad = tmp_path / "missing" / "r.csv"
    with pytest.raises(OSError, match="missing"):
        emit(report, "csv", bad)


@pytest.mark.parametrize("fmt", ["csv", "json"])
def test_reports_byte_identical_across_thread_counts(fmt):
    texts = {render(run_ladder(ExperimentConfig(**SMALL, workers=w)), fmt) for w in (1, 1, 4)}
    assert len(texts) == 1


def test_first_order_check_passes_and_trivial_cases():
    report = run_first_order_check(ExperimentConfig(K=8, seeds=(1, 2, 3)))
    assert report.summary["passed"], report.summary
    zero = run_first_order_check(ExperimentConfig(K=4, phi="coeffs", phi_coeffs=(0.0,), seeds=(1,)))
    assert all(v == 0 for r in zero.rows for v in r[2:])


def test_k_convergence_eps_zero_is_exact():
    cfg = ExperimentConfig(K=4, seeds=(1, 2))
    report = run_k_convergence(cfg, eps=0.0)
    assert all(r[4] == 0.0 for r in report.rows)
    report = run_k_convergence(cfg, eps=0.3)
    assert all(report.summary["decreasing"].values())
    assert all(r[4] > 0 for r in report.rows)


def test_correction_report_columns():
    report = run_correction(ExperimentConfig(K=4, K_diag=8, x_grid=(0.0, 1.0, np.pi)))
    assert report.columns == ["t", "x", "value", "extrapolated", "truncated_noise"]
    assert report.rows[0][2] == 0.0


def test_cli_ladder_csv(tmp_path, capsys):
    out = tmp_path / "l.csv"
    code = main(["ladder", "--modes", "4", "--chaos-order", "3", "--eps", "0.2,0.1", "--seeds", "1-2",
                 "--x-grid", "1.0,2.0", "--out", str(out)])
    assert code == 0
    header, rows = read_csv(out)
    assert header == LADDER_COLUMNS and len(rows) == 2 * 2 * 2


def test_cli_config_file_and_override(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"K": 4, "N": 3, "seeds": [3], "eps_ladder": [0.1]}))
    out = tmp_path / "r.json"
    assert main(["first-order", "--config", str(cfg), "--modes", "5", "--format", "json", "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    assert data["metadata"]["config"]["K"] == 5 and data["metadata"]["seeds"] == [3]


@pytest.mark.parametrize("argv", [
    ["ladder", "--chaos-order", "1"],
    ["ladder", "--eps", "0.1,0.2"],
    ["ladder", "--phi", "1.0,abc"],
    ["ladder", "--config", "/nonexistent/config.json"],
])
def test_cli_config_errors_exit_2(argv, capsys):
    assert main(argv) == 2
    assert "config error" in capsys.readouterr().err


def test_cli_usage_errors():
    with pytest.raises(SystemExit) as exc:
        main(["ladder", "--format", "xml"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit):
        main(["plot"])


def test_cli_stdout(capsys):
    assert main(["correction", "--modes", "4", "--diag-modes", "8", "--x-grid", "1.0"]) == 0
    text = capsys.readouterr().out
    assert text.startswith("# config_hash=") and "extrapolated" in text


def test_numerical_cell_failure_exits_3(monkeypatch, tmp_path, capsys):
    import pamgap.harness as harness

    real = harness.strat_solution

    def flaky(phi, nr, eps, t, K=None):
        if eps == 0.1:
            raise FloatingPointError("injected")
        return real(phi, nr, eps, t, K)

    monkeypatch.setattr(harness, "strat_solution", flaky)
    out = tmp_path / "l.csv"
    code = main(["ladder", "--modes", "4", "--chaos-order", "3", "--eps", "0.2,0.1", "--seeds", "1",
                 "--x-grid", "1.0", "--out", str(out)])
    assert code == 3
    assert "failed numerically" in capsys.readouterr().err
    _, rows = read_csv(out)
    assert any(r[4] == "nan" for r in rows) and any(r[4] != "nan" for r in rows)
