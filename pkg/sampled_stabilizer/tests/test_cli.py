from __future__ import annotations

import csv
import json

import pytest

from app import __version__
from app.cli import EXIT_BLOWUP, EXIT_CONFIG, EXIT_OK, main
from app.control.export import trace_header
from app.control.scenarios import dump_run_config, preset


def _kv(text: str) -> dict:
    out = {}
    for line in text.splitlines():
        if "=" in line:
            key, _, value = line.partition("=")
            out[key] = value
    return out


def test_design_reproduces_published_gain(capsys):
    assert main(["design", "--n", "2", "--poles", "-3,-3"]) == EXIT_OK
    out = _kv(capsys.readouterr().out)
    assert json.loads(out["K"]) == [-9.0, -6.0]
    assert json.loads(out["CLOSED_LOOP_EIG_REAL"]) == [-3.0, -3.0]
    P = json.loads(out["P_Z"])
    assert P[0][0] == pytest.approx(7.0 / 6.0)


def test_design_explicit_gain(capsys):
    assert main(["design", "--n", "2", "--k", "-1,-2"]) == EXIT_OK
    assert json.loads(_kv(capsys.readouterr().out)["K"]) == [-1.0, -2.0]


def test_design_argument_errors(capsys):
    assert main(["design", "--n", "2"]) == EXIT_CONFIG
    assert main(["design", "--n", "2", "--k", "-1"]) == EXIT_CONFIG
    assert main(["design", "--n", "2", "--poles", "1,-1"]) == EXIT_CONFIG


def test_simulate_preset_writes_trace_and_summary(tmp_path, capsys):
    code = main(["simulate", "--preset", "double-integrator", "--out", str(tmp_path), "--oracle", "--emit-plots"])
    assert code == EXIT_OK
    out = _kv(capsys.readouterr().out)
    assert out["STATUS"] == "ok"
    assert out["STEPS"] == "2000"

    trace_csv = tmp_path / "double-integrator_trace.csv"
    with trace_csv.open(newline="") as f:
        rows = list(csv.reader(f))
    assert rows[0] == trace_header(2)
    assert len(rows) == 2002

    assert (tmp_path / "double-integrator_oracle_trace.csv").is_file()
    assert (tmp_path / "double-integrator_trace.gp").is_file()
    summary = _kv((tmp_path / "double-integrator_summary.txt").read_text())
    assert "LYAPUNOV_VIOLATIONS" in summary
    assert float(summary["TERMINAL_NORM"]) < 1e-3


def test_simulate_from_config_file(tmp_path, capsys):
    cfg = tmp_path / "di.json"
    cfg.write_text(dump_run_config(preset("double-integrator")), encoding="utf-8")
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "out")]) == EXIT_OK
    assert (tmp_path / "out" / "double-integrator_trace.csv").is_file()


def test_simulate_blowup_exit_code(tmp_path, capsys):
    data = json.loads(dump_run_config(preset("double-integrator")))
    data["name"] = "unstable"
    data["controller"]["gamma"] = 5.0
    cfg = tmp_path / "unstable.json"
    cfg.write_text(json.dumps(data), encoding="utf-8")

    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_BLOWUP
    assert _kv(capsys.readouterr().out)["STATUS"] == "blowup"
    assert (tmp_path / "unstable_trace.csv").is_file()
    assert _kv((tmp_path / "unstable_summary.txt").read_text())["STATUS"] == "blowup"


def test_simulate_bad_config_exit_code(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text('{"name": "x"}', encoding="utf-8")
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "plant" in err

    assert main(["simulate", "--config", str(tmp_path / "missing.json")]) == EXIT_CONFIG


def test_sweep_exact_model(tmp_path, capsys):
    code = main(["sweep", "--study", "taylor-remainder", "--preset", "double-integrator",
                 "--out", str(tmp_path), "--workers", "1"])
    assert code == EXIT_OK
    out = _kv(capsys.readouterr().out)
    assert out["VERDICT"] == "PASS"
    assert (tmp_path / "double-integrator_taylor-remainder.csv").is_file()
    report = json.loads((tmp_path / "double-integrator_taylor-remainder.json").read_text())
    assert report["passed"] is True


def test_sweep_unknown_study(capsys):
    assert main(["sweep", "--study", "bogus", "--preset", "double-integrator"]) == EXIT_CONFIG


def test_estimate_offline(tmp_path, capsys):
    samples = tmp_path / "samples.csv"
    lines = ["t,y"] + [f"{k * 0.1:.10g},{(k * 0.1) ** 2:.17g}" for k in range(10)]
    samples.write_text("\n".join(lines) + "\n", encoding="utf-8")
    out_csv = tmp_path / "zhat.csv"

    assert main(["estimate", "--input", str(samples), "--n", "2", "--rho", "3", "--out", str(out_csv)]) == EXIT_OK
    assert _kv(capsys.readouterr().out)["ROWS"] == "8"
    with out_csv.open(newline="") as f:
        rows = list(csv.DictReader(f))
    assert float(rows[-1]["zhat3"]) == pytest.approx(2.0, abs=1e-6)


def test_estimate_missing_input(tmp_path):
    assert main(["estimate", "--input", str(tmp_path / "none.csv"), "--n", "1", "--rho", "2"]) == EXIT_CONFIG


def test_presets_written_to_directory(tmp_path, capsys):
    assert main(["presets", "--out", str(tmp_path)]) == EXIT_OK
    names = sorted(p.name for p in tmp_path.glob("*.json"))
    assert names == ["chain-3.json", "double-integrator.json", "drone-emulated.json"]


def test_presets_schema(capsys):
    assert main(["presets", "--schema"]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["title"] == "RunConfig"


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert __version__ in capsys.readouterr().out


def test_usage_error_exits_one(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["simulate"])
    assert exc.value.code == EXIT_CONFIG
