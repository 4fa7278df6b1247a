import json
import subprocess
import sys
from pathlib import Path

import pytest

from domainorder.cli import main, shipped_config
from domainorder.experiments import AGGREGATE_SCHEMA, ExperimentConfig
from domainorder.reports import read_csv_report, write_csv_report

SHIPPED = ["table1.json", "field_scan.json", "loss_dynamics.json", "mlp_intervention.json", "mlp_imbalance.json"]


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    lines = [l for l in out.out.splitlines() if l.strip()]
    return code, json.loads(lines[-1]), out.err


# --- reports ----------------------------------------------------------------


def test_csv_header_only_and_round_trip(tmp_path):
    path = write_csv_report([], AGGREGATE_SCHEMA, tmp_path / "a.csv")
    assert path.read_bytes() == b"t,eps,median_ratio,p10_ratio,p90_ratio,n_seeds\n"
    values = [0.1, 1 / 3, 2.0**-1074, 1e308, -0.0, 7]
    write_csv_report([values], AGGREGATE_SCHEMA, tmp_path / "b.csv")
    header, rows = read_csv_report(tmp_path / "b.csv")
    assert header == AGGREGATE_SCHEMA
    assert [float(x) for x in rows[0][:5]] == values[:5]
    assert rows[0][5] == "7"
    assert b"\r" not in (tmp_path / "b.csv").read_bytes()


def test_csv_booleans_and_errors(tmp_path):
    write_csv_report([{"a": True, "b": False}], ["a", "b"], tmp_path / "c.csv")
    assert (tmp_path / "c.csv").read_text() == "a,b\ntrue,false\n"
    with pytest.raises(ValueError):
        write_csv_report([{"a": 1}], ["a", "b"], tmp_path / "d.csv")
    with pytest.raises(ValueError):
        write_csv_report([[1]], ["a", "b"], tmp_path / "d.csv")
    with pytest.raises(OSError, match="missing-dir"):
        write_csv_report([], ["a"], tmp_path / "missing-dir" / "x.csv")


# --- CLI --------------------------------------------------------------------


@pytest.mark.parametrize("name", SHIPPED)
def test_validate_accepts_shipped_configs(capsys, name):
    code, summary, _ = run_cli(capsys, "validate-config", name)
    assert code == 0 and summary["status"] == "ok"
    assert shipped_config(name).exists()


def test_validate_schedule_sum(capsys, tmp_path):
    bad = tmp_path / "s.json"
    bad.write_text(json.dumps({"breakpoints": [0, 1], "weights": [[0.5, 0.5], [0.6, 0.6]]}))
    code, summary, err = run_cli(capsys, "validate-config", str(bad))
    assert code == 1
    assert summary["violations"] == ["segment 1: weights sum to 1.2, not 1"]
    assert "segment 1" in err
    good = tmp_path / "g.json"
    good.write_text(json.dumps({"breakpoints": [0, 1], "weights": [[0.5, 0.5], [1, 0]]}))
    assert run_cli(capsys, "validate-config", str(good))[0] == 0


def test_validate_with_overrides(capsys):
    code, summary, _ = run_cli(capsys, "validate-config", "table1.json", "--set", "num_seeds=0")
    assert code == 1 and "num_seeds" in summary["violations"][0]


def test_list_experiments(capsys):
    code, summary, err = run_cli(capsys, "list-experiments")
    assert code == 0
    assert summary["experiments"] == ["field_scan", "loss_dynamics", "mlp_intervention", "quad_commutation"]
    assert "quad_commutation" in err


def test_unknown_experiment_and_missing_file(capsys, tmp_path):
    code, summary, _ = run_cli(capsys, "run", "field_scan.json", "--set", "experiment=bogus", "-o", str(tmp_path))
    assert code == 1 and "quad_commutation" in summary["error"]
    code, summary, _ = run_cli(capsys, "run", str(tmp_path / "none.json"), "-o", str(tmp_path))
    assert code == 1 and summary["status"] == "config-error"


def test_run_table1_smoke_and_force(capsys, tmp_path):
    out = tmp_path / "t1"
    args = ["run", "table1.json", "-o", str(out), "--set", "num_seeds=2", "--set", "dim=8", "--set", "workers=1"]
    code, summary, err = run_cli(capsys, *args)
    assert code == 0 and summary["status"] == "ok"
    assert {p.name for p in out.iterdir()} == {"table1_rows.csv", "table1_aggregate.csv", "manifest.json"}
    assert "seed 2/2" in err
    manifest = json.loads((out / "manifest.json").read_text())
    assert ExperimentConfig.from_dict(manifest["config"]).num_seeds == 2
    assert manifest["content_hash"] == summary["content_hash"]
    code, summary, _ = run_cli(capsys, *args)
    assert code == 1 and "--force" in summary["error"]
    code, summary, _ = run_cli(capsys, *args, "--force")
    assert code == 0


def test_output_dir_from_environment(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("DOMAINORDER_OUTPUT", str(tmp_path / "envdir"))
    code, _, _ = run_cli(capsys, "run", "field_scan.json", "--set", "grid.resolution=5")
    assert code == 0 and (tmp_path / "envdir" / "field_scan.csv").exists()


def test_numeric_failure_exit_code(capsys, tmp_path):
    cfg = tmp_path / "diverge.json"
    cfg.write_text(json.dumps({
        "experiment": "mlp_intervention", "gd": {"learning_rate": 1000.0}, "checkpoints": [5],
        "intervention_steps": 2, "hvp": {"mode": "fd"},
        "mlp": {"n_in": 4, "n_hidden": 3, "n_out": 1, "n_samples": 16},
    }))
    code, summary, _ = run_cli(capsys, "run", str(cfg), "-o", str(tmp_path / "o"))
    assert code == 2 and "step" in summary["error"]


def test_scan_stored_trajectory(capsys, tmp_path):
    out = tmp_path / "ld"
    code, _, _ = run_cli(capsys, "run", "loss_dynamics.json", "-o", str(out), "--set", "num_starts=1",
                         "--set", "horizon=2.0", "--set", "integrator.h=0.05")
    assert code == 0
    code, summary, _ = run_cli(capsys, "scan", str(out), "--stem", "trajectory_00")
    assert code == 0 and summary["checked_times"] > 0
    header, rows = read_csv_report(Path(summary["output"]))
    assert header == ["t", "i", "j", "p_value", "w_i", "w_j", "recommendation"]
    assert len(rows) == summary["violations"]
    code, summary, _ = run_cli(capsys, "scan", str(out), "--stem", "trajectory_00", "--target", "0",
                               "-o", str(tmp_path / "v.csv"))
    assert code == 0 and (tmp_path / "v.csv").exists()


def test_calibrate_prints_coefficient(capsys):
    code, summary, _ = run_cli(capsys, "calibrate", "--seeds", "1", "--set", "dim=8")
    assert code == 0
    assert summary["coefficient"] == pytest.approx(1.0, abs=1e-3)
    assert len(summary["eps_ratios"]) == 2


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "domainorder", "list-experiments"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "field_scan" in json.loads(proc.stdout)["experiments"]
