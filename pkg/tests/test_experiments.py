import csv
import json

import numpy as np
import pytest

from fedbnr.cli import main
from fedbnr.errors import ConfigError
from fedbnr.experiments import cmd_run, kernel_check, parse_config

TINY = {
    "dataset": {"kind": "synthetic_1d", "n": 60},
    "partition": {"kind": "range", "boundaries": [0.0]},
    "kernel": {"hidden": [4], "latent_dim": 2, "shifter": None, "m": 6},
    "run": {"local_epochs": 2, "max_rounds": 2},
    "seeds": [0, 1],
}


def tiny(tmp_path, **overrides):
    raw = json.loads(json.dumps(TINY))
    raw.update(overrides)
    raw["output_dir"] = str(tmp_path / "out")
    return raw


def test_defaults_follow_protocol():
    config = parse_config({})
    assert (config.kernel.m, config.run.local_epochs, config.run.max_rounds) == (50, 50, 100)
    assert config.run.patience == 5
    assert config.run.lr == config.run.kd_lr == 1e-3


@pytest.mark.parametrize("raw, path", [
    ({"bogus": 1}, "bogus"),
    ({"run": {"learning_rate": 0.1}}, "run.learning_rate"),
    ({"run": {"mode": "avg+nothing"}}, "run.mode"),
    ({"kernel": {"m": "fifty"}}, "kernel.m"),
    ({"seeds": []}, "seeds"),
    ({"dataset": {"kind": "csv"}}, "dataset.path"),
])
def test_config_errors_name_the_field(raw, path):
    with pytest.raises(ConfigError) as info:
        parse_config(raw)
    assert info.value.path == path
    assert str(info.value).startswith(path)


def test_config_hash_ignores_output_dir():
    a = parse_config({"output_dir": "x"})
    assert a.config_hash() == parse_config({"output_dir": "y"}).config_hash()
    assert a.config_hash() != parse_config({"seeds": [1]}).config_hash()


def test_run_writes_records_and_summary(tmp_path):
    records, rows = cmd_run(parse_config(tiny(tmp_path)))
    out = tmp_path / "out"
    assert sorted(p.name for p in out.glob("*.json")) == ["avg_global_seed0.json",
                                                          "avg_global_seed1.json"]
    assert len(rows) == 1
    with open(out / "summary.csv") as fh:
        summary = list(csv.DictReader(fh))
    assert len(summary) == 1
    rmses = [r["test"]["rmse"] for r in records]
    assert float(summary[0]["rmse_mean"]) == pytest.approx(np.mean(rmses))
    assert float(summary[0]["rmse_sem"]) == pytest.approx(np.std(rmses, ddof=1) / np.sqrt(2))
    record = json.loads((out / "avg_global_seed0.json").read_text())
    assert record["rounds"][0]["round"] == 0
    assert set(record["test"]) == {"rmse", "ece", "mce", "brier"}


def test_ablation_sweep_has_six_rows(tmp_path):
    raw = tiny(tmp_path, ablation_sweep=True, seeds=[0])
    raw["run"]["kd_epochs"] = 1
    _, rows = cmd_run(parse_config(raw))
    assert len(rows) == 6
    assert len(list((tmp_path / "out").glob("*.json"))) == 6


def test_records_are_byte_identical(tmp_path):
    config = parse_config(tiny(tmp_path, seeds=[3]))
    cmd_run(config, tmp_path / "a")
    cmd_run(config, tmp_path / "b")
    assert (tmp_path / "a" / "avg_global_seed3.json").read_bytes() == \
        (tmp_path / "b" / "avg_global_seed3.json").read_bytes()


def test_cli_run_and_bad_config(tmp_path, capsys):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(tiny(tmp_path, seeds=[0])))
    assert main(["run", str(path)]) == 0
    assert "avg+global" in capsys.readouterr().out
    path.write_text(json.dumps({"nope": 1}))
    assert main(["run", str(path)]) == 2
    assert "nope" in capsys.readouterr().err


def test_cli_kernel_check_small(capsys):
    assert main(["kernel-check", "--m-max", "1000"]) == 0
    out = capsys.readouterr().out
    assert "psd" in out and "diagonal = 1.000000000000000" in out


def test_kernel_check_report_structure():
    report = kernel_check(m_values=(100, 1000), n_pairs=10)
    assert set(report["constructions"]) == {"rff", "exp", "poly"}
    assert report["rff_diagonal_max_deviation"] < 1e-12


def test_cli_synthetic_fig2(tmp_path, capsys):
    assert main(["synthetic-fig2", "--out", str(tmp_path)]) == 0
    assert "fedbnr_rmse" in capsys.readouterr().out
    grid = np.genfromtxt(tmp_path / "fig2_prediction.csv", delimiter=",", names=True)
    assert grid.size >= 200 and grid["x"][0] == -5.0 and grid["x"][-1] == 5.0
    assert np.all(grid["lower95"] < grid["mean"]) and np.all(grid["mean"] < grid["upper95"])
    with open(tmp_path / "fig2_new_client.csv") as fh:
        rows = list(csv.DictReader(fh))
    curve = np.array([float(r["fedbnr_rmse"]) for r in rows if r["client_range"] == "[-5,5]"])
    assert np.max(np.abs(curve / curve.mean() - 1)) <= 0.2


def test_run_from_csv_file(tmp_path):
    rng = np.random.default_rng(0)
    x = rng.uniform(-2, 2, (80, 2))
    rows = "\n".join(f"{a!r},{b!r},{a - b!r}" for a, b in x.tolist())
    (tmp_path / "d.csv").write_text("a,b,t\n" + rows + "\n")
    raw = tiny(tmp_path, seeds=[0])
    raw["dataset"] = {"kind": "csv", "path": str(tmp_path / "d.csv"), "target": "t"}
    raw["partition"] = {"kind": "correlation", "num_clients": 3}
    records, _ = cmd_run(parse_config(raw))
    assert records[0]["sizes"] == {"train": 64, "test": 8, "valid": 8, "kd": 0, "clients": 3}
