import csv
import json
import os

import pytest

from maredge.cli import main

DESK = ["--set", "num_miot=3", "--set", "num_uav=2", "--set", "num_vessel=1",
        "--set", "horizon=12", "--set", "arrival_mean=5.0"]
TINY_LEARNER = ["--episodes", "2", "--hidden", "8", "8",
                "--batch-size", "8", "--update-every", "6"]

ARTIFACTS = ("metrics.json", "timeseries.csv", "drift.csv",
             "trajectory.jsonl", "events.csv")


def read_bytes(path):
    with open(path, "rb") as fh:
        return fh.read()


def run_cli(argv):
    return main(argv)


# ---------------------------------------------------------------------------
# single runs


def test_run_writes_parseable_artifacts(tmp_path):
    out = tmp_path / "run"
    assert run_cli(["run", "--policy", "ro", "--seed", "7",
                    "--out", str(out), *DESK]) == 0
    for name in ARTIFACTS:
        assert (out / name).exists(), name
    with open(out / "metrics.json", encoding="utf-8") as fh:
        metrics = json.load(fh)
    for key in ("policy", "seed", "mean_reward", "avg_completion",
                "avg_response", "edge_pct", "completed_tasks"):
        assert key in metrics
    assert metrics["policy"] == "ro"
    assert metrics["seed"] == 7
    with open(out / "timeseries.csv", newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["slot", "reward", "phi", "objective",
                       "bits_local", "bits_uav", "bits_vessel"]
    assert len(rows) == 13  # header + one row per slot
    with open(out / "drift.csv", newline="", encoding="utf-8") as fh:
        drift = list(csv.reader(fh))
    assert drift[0] == ["t", "lyapunov", "drift", "penalty", "objective",
                        "d_const", "bound_slack", "bound_holds"]
    assert all(row[-1] == "1" for row in drift[1:])


def test_run_is_byte_identical(tmp_path):
    outs = []
    for rep in range(2):
        out = tmp_path / f"rep{rep}"
        assert run_cli(["run", "--policy", "gct", "--seed", "3",
                        "--out", str(out), *DESK]) == 0
        outs.append(out)
    for name in ARTIFACTS:
        assert read_bytes(outs[0] / name) == read_bytes(outs[1] / name), name


def test_timeseries_consistent_with_trajectory(tmp_path):
    out = tmp_path / "run"
    run_cli(["run", "--policy", "clb", "--seed", "1", "--out", str(out), *DESK])
    with open(out / "trajectory.jsonl", encoding="utf-8") as fh:
        records = [json.loads(line) for line in fh]
    with open(out / "timeseries.csv", newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    assert len(records) == len(rows)
    for rec, row in zip(records, rows):
        assert int(row["slot"]) == rec["slot"]
        for field in ("reward", "phi", "objective",
                      "bits_local", "bits_uav", "bits_vessel"):
            assert float(row[field]) == rec[field]


def test_oracle_policy_runs_small_instances(tmp_path):
    out = tmp_path / "run"
    assert run_cli(["run", "--policy", "oracle", "--seed", "0",
                    "--out", str(out), *DESK]) == 0
    with open(out / "metrics.json", encoding="utf-8") as fh:
        assert json.load(fh)["policy"] == "oracle"


def test_oracle_rejects_large_instance(tmp_path, capsys):
    out = tmp_path / "run"
    code = run_cli(["run", "--policy", "oracle", "--seed", "0",
                    "--out", str(out), "--set", "num_miot=10",
                    "--set", "horizon=5"])
    assert code == 2
    assert "error:" in capsys.readouterr().err


def test_bad_set_syntax_exits_with_error(tmp_path, capsys):
    code = run_cli(["run", "--policy", "gct", "--out", str(tmp_path / "x"),
                    "--set", "num_miot:3"])
    assert code == 2
    assert "KEY=VALUE" in capsys.readouterr().err


def test_unknown_config_key_exits_with_error(tmp_path, capsys):
    code = run_cli(["run", "--policy", "gct", "--out", str(tmp_path / "x"),
                    "--set", "warp_drive=1"])
    assert code == 2
    assert "warp_drive" in capsys.readouterr().err


def test_config_file_and_overrides(tmp_path):
    cfg_path = tmp_path / "cfg.yaml"
    cfg_path.write_text("num_miot: 2\nnum_uav: 2\nnum_vessel: 1\nhorizon: 4\n")
    out = tmp_path / "run"
    assert run_cli(["run", "--policy", "gct", "--config", str(cfg_path),
                    "--set", "horizon=6", "--out", str(out)]) == 0
    with open(out / "timeseries.csv", newline="", encoding="utf-8") as fh:
        assert len(list(csv.reader(fh))) == 7  # override wins over the file


# ---------------------------------------------------------------------------
# learners


def test_learner_run_writes_train_log_and_checkpoints(tmp_path):
    out = tmp_path / "run"
    assert run_cli(["run", "--policy", "hasac", "--seed", "0",
                    "--out", str(out), *DESK, *TINY_LEARNER]) == 0
    with open(out / "train_log.csv", newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    assert rows[0][:3] == ["episode", "steps", "mean_reward"]
    assert len(rows) == 3  # header + 2 episodes
    ckpt = out / "checkpoints"
    assert (ckpt / "q1.npz").exists()
    assert (ckpt / "policy_uav_0.npz").exists()
    with open(out / "metrics.json", encoding="utf-8") as fh:
        metrics = json.load(fh)
    assert "final_train_reward" in metrics


def test_a2c_learner_runs(tmp_path):
    out = tmp_path / "run"
    assert run_cli(["run", "--policy", "haa2c", "--seed", "1",
                    "--out", str(out), *DESK, *TINY_LEARNER]) == 0
    assert (out / "checkpoints" / "value.npz").exists()


# ---------------------------------------------------------------------------
# sweeps and grids


def test_sweep_writes_cells_and_summary(tmp_path):
    out = tmp_path / "sweep"
    assert run_cli(["sweep", "--policy", "gct", "--seed", "0",
                    "--out", str(out), *DESK,
                    "--axis", "num_uav", "--values", "2", "3"]) == 0
    assert (out / "num_uav_2" / "metrics.json").exists()
    assert (out / "num_uav_3" / "metrics.json").exists()
    with open(out / "summary.csv", newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    assert [int(r["num_uav"]) for r in rows] == [2, 3]
    assert all(r["policy"] == "gct" for r in rows)


def test_grid_crosses_both_axes(tmp_path):
    out = tmp_path / "grid"
    assert run_cli(["grid", "--policy", "ph", "--seed", "0",
                    "--out", str(out), *DESK,
                    "--axis", "num_uav", "--values", "2",
                    "--axis2", "bandwidth", "--values2", "1e6", "2e7"]) == 0
    assert (out / "num_uav_2__bandwidth_1e6" / "metrics.json").exists()
    assert (out / "num_uav_2__bandwidth_2e7" / "metrics.json").exists()
    with open(out / "summary.csv", newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2
    assert {float(r["bandwidth"]) for r in rows} == {1e6, 2e7}


def test_sweep_summary_is_byte_identical(tmp_path):
    blobs = []
    for rep in range(2):
        out = tmp_path / f"s{rep}"
        run_cli(["sweep", "--policy", "ro", "--seed", "2", "--out", str(out),
                 *DESK, "--axis", "arrival_mean", "--values", "5", "10"])
        blobs.append(read_bytes(out / "summary.csv"))
    assert blobs[0] == blobs[1]
