"""End-to-end tests for the command-line interface.

Everything runs in-process through ``warpmix.cli.main`` so exit codes and
file outputs can be checked directly; one smoke test exercises the module
as a subprocess.
"""

import json
import os
import subprocess
import sys

import numpy as np
import pytest
import scipy.stats

from warpmix.cli import RUNTIME_EXIT, USAGE_EXIT, main

from _support import synth_blobs, synth_regression, write_csv


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """A directory holding small regression/classification CSVs + configs."""
    root = tmp_path_factory.mktemp("cli")

    reg = synth_regression(n=90, d=3, seed=0)
    reg_csv = write_csv(
        root / "reg.csv",
        ["x0", "x1", "x2", "y"],
        np.column_stack([reg.features, reg.targets]),
    )
    reg_config = root / "reg_config.json"
    reg_config.write_text(json.dumps({
        "dataset": {"path": str(reg_csv), "target_column": "y"},
        "task": "regression",
        "seeds": [0],
        "model": {"hidden": [8], "dropout_rate": 0.2},
        "optimizer": {"learning_rate": 0.01, "epochs": 2, "batch_size": 16},
        "mixup": {
            "mode": "kernel_warped",
            "alpha": 0.5,
            "input_kernel": {"tau_max": 1.0, "tau_std": 1.0, "backend": "raw_input"},
            "output_kernel": {"tau_max": 1.0, "tau_std": 1.0, "backend": "label"},
        },
        "metrics": {"num_bins": 5, "mc_samples": 10},
    }))

    clf = synth_blobs(n=120, d=4, classes=3, seed=1, sep=4.0)
    clf_csv = write_csv(
        root / "clf.csv",
        ["x0", "x1", "x2", "x3", "label"],
        np.column_stack([clf.features, clf.targets.astype(np.float64)]),
    )
    clf_config = root / "clf_config.json"
    clf_config.write_text(json.dumps({
        "dataset": {"path": str(clf_csv), "target_column": "label"},
        "task": "classification",
        "num_classes": 3,
        "seeds": [0],
        "model": {"hidden": [16], "dropout_rate": 0.2},
        "optimizer": {"learning_rate": 0.01, "epochs": 3, "batch_size": 16},
        "mixup": {
            "mode": "kernel_warped",
            "alpha": 0.5,
            "input_kernel": {"tau_max": 1.0, "tau_std": 1.0, "backend": "raw_input"},
            "output_kernel": {"tau_max": 1.0, "tau_std": 1.0, "backend": "class_weight"},
        },
        "metrics": {"num_bins": 5, "mc_samples": 10},
    }))
    return {"root": root, "reg_config": reg_config, "clf_config": clf_config}


# -------------------------------------------------------------- exit codes


def test_no_verb_is_usage_error(capsys):
    assert main([]) == USAGE_EXIT
    capsys.readouterr()


def test_unknown_flag_is_usage_error(capsys):
    assert main(["train", "--no-such-flag"]) == USAGE_EXIT
    capsys.readouterr()


def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0
    assert "warp-demo" in capsys.readouterr().out


def test_missing_config_file_is_usage_error(tmp_path, capsys):
    code = main(["train", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o")])
    assert code == USAGE_EXIT
    capsys.readouterr()


def test_unknown_override_is_usage_error(workspace, tmp_path, capsys):
    code = main([
        "train", "--config", str(workspace["reg_config"]),
        "--out", str(tmp_path / "o"), "optimizer.gamma=3",
    ])
    assert code == USAGE_EXIT
    assert "error:" in capsys.readouterr().err


def test_divergence_is_runtime_error(workspace, tmp_path, capsys):
    with np.errstate(over="ignore"):
        code = main([
            "train", "--config", str(workspace["reg_config"]),
            "--out", str(tmp_path / "o"),
            "optimizer.kind=sgd_momentum", "optimizer.learning_rate=1e12",
        ])
    assert code == RUNTIME_EXIT
    assert "error:" in capsys.readouterr().err


def test_metrics_missing_predictions_file(tmp_path, capsys):
    code = main(["metrics", "--predictions", str(tmp_path / "gone.json"), "--out", str(tmp_path)])
    assert code == USAGE_EXIT
    capsys.readouterr()


# ------------------------------------------------------------------- train


def test_train_writes_all_artifacts(workspace, tmp_path, capsys):
    out = tmp_path / "run"
    code = main(["train", "--config", str(workspace["reg_config"]), "--out", str(out)])
    assert code == 0
    for name in (
        "report.json",
        "effective_config.json",
        "checkpoint_seed0.json",
        "trace_seed0.csv",
        "predictions_seed0.json",
    ):
        assert (out / name).is_file(), name

    report = json.loads((out / "report.json").read_text())
    assert set(report["per_seed"]) == {"0"}
    assert report["mean"]["rmse"] == report["per_seed"]["0"]["rmse"]

    trace_lines = (out / "trace_seed0.csv").read_text().strip().splitlines()
    assert trace_lines[0] == "epoch,train_loss,valid_loss"
    assert len(trace_lines) == 1 + 2  # header + one row per epoch
    for line in trace_lines[1:]:
        epoch, train_loss, valid_loss = line.split(",")
        assert float(train_loss) > 0 and float(valid_loss) > 0

    stdout = capsys.readouterr().out
    assert "rmse" in stdout and "report.json" in stdout


def test_train_seed_flag_replaces_seed_list(workspace, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["train", "--config", str(workspace["reg_config"]),
                 "--out", str(out), "--seed", "7"]) == 0
    report = json.loads((out / "report.json").read_text())
    assert set(report["per_seed"]) == {"7"}
    assert (out / "checkpoint_seed7.json").is_file()
    capsys.readouterr()


def test_effective_config_reproduces_run(workspace, tmp_path, capsys):
    first = tmp_path / "first"
    assert main(["train", "--config", str(workspace["reg_config"]), "--out", str(first)]) == 0
    second = tmp_path / "second"
    assert main(["train", "--config", str(first / "effective_config.json"),
                 "--out", str(second)]) == 0
    a = json.loads((first / "report.json").read_text())
    b = json.loads((second / "report.json").read_text())
    a.pop("duration_s"), b.pop("duration_s")
    a["config"].pop("output_dir"), b["config"].pop("output_dir")
    assert a == b
    assert (first / "checkpoint_seed0.json").read_text() == (second / "checkpoint_seed0.json").read_text()
    capsys.readouterr()


def test_cli_writes_only_inside_output_dir(workspace, tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    before = set(os.listdir(tmp_path))
    assert main(["train", "--config", str(workspace["reg_config"]), "--out", "run"]) == 0
    created = set(os.listdir(tmp_path)) - before
    assert created == {"run"}
    assert set(os.listdir(workspace["root"])) == {
        "reg.csv", "reg_config.json", "clf.csv", "clf_config.json"
    }
    capsys.readouterr()


# -------------------------------------------------------------------- eval


def test_eval_matches_train_exports(workspace, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["train", "--config", str(workspace["reg_config"]), "--out", str(out)]) == 0
    evl = tmp_path / "eval"
    code = main([
        "eval", "--config", str(workspace["reg_config"]),
        "--checkpoint", str(out / "checkpoint_seed0.json"),
        "--seed", "0", "--out", str(evl),
    ])
    assert code == 0
    for name in ("metrics.json", "predictions.json", "bins.csv"):
        assert (evl / name).is_file(), name

    # same checkpoint + same seed => byte-identical predictions versus train
    from_train = json.loads((out / "predictions_seed0.json").read_text())
    from_eval = json.loads((evl / "predictions.json").read_text())
    assert from_eval == from_train

    metrics = json.loads((evl / "metrics.json").read_text())
    assert metrics == from_eval["metrics"]

    bins = (evl / "bins.csv").read_text().strip().splitlines()
    assert bins[0] == "bin_lo,bin_hi,count,mse,mean_variance"
    assert len(bins) == 1 + 5
    counts = [int(line.split(",")[2]) for line in bins[1:]]
    assert sum(counts) == len(from_eval["targets"])
    capsys.readouterr()


def test_eval_classification_bins(workspace, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["train", "--config", str(workspace["clf_config"]), "--out", str(out)]) == 0
    evl = tmp_path / "eval"
    assert main([
        "eval", "--config", str(workspace["clf_config"]),
        "--checkpoint", str(out / "checkpoint_seed0.json"),
        "--seed", "0", "--out", str(evl),
    ]) == 0
    bins = (evl / "bins.csv").read_text().strip().splitlines()
    assert bins[0] == "bin_lo,bin_hi,count,accuracy,confidence"
    payload = json.loads((evl / "predictions.json").read_text())
    counts = [int(line.split(",")[2]) for line in bins[1:]]
    assert sum(counts) == len(payload["labels"])
    capsys.readouterr()


# ----------------------------------------------------------------- metrics


@pytest.mark.parametrize("config_key", ["reg_config", "clf_config"])
def test_metrics_round_trip(workspace, tmp_path, config_key, capsys):
    out = tmp_path / "run"
    assert main(["train", "--config", str(workspace[config_key]), "--out", str(out)]) == 0
    mdir = tmp_path / "metrics"
    code = main(["metrics", "--predictions", str(out / "predictions_seed0.json"),
                 "--out", str(mdir)])
    assert code == 0
    recomputed = json.loads((mdir / "metrics.json").read_text())
    original = json.loads((out / "predictions_seed0.json").read_text())["metrics"]
    assert recomputed == original
    capsys.readouterr()


# -------------------------------------------------------------------- grid


def test_grid_command_outputs(workspace, tmp_path, capsys):
    out = tmp_path / "grid"
    code = main([
        "grid", "--config", str(workspace["reg_config"]), "--out", str(out),
        "--tau-max-list", "0.5,1.0", "--tau-std-list", "1.0",
        "optimizer.epochs=1",
    ])
    assert code == 0
    assert (out / "effective_config.json").is_file()
    cells = json.loads((out / "grid.json").read_text())["cells"]
    assert len(cells) == 2 and all(c["status"] == "ok" for c in cells)
    lines = (out / "grid.csv").read_text().strip().splitlines()
    assert lines[0] == "tau_max,tau_std,seed,metric,value"
    taus = {line.split(",")[0] for line in lines[1:]}
    assert taus == {"0.5", "1.0"}
    assert "2/2" in capsys.readouterr().out


def test_grid_bad_tau_list_is_usage_error(workspace, tmp_path, capsys):
    code = main([
        "grid", "--config", str(workspace["reg_config"]), "--out", str(tmp_path / "g"),
        "--tau-max-list", "0.5,abc", "--tau-std-list", "1.0",
    ])
    assert code == USAGE_EXIT
    capsys.readouterr()


# --------------------------------------------------------------- warp-demo


def demo_counts(path):
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "distance,tau,bin_lo,bin_hi,count,density"
    rows = [line.split(",") for line in lines[1:]]
    edges = [float(r[2]) for r in rows] + [float(rows[-1][3])]
    counts = np.array([int(r[4]) for r in rows])
    return rows, np.array(edges), counts


def test_warp_demo_identity_tau_keeps_beta_shape(tmp_path, capsys):
    out = tmp_path / "demo"
    code = main([
        "warp-demo", "--taus", "1.0", "--alpha", "0.7",
        "--samples", "20000", "--bins", "20", "--seed", "0", "--out", str(out),
    ])
    assert code == 0
    rows, edges, counts = demo_counts(out / "warp_demo.csv")
    assert all(r[0] == "" for r in rows)  # no distances given
    assert {r[1] for r in rows} == {"1.0"}
    assert counts.sum() == 20000
    # chi-square against the exact Beta(0.7, 0.7) bin probabilities
    cdf = scipy.stats.beta.cdf(edges, 0.7, 0.7)
    expected = np.diff(cdf) * 20000
    _, p = scipy.stats.chisquare(counts, expected)
    assert p > 0.01
    capsys.readouterr()


def test_warp_demo_half_tau_bends_uniform_draws(tmp_path, capsys):
    out = tmp_path / "demo"
    assert main([
        "warp-demo", "--taus", "0.5", "--alpha", "1.0",
        "--samples", "100000", "--bins", "50", "--seed", "1", "--out", str(out),
    ]) == 0
    _, edges, counts = demo_counts(out / "warp_demo.csv")
    empirical = np.concatenate([[0.0], np.cumsum(counts) / counts.sum()])
    model = scipy.stats.beta.cdf(edges, 2.1, 2.1)
    assert np.max(np.abs(empirical - model)) < 0.03
    capsys.readouterr()


def test_warp_demo_distance_mode_applies_kernel(tmp_path, capsys):
    out = tmp_path / "demo"
    assert main([
        "warp-demo", "--distances", "1.0", "--tau-max", "4.0", "--tau-std", "1.0",
        "--samples", "1000", "--bins", "10", "--seed", "0", "--out", str(out),
    ]) == 0
    rows, _, counts = demo_counts(out / "warp_demo.csv")
    assert {r[0] for r in rows} == {"1.0"}
    assert {r[1] for r in rows} == {"0.25"}  # exp(0)/tau_max
    assert counts.sum() == 1000


def test_warp_demo_needs_taus_or_distances(tmp_path, capsys):
    assert main(["warp-demo", "--out", str(tmp_path / "d")]) == USAGE_EXIT
    assert main([
        "warp-demo", "--taus", "1.0", "--samples", "0", "--out", str(tmp_path / "d")
    ]) == USAGE_EXIT
    capsys.readouterr()


# ------------------------------------------------------------- subprocess


def test_module_entry_point_runs():
    proc = subprocess.run(
        [sys.executable, "-m", "warpmix.cli", "--help"],
        capture_output=True, text=True, timeout=60,
    )
    assert proc.returncode == 0
    assert "grid" in proc.stdout
