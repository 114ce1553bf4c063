"""Command-line interface.

Verbs: train, eval, grid, warp-demo, metrics. Every command writes only
inside its output directory; exit code 0 means success, 2 a usage problem
(bad flags, bad config, missing file), 1 a runtime failure (divergence,
non-convergence, I/O trouble mid-run).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from .errors import DatasetError, DomainError, UsageError, WarpmixError
from .harness import ExperimentConfig, grid_search, run_experiment
from .metrics import (
    BinningConfig,
    ClassifPrediction,
    accuracy,
    brier,
    ece,
    ence,
    nll,
    regression_point_metrics,
    uce,
)
from .model import load_model, predictive_distributions, save_model
from .rng import RngStream
from .similarity import KernelConfig, kernel_tau
from .special import beta_sample
from .warping import warp

__all__ = ["main"]

USAGE_EXIT = 2
RUNTIME_EXIT = 1


def _comma_floats(text: str) -> list:
    try:
        return [float(part) for part in text.split(",") if part.strip() != ""]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def _load_config(args) -> ExperimentConfig:
    overrides = list(getattr(args, "overrides", []) or [])
    if args.config:
        config = ExperimentConfig.from_file(args.config, overrides)
    else:
        config = ExperimentConfig().with_overrides(overrides)
    extra = []
    if getattr(args, "seed", None) is not None:
        extra.append(f"seeds=[{int(args.seed)}]")
    if getattr(args, "out", None):
        extra.append(f"output_dir={json.dumps(args.out)}")
    return config.with_overrides(extra)


def _out_dir(config: ExperimentConfig) -> str:
    path = config.output_dir
    os.makedirs(path, exist_ok=True)
    return path


def _write(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _write_trace_csv(path: str, trace) -> None:
    lines = ["epoch,train_loss,valid_loss"]
    for row in trace:
        lines.append(f"{row['epoch']},{row['train_loss']!r},{row['valid_loss']!r}")
    _write(path, "\n".join(lines) + "\n")


def _bin_table(payload: dict) -> str:
    """Per-bin calibration table matching the metric binning rules."""
    m = int(payload["num_bins"])
    if payload["task"] == "regression":
        variances = np.asarray(payload["variances"], dtype=np.float64)
        sq_err = (np.asarray(payload["means"]) - np.asarray(payload["targets"])) ** 2
        lo, hi = float(variances.min()), float(variances.max())
        width = (hi - lo) / m if hi > lo else 0.0
        idx = (
            np.clip(np.floor((variances - lo) / (hi - lo) * m).astype(int), 0, m - 1)
            if hi > lo
            else np.zeros(len(variances), dtype=int)
        )
        lines = ["bin_lo,bin_hi,count,mse,mean_variance"]
        for b in range(m):
            mask = idx == b
            count = int(mask.sum())
            mse = float(sq_err[mask].mean()) if count else float("nan")
            mv = float(variances[mask].mean()) if count else float("nan")
            lines.append(f"{lo + b * width!r},{lo + (b + 1) * width!r},{count},{mse!r},{mv!r}")
        return "\n".join(lines) + "\n"
    probs = np.asarray(payload["probs"], dtype=np.float64)
    labels = np.asarray(payload["labels"], dtype=np.int64)
    conf = probs.max(axis=1)
    correct = probs.argmax(axis=1) == labels
    idx = np.clip(np.floor(conf * m).astype(int), 0, m - 1)
    lines = ["bin_lo,bin_hi,count,accuracy,confidence"]
    for b in range(m):
        mask = idx == b
        count = int(mask.sum())
        acc = float(correct[mask].mean()) if count else float("nan")
        avg = float(conf[mask].mean()) if count else float("nan")
        lines.append(f"{b / m!r},{(b + 1) / m!r},{count},{acc!r},{avg!r}")
    return "\n".join(lines) + "\n"


def _cmd_train(args) -> int:
    config = _load_config(args)
    out = _out_dir(config)
    result = run_experiment(config)
    _write(os.path.join(out, "report.json"), result.report.to_json())
    _write(os.path.join(out, "effective_config.json"), json.dumps(config.to_dict(), indent=2, sort_keys=True))
    for seed, train_result in result.train_results.items():
        save_model(train_result.model, os.path.join(out, f"checkpoint_seed{seed}.json"))
        _write_trace_csv(os.path.join(out, f"trace_seed{seed}.csv"), train_result.trace)
        _write(
            os.path.join(out, f"predictions_seed{seed}.json"),
            json.dumps(result.predictions[seed], indent=2, sort_keys=True),
        )
    for name, value in sorted(result.report.mean.items()):
        print(f"{name}: mean={value:.6g} std={result.report.std[name]:.6g}")
    print(f"wrote {out}/report.json")
    return 0


def _cmd_eval(args) -> int:
    from .harness import evaluate
    from .data import split

    config = _load_config(args)
    out = _out_dir(config)
    model = load_model(args.checkpoint)
    dataset = config.load_dataset()
    seed = int(args.seed) if args.seed is not None else config.seeds[0]
    splits = split(dataset, config.split_fractions, seed)
    metrics, payload = evaluate(model, splits, config, seed)
    _write(os.path.join(out, "metrics.json"), json.dumps(metrics, indent=2, sort_keys=True))
    _write(os.path.join(out, "predictions.json"), json.dumps(payload, indent=2, sort_keys=True))
    _write(os.path.join(out, "bins.csv"), _bin_table(payload))
    for name, value in sorted(metrics.items()):
        if value is not None:
            print(f"{name}: {value:.6g}")
    print(f"wrote {out}/metrics.json")
    return 0


def _cmd_grid(args) -> int:
    config = _load_config(args)
    out = _out_dir(config)
    result = grid_search(
        config,
        _comma_floats(args.tau_max_list),
        _comma_floats(args.tau_std_list),
        jobs=int(args.jobs),
    )
    _write(os.path.join(out, "grid.csv"), result.to_csv())
    _write(
        os.path.join(out, "grid.json"),
        json.dumps({"cells": result.cells}, indent=2, sort_keys=True),
    )
    _write(os.path.join(out, "effective_config.json"), json.dumps(config.to_dict(), indent=2, sort_keys=True))
    ok = sum(1 for c in result.cells if c["status"] == "ok")
    print(f"grid: {ok}/{len(result.cells)} cells succeeded; wrote {out}/grid.csv")
    return 0


def _cmd_warp_demo(args) -> int:
    config = _load_config(args)
    out = _out_dir(config)
    samples = int(args.samples)
    num_bins = int(args.bins)
    if samples < 1 or num_bins < 1:
        raise UsageError("samples and bins must be >= 1")

    if args.distances is not None:
        kernel = KernelConfig(tau_max=float(args.tau_max), tau_std=float(args.tau_std))
        cases = [
            (distance, kernel_tau(distance, kernel))
            for distance in _comma_floats(args.distances)
        ]
    elif args.taus is not None:
        cases = [(None, tau) for tau in _comma_floats(args.taus)]
    else:
        raise UsageError("warp-demo needs either --taus or --distances with --tau-max/--tau-std")

    rng = RngStream(int(args.seed) if args.seed is not None else 0)
    lines = ["distance,tau,bin_lo,bin_hi,count,density"]
    for case_index, (distance, tau) in enumerate(cases):
        stream = rng.child(case_index)
        warped = np.array(
            [warp(beta_sample(float(args.alpha), stream), tau) for _ in range(samples)]
        )
        counts, edges = np.histogram(warped, bins=num_bins, range=(0.0, 1.0))
        d_txt = "" if distance is None else repr(float(distance))
        for b in range(num_bins):
            lo, hi = float(edges[b]), float(edges[b + 1])
            density = float(counts[b]) / (samples * (hi - lo))
            lines.append(f"{d_txt},{tau!r},{lo!r},{hi!r},{int(counts[b])},{density!r}")
    path = os.path.join(out, "warp_demo.csv")
    _write(path, "\n".join(lines) + "\n")
    print(f"wrote {path}")
    return 0


def _recompute_metrics(payload: dict) -> dict:
    m = int(payload["num_bins"])
    if payload["task"] == "regression":
        preds = predictive_distributions(
            payload["means"], payload["variances"], payload["targets"]
        )
        rmse, mape = regression_point_metrics(preds)
        return {
            "rmse": rmse,
            "mape": mape,
            "uce": uce(preds, BinningConfig(m, "equal_width_variance")),
            "ence": ence(preds, BinningConfig(m, "equal_width_variance")),
        }
    preds = [
        ClassifPrediction(np.asarray(p, dtype=np.float64), int(y))
        for p, y in zip(payload["probs"], payload["labels"])
    ]
    return {
        "accuracy": accuracy(preds),
        "ece": ece(preds, BinningConfig(m, "equal_width_confidence")),
        "brier": brier(preds),
        "nll": nll(preds),
        "temperature": payload["temperature"],
    }


def _cmd_metrics(args) -> int:
    if not os.path.isfile(args.predictions):
        raise DatasetError(f"predictions file not found: {args.predictions}", code="missing_file")
    with open(args.predictions, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    metrics = _recompute_metrics(payload)
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    _write(os.path.join(out, "metrics.json"), json.dumps(metrics, indent=2, sort_keys=True))
    for name, value in sorted(metrics.items()):
        if value is not None:
            print(f"{name}: {value:.6g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="warpmix",
        description="Similarity-warped mixup: training, evaluation, grids, and warp demos.",
    )
    parser.add_argument("--log-level", default="WARNING", help="logging level (DEBUG shows numerics clamps)")
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p, with_overrides=True):
        p.add_argument("--config", default=None, help="JSON experiment config")
        p.add_argument("--seed", type=int, default=None, help="replace the config seed list with this seed")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        if with_overrides:
            p.add_argument("overrides", nargs="*", metavar="key=value",
                           help="dotted-path config overrides, e.g. mixup.alpha=0.5")

    p_train = sub.add_parser("train", help="train/evaluate all config seeds, write report + checkpoints")
    common(p_train)
    p_train.set_defaults(func=_cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a saved checkpoint on the test split")
    common(p_eval)
    p_eval.add_argument("--checkpoint", required=True, help="checkpoint JSON written by train")
    p_eval.set_defaults(func=_cmd_eval)

    p_grid = sub.add_parser("grid", help="sweep (tau_max, tau_std) cells")
    common(p_grid)
    p_grid.add_argument("--tau-max-list", required=True, help="comma-separated tau_max values")
    p_grid.add_argument("--tau-std-list", required=True, help="comma-separated tau_std values")
    p_grid.add_argument("--jobs", type=int, default=1, help="parallel cell workers")
    p_grid.set_defaults(func=_cmd_grid)

    p_demo = sub.add_parser("warp-demo", help="histogram warped coefficient densities as CSV")
    common(p_demo)
    p_demo.add_argument("--alpha", type=float, default=1.0, help="Beta(alpha, alpha) of the raw draws")
    p_demo.add_argument("--samples", type=int, default=100_000)
    p_demo.add_argument("--bins", type=int, default=50)
    p_demo.add_argument("--taus", default=None, help="comma-separated warp strengths")
    p_demo.add_argument("--tau-max", type=float, default=1.0, help="kernel amplitude (with --distances)")
    p_demo.add_argument("--tau-std", type=float, default=1.0, help="kernel std (with --distances)")
    p_demo.add_argument("--distances", default=None, help="comma-separated normalized distances")
    p_demo.set_defaults(func=_cmd_warp_demo)

    p_metrics = sub.add_parser("metrics", help="recompute metrics from an exported predictions file")
    p_metrics.add_argument("--predictions", required=True, help="predictions JSON written by eval/train")
    p_metrics.add_argument("--out", default=None, help="output directory (default: current)")
    p_metrics.set_defaults(func=_cmd_metrics)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed the usage message
        return USAGE_EXIT if exc.code not in (0, None) else 0
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING))
    try:
        return args.func(args)
    except (UsageError, DomainError, DatasetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_EXIT
    except WarpmixError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return RUNTIME_EXIT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return RUNTIME_EXIT


if __name__ == "__main__":
    sys.exit(main())
