"""Command-line pipeline: synth | prepare | train | evaluate | experiment.

Every subcommand is deterministic given (config, seed); all randomness is
derived from the single top-level seed.  Tabular outputs are CSV with
headers; report figures are rendered alongside them.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import cmapss, figures
from .errors import RulkitError, UsageError
from .evaluation import ScoreParams, evaluate
from .experiment import AXES, run_experiment, write_comparison_csv
from .model import ModelConfig, load_checkpoint, save_checkpoint
from .regimes import RegimeModel, fit_regime_model, normalize
from .training import TrainConfig, train
from .windowing import (RulPolicy, WindowSpec, build_training_set, load_samples,
                        save_samples)

# Best-per-dataset hyperparameters: (d_model, n_heads, n_blocks, dim_ffw, dropout)
DATASET_HYPERPARAMETERS = {
    "FD001": (18, 2, 1, 8, 0.4),
    "FD002": (26, 2, 2, 10, 0.4),
    "FD003": (22, 2, 2, 10, 0.4),
    "FD004": (26, 2, 1, 10, 0.4),
}
DEFAULT_HYPERPARAMETERS = (30, 2, 2, 10, 0.4)


def _load_config_file(path):
    if path is None:
        return {}
    if not os.path.exists(path):
        raise UsageError(f"config file not found: {path}")
    with open(path) as fh:
        return json.load(fh)


def _require_path(path, what):
    if path is None:
        raise UsageError(f"missing required {what} path")
    if not os.path.exists(path):
        raise UsageError(f"{what} path does not exist: {path}")
    return path


def _window_spec(args, cfg):
    section = cfg.get("window", {})
    mode = args.window or section.get("mode", "expanding")
    return WindowSpec(
        mode=mode,
        window_length=args.window_size or section.get("window_length", 30),
        min_len=section.get("min_len", 5),
        step=section.get("step", 1),
        pad_to=section.get("pad_to"),
    )


def _model_config(args, cfg, d_features, max_len):
    dm, nh, nb, ffw, drop = DEFAULT_HYPERPARAMETERS
    if getattr(args, "dataset", None):
        name = args.dataset.upper()
        if name not in DATASET_HYPERPARAMETERS:
            raise UsageError(f"unknown dataset name {args.dataset!r}")
        dm, nh, nb, ffw, drop = DATASET_HYPERPARAMETERS[name]
    section = dict(cfg.get("model", {}))
    section.setdefault("d_model", dm)
    section.setdefault("n_heads", nh)
    section.setdefault("n_blocks", nb)
    section.setdefault("dim_ffw", ffw)
    section.setdefault("dropout_rate", drop)
    for flag in ("d_model", "n_heads", "n_blocks", "dim_ffw", "dropout_rate",
                 "norm_kind", "input_transform", "pooling"):
        v = getattr(args, flag, None)
        if v is not None:
            section[flag] = v
    if getattr(args, "pos_encoding", None):
        section["positional_encoding"] = args.pos_encoding
    section.setdefault("input_transform", "linear")
    if section["input_transform"] == "none":
        section["d_model"] = d_features
    section["d_features"] = d_features
    section["max_len"] = max_len
    return ModelConfig(**section)


def _train_config(args, cfg):
    section = dict(cfg.get("train", {}))
    for flag in ("batch_size", "max_epochs", "learning_rate", "patience"):
        v = getattr(args, flag, None)
        if v is not None:
            section[flag] = v
    if args.seed is not None:
        section["seed"] = args.seed
    section.setdefault("seed", cfg.get("seed", 0))
    return TrainConfig(**section)


def _out_dir(args):
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    return out


def cmd_synth(args):
    cfg = _load_config_file(args.config)
    spec = cmapss.SyntheticSpec(
        n_units=args.units, life_range=(args.life_min, args.life_max),
        n_regimes=args.regimes, noise_std=args.noise,
        seed=args.seed if args.seed is not None else cfg.get("seed", 0))
    train_ds, test_ds = cmapss.generate_synthetic(spec)
    out = _out_dir(args)
    cmapss.write_trajectories(train_ds, os.path.join(out, "train.txt"))
    cmapss.write_trajectories(test_ds, os.path.join(out, "test.txt"))
    cmapss.write_rul_truth(test_ds, os.path.join(out, "rul.txt"))
    print(f"wrote {len(train_ds)} train and {len(test_ds)} test units to {out}")
    return 0


def cmd_prepare(args):
    cfg = _load_config_file(args.config)
    train_path = _require_path(args.train or cfg.get("paths", {}).get("train"),
                               "training data")
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    dataset = cmapss.parse_trajectories(train_path, kind="train")
    model = fit_regime_model(dataset, k=args.k, seed=seed)
    normalized = normalize(dataset, model)
    spec = _window_spec(args, cfg)
    samples = build_training_set(normalized, spec)
    out = _out_dir(args)
    model.save(os.path.join(out, "regime_model.json"))
    save_samples(samples, os.path.join(out, "samples.bin"))
    print(f"units: {len(dataset)}")
    print(f"regimes: {model.k}")
    print(f"samples: {len(samples)}")
    print(f"pad_to: {samples.pad_to}")
    return 0


def cmd_train(args):
    cfg = _load_config_file(args.config)
    data_dir = _require_path(args.data or cfg.get("paths", {}).get("prepared"),
                             "prepared data directory")
    samples = load_samples(os.path.join(data_dir, "samples.bin"))
    model_config = _model_config(args, cfg, samples.n_features, samples.pad_to)
    train_config = _train_config(args, cfg)
    out = _out_dir(args)
    report, params, buffers = train(samples, model_config, train_config)
    save_checkpoint(os.path.join(out, "checkpoint.bin"), model_config, params,
                    buffers)
    with open(os.path.join(out, "train_report.json"), "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
    for name, losses in (("loss_train.csv", report.train_losses),
                         ("loss_val.csv", report.val_losses)):
        with open(os.path.join(out, name), "w") as fh:
            fh.write("epoch,loss\n")
            for epoch, loss in enumerate(losses, start=1):
                fh.write(f"{epoch},{loss:.10g}\n")
    if not args.no_plots:
        figures.plot_loss_curves(report.train_losses, report.val_losses,
                                 os.path.join(out, "loss_curves.png"))
    print(f"best epoch: {report.best_epoch}")
    print(f"best validation loss: {min(report.val_losses):.6g}")
    return 0


def cmd_evaluate(args):
    cfg = _load_config_file(args.config)
    paths = cfg.get("paths", {})
    checkpoint = _require_path(args.checkpoint or paths.get("checkpoint"), "checkpoint")
    data_dir = _require_path(args.data or paths.get("prepared"), "prepared data directory")
    test_path = _require_path(args.test or paths.get("test"), "test data")
    truth_path = _require_path(args.truth or paths.get("truth"), "truth file")
    model_config, params, buffers = load_checkpoint(checkpoint)
    regime_model = RegimeModel.load(os.path.join(data_dir, "regime_model.json"))
    samples = load_samples(os.path.join(data_dir, "samples.bin"))
    test_ds = cmapss.parse_trajectories(test_path, kind="test")
    test_ds = cmapss.parse_rul_truth(truth_path, test_ds)
    score_params = ScoreParams(**cfg.get("score", {}))
    report = evaluate(model_config, params, buffers, regime_model, samples.spec,
                      test_ds, samples.policy, score_params)
    out = _out_dir(args)
    report.write_per_unit_csv(os.path.join(out, "per_unit.csv"))
    report.write_metrics_csv(os.path.join(out, "metrics.csv"))
    report.write_summary(os.path.join(out, "summary.json"))
    if not args.no_plots:
        figures.render_eval_figures(report, out)
    print(f"rmse: {report.rmse:.4f}")
    print(f"score: {report.score:.4f}")
    return 0


def cmd_experiment(args):
    cfg = _load_config_file(args.config)
    paths = cfg.get("paths", {})
    train_path = _require_path(args.train or paths.get("train"), "training data")
    test_path = _require_path(args.test or paths.get("test"), "test data")
    truth_path = _require_path(args.truth or paths.get("truth"), "truth file")
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    train_ds = cmapss.parse_trajectories(train_path, kind="train")
    test_ds = cmapss.parse_trajectories(test_path, kind="test")
    test_ds = cmapss.parse_rul_truth(truth_path, test_ds)
    regime_model = fit_regime_model(train_ds, k=args.k, seed=seed)
    spec = _window_spec(args, cfg)
    model_config = _model_config(args, cfg, len(regime_model.selected_sensors), 1)
    train_config = _train_config(args, cfg)
    rows = run_experiment(args.axis, train_ds, test_ds, regime_model,
                          model_config, spec, train_config,
                          score_params=ScoreParams(**cfg.get("score", {})),
                          replications=args.replications)
    out = _out_dir(args)
    csv_path = os.path.join(out, f"experiment_{args.axis}.csv")
    write_comparison_csv(rows, csv_path)
    if not args.no_plots:
        figures.plot_comparison(rows, os.path.join(out, f"experiment_{args.axis}.png"))
    for r in rows:
        print(f"{r['variant']}: mean_rmse={r['mean_rmse']:.2f} "
              f"mean_score={r['mean_score']:.2f}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="rulkit",
                                     description="RUL prediction pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file; flags override it")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--no-plots", action="store_true",
                       help="skip figure rendering")

    p = sub.add_parser("synth", help="generate a synthetic fleet")
    common(p)
    p.add_argument("--units", type=int, default=20)
    p.add_argument("--life-min", type=int, default=60)
    p.add_argument("--life-max", type=int, default=80)
    p.add_argument("--regimes", type=int, default=1)
    p.add_argument("--noise", type=float, default=0.02)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("prepare", help="fit regimes and build window samples")
    common(p)
    p.add_argument("--train", help="training trajectory file")
    p.add_argument("--k", type=int, help="number of regimes (auto when omitted)")
    p.add_argument("--window", choices=["sliding", "expanding"])
    p.add_argument("--window-size", type=int, dest="window_size")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train the encoder model")
    common(p)
    p.add_argument("--data", help="prepare output directory")
    p.add_argument("--dataset", help="named dataset presets, e.g. FD002")
    p.add_argument("--d-model", type=int, dest="d_model")
    p.add_argument("--n-heads", type=int, dest="n_heads")
    p.add_argument("--n-blocks", type=int, dest="n_blocks")
    p.add_argument("--dim-ffw", type=int, dest="dim_ffw")
    p.add_argument("--dropout", type=float, dest="dropout_rate")
    p.add_argument("--norm-kind", choices=["layer", "batch"], dest="norm_kind")
    p.add_argument("--pos-encoding", choices=["fixed", "learnable"],
                   dest="pos_encoding")
    p.add_argument("--input-transform", choices=["none", "linear", "conv1d"],
                   dest="input_transform")
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--epochs", type=int, dest="max_epochs")
    p.add_argument("--learning-rate", type=float, dest="learning_rate")
    p.add_argument("--patience", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint on a test set")
    common(p)
    p.add_argument("--checkpoint")
    p.add_argument("--data", help="prepare output directory")
    p.add_argument("--test", help="test trajectory file")
    p.add_argument("--truth", help="truth RUL file")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("experiment", help="run a one-axis ablation comparison")
    common(p)
    p.add_argument("--axis", choices=sorted(AXES), required=True)
    p.add_argument("--train")
    p.add_argument("--test")
    p.add_argument("--truth")
    p.add_argument("--k", type=int)
    p.add_argument("--window", choices=["sliding", "expanding"])
    p.add_argument("--window-size", type=int, dest="window_size")
    p.add_argument("--replications", type=int, default=3)
    p.add_argument("--dataset", help="named dataset presets, e.g. FD002")
    p.add_argument("--epochs", type=int, dest="max_epochs")
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--learning-rate", type=float, dest="learning_rate")
    p.add_argument("--patience", type=int)
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RulkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
