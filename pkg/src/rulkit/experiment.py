"""Ablation harness: train variants along one axis on the same split and compare."""

from __future__ import annotations

import csv
from dataclasses import asdict, replace

import numpy as np

from .cmapss import Dataset
from .errors import UsageError
from .evaluation import ScoreParams, evaluate
from .model import ModelConfig
from .regimes import RegimeModel, normalize
from .training import TrainConfig, split_train_val, train
from .windowing import RulPolicy, WindowSpec, build_training_set

AXES = {
    "window_mode": ["sliding", "expanding"],
    "norm_kind": ["layer", "batch"],
    "pos_encoding": ["fixed", "learnable"],
    "input_transform": ["none", "linear", "conv1d"],
}


def percentage_improvement(worse, better):
    """(worse - better) / better * 100; can exceed 100."""
    return (worse - better) / better * 100.0


def _variant_config(base: ModelConfig, axis, value, d_features, max_len):
    if axis == "norm_kind":
        return replace(base, norm_kind=value, max_len=max_len)
    if axis == "pos_encoding":
        return replace(base, positional_encoding=value, max_len=max_len)
    if axis == "input_transform":
        d_model = d_features if value == "none" else base.d_model
        return replace(base, input_transform=value, d_model=d_model, max_len=max_len)
    return replace(base, max_len=max_len)  # window_mode: model unchanged


def _variant_window(base_spec: WindowSpec, axis, value):
    if axis != "window_mode":
        return base_spec
    if value == "sliding":
        return WindowSpec(mode="sliding", window_length=base_spec.window_length)
    return WindowSpec(mode="expanding", min_len=base_spec.min_len,
                      step=base_spec.step)


def run_experiment(axis, train_dataset: Dataset, test_dataset: Dataset,
                   regime_model: RegimeModel, base_config: ModelConfig,
                   base_spec: WindowSpec, train_config: TrainConfig,
                   policy=RulPolicy(), score_params=ScoreParams(),
                   replications=3):
    """Train each variant `replications` times on the same unit split.

    Returns rows of {variant, mean_rmse, mean_score, per-replication values}.
    """
    if axis not in AXES:
        raise UsageError(f"unknown experiment axis {axis!r}; choose from {sorted(AXES)}")
    normalized_train = normalize(train_dataset, regime_model)
    rows = []
    for value in AXES[axis]:
        spec = _variant_window(base_spec, axis, value)
        samples = build_training_set(normalized_train, spec, policy)
        spec = samples.spec  # pad_to resolved
        config = _variant_config(base_config, axis, value,
                                 samples.n_features, samples.pad_to)
        # same unit-level split for every variant and replication
        train_set, val_set = split_train_val(samples, train_config.val_fraction,
                                             train_config.seed)
        rmses, scores = [], []
        for rep in range(replications):
            rep_cfg = TrainConfig(**{**asdict(train_config),
                                     "seed": train_config.seed + 1000 * (rep + 1)})
            _, params, buffers = train(train_set, config, rep_cfg,
                                       val_samples=val_set)
            report = evaluate(config, params, buffers, regime_model, spec,
                              test_dataset, policy, score_params)
            rmses.append(report.rmse)
            scores.append(report.score)
        rows.append({"variant": value,
                     "mean_rmse": float(np.mean(rmses)),
                     "mean_score": float(np.mean(scores)),
                     "rmses": rmses, "scores": scores})
    return rows


def write_comparison_csv(rows, path, metric="mean_score"):
    """Table-shaped CSV: one row per variant, plus a percentage-improvement
    row for two-variant axes (computed on `metric`, lower is better)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["variant", "mean_rmse", "mean_score"])
        for r in rows:
            w.writerow([r["variant"], f"{r['mean_rmse']:.2f}", f"{r['mean_score']:.2f}"])
        if len(rows) == 2:
            a, b = rows[0][metric], rows[1][metric]
            worse, better = max(a, b), min(a, b)
            w.writerow(["percentage_improvement",
                        f"{percentage_improvement(worse, better):.2f}", ""])
