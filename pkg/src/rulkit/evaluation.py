"""Scoring: RMSE, the asymmetric prognostics competition score, and error stats."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, asdict

import numpy as np

from .cmapss import Dataset
from .errors import EmptyInput, UsageError
from .model import ModelConfig, forward_batch
from .regimes import RegimeModel, normalize
from .windowing import RulPolicy, WindowSpec, build_inference_sample, unscale_target


@dataclass(frozen=True)
class ScoreParams:
    """Asymmetry constants: early (under-)predictions divide by a_early,
    late ones by a_late; a_late < a_early penalizes late predictions more."""

    a_early: float = 13.0
    a_late: float = 10.0

    def __post_init__(self):
        if self.a_early <= 0 or self.a_late <= 0:
            raise UsageError("score constants must be positive")


def rmse(preds, truths):
    preds = np.asarray(preds, dtype=np.float64)
    truths = np.asarray(truths, dtype=np.float64)
    if preds.size == 0 or preds.shape != truths.shape:
        raise EmptyInput("rmse needs equal-length non-empty inputs")
    return float(np.sqrt(np.mean((preds - truths) ** 2)))


def phm08_score(preds, truths, params=ScoreParams()):
    """Sum of exp(-d/a_early)-1 for d<0 and exp(d/a_late)-1 for d>=0."""
    preds = np.asarray(preds, dtype=np.float64)
    truths = np.asarray(truths, dtype=np.float64)
    if preds.size == 0 or preds.shape != truths.shape:
        raise EmptyInput("score needs equal-length non-empty inputs")
    d = preds - truths
    early = np.expm1(-d[d < 0] / params.a_early)
    late = np.expm1(d[d >= 0] / params.a_late)
    return float(early.sum() + late.sum())


@dataclass
class ErrorStats:
    mean: float
    median: float
    std: float
    skew: float           # adjusted Fisher-Pearson standardized third moment
    pearson_skew: float   # 3 (mean - median) / std, for cross-checking

    def to_dict(self):
        return asdict(self)


def error_stats(errors) -> ErrorStats:
    e = np.asarray(errors, dtype=np.float64)
    if e.size == 0:
        raise EmptyInput("error_stats needs a non-empty vector")
    n = e.size
    mean = float(e.mean())
    median = float(np.median(e))
    std = float(e.std(ddof=1)) if n > 1 else 0.0
    if n > 2 and std > 0:
        m2 = float(((e - mean) ** 2).mean())
        m3 = float(((e - mean) ** 3).mean())
        g1 = m3 / m2 ** 1.5
        skew = g1 * np.sqrt(n * (n - 1)) / (n - 2)
    else:
        skew = 0.0
    pearson = 3.0 * (mean - median) / std if std > 0 else 0.0
    return ErrorStats(mean=mean, median=median, std=std, skew=float(skew),
                      pearson_skew=float(pearson))


@dataclass
class EvalReport:
    unit_ids: np.ndarray
    end_cycles: np.ndarray
    truths: np.ndarray
    predictions: np.ndarray
    rmse: float
    score: float
    stats: ErrorStats

    @property
    def errors(self):
        return self.predictions - self.truths

    def summary_dict(self):
        return {"rmse": self.rmse, "score": self.score, **self.stats.to_dict()}

    def write_per_unit_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["unit_id", "end_cycle", "true", "predicted", "error"])
            for i in range(len(self.unit_ids)):
                w.writerow([int(self.unit_ids[i]), int(self.end_cycles[i]),
                            f"{self.truths[i]:.6f}", f"{self.predictions[i]:.6f}",
                            f"{self.errors[i]:.6f}"])

    def write_metrics_csv(self, path):
        s = self.stats
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["rmse", "score", "mean", "median", "std", "skew"])
            w.writerow([f"{self.rmse:.6f}", f"{self.score:.6f}", f"{s.mean:.6f}",
                        f"{s.median:.6f}", f"{s.std:.6f}", f"{s.skew:.6f}"])

    def write_summary(self, path):
        with open(path, "w") as fh:
            json.dump(self.summary_dict(), fh, indent=2, sort_keys=True)


def predict_units(test_normalized: Dataset, spec: WindowSpec, policy: RulPolicy,
                  config: ModelConfig, params, buffers):
    """Per-unit RUL predictions (in cycles, clamped to [0, rul_early])."""
    units = sorted(test_normalized.trajectories)
    feats, masks, end_cycles = [], [], []
    for u in units:
        sample = build_inference_sample(test_normalized.trajectories[u], spec, policy)
        feats.append(sample.features)
        masks.append(sample.mask)
        end_cycles.append(sample.end_cycle)
    preds = forward_batch(np.stack(feats), np.stack(masks), config, params,
                          buffers, train=False).data
    preds = np.clip(preds, 0.0, 1.0)
    cycles = np.array([unscale_target(p, policy) for p in preds])
    return (np.array(units, dtype=np.int64), np.array(end_cycles, dtype=np.int64),
            cycles)


def evaluate(config: ModelConfig, params, buffers, regime_model: RegimeModel,
             spec: WindowSpec, test_dataset: Dataset, policy=RulPolicy(),
             score_params=ScoreParams(), clip_truth=True) -> EvalReport:
    """Normalize, window, predict, and score a truth-labelled test dataset."""
    if test_dataset.true_test_ruls is None:
        raise UsageError("test dataset has no truth RULs")
    normalized = normalize(test_dataset, regime_model)
    units, end_cycles, preds = predict_units(normalized, spec, policy,
                                             config, params, buffers)
    truths = np.array([test_dataset.true_test_ruls[u] for u in units],
                      dtype=np.float64)
    if clip_truth:
        truths = np.minimum(truths, policy.rul_early)
    return EvalReport(unit_ids=units, end_cycles=end_cycles, truths=truths,
                      predictions=preds,
                      rmse=rmse(preds, truths),
                      score=phm08_score(preds, truths, score_params),
                      stats=error_stats(preds - truths))
