"""Remaining-useful-life prediction for multivariate run-to-failure time series."""

from .cmapss import Dataset, SyntheticSpec, Trajectory, generate_synthetic
from .evaluation import ErrorStats, ScoreParams, error_stats, evaluate, phm08_score, rmse
from .model import ModelConfig, forward, forward_batch, init_params
from .regimes import RegimeModel, fit_regime_model, kmeans_fit, normalize, select_k
from .training import TrainConfig, hyperparameter_search, split_train_val, train
from .windowing import (RulPolicy, SampleSet, WindowSpec, WindowedSample,
                        build_inference_sample, build_training_set,
                        expanding_windows, piecewise_rul, scale_target,
                        sliding_windows, unscale_target)

__version__ = "0.1.0"
