"""Mini-batch training with early stopping, plus random+grid hyperparameter search."""

from __future__ import annotations

import itertools
import time
import zlib
from dataclasses import dataclass, field, asdict

import numpy as np

from .autodiff import Tensor
from .errors import (EmptyBatch, EmptySpace, NonFiniteGradient, NonFiniteLoss,
                     TooFewUnits, UsageError)
from .model import ModelConfig, buffer_layout, forward_batch, init_params, parameter_layout
from .windowing import SampleSet


@dataclass
class TrainConfig:
    batch_size: int = 64
    max_epochs: int = 100
    learning_rate: float = 1e-3
    optimizer: str = "adam"       # "adam" | "sgd"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    momentum: float = 0.9         # sgd only
    patience: int = 10
    seed: int = 0
    val_fraction: float = 0.2

    def __post_init__(self):
        if not 0.0 < self.val_fraction < 1.0:
            raise UsageError("val_fraction must be in (0, 1)")
        if self.optimizer not in ("adam", "sgd"):
            raise UsageError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class TrainReport:
    train_losses: list
    val_losses: list
    best_epoch: int
    wall_clock_seconds: float
    checkpoint_path: str | None = None

    def to_dict(self):
        return asdict(self)


def _derive_rng(seed, name, index=0):
    return np.random.default_rng(
        [seed & 0xFFFFFFFF, zlib.crc32(name.encode()), index & 0xFFFFFFFF])


def split_train_val(samples: SampleSet, val_fraction=0.2, seed=0):
    """Split by unit so no unit's windows leak across the boundary."""
    units = np.unique(samples.unit_ids)
    if len(units) < 2:
        raise TooFewUnits(f"need at least 2 units to split, have {len(units)}")
    rng = _derive_rng(seed, "split")
    shuffled = units[rng.permutation(len(units))]
    n_val = int(round(val_fraction * len(units)))
    n_val = min(max(n_val, 1), len(units) - 1)
    val_units = set(shuffled[:n_val].tolist())
    val_idx = np.isin(samples.unit_ids, list(val_units))
    return samples.subset(~val_idx), samples.subset(val_idx)


def mse_loss(predictions: Tensor, targets) -> Tensor:
    targets = np.asarray(targets, dtype=np.float64)
    if predictions.data.size == 0:
        raise EmptyBatch("loss over an empty batch")
    diff = predictions - targets
    return (diff * diff).mean()


class Optimizer:
    """Adam (bias-corrected) or SGD with momentum, updating params in place."""

    def __init__(self, params, config: TrainConfig):
        self.params = params
        self.config = config
        self.t = 0
        self.state = {name: (np.zeros_like(p.data), np.zeros_like(p.data))
                      for name, p in params.items()}

    def step(self):
        c = self.config
        self.t += 1
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            if not np.isfinite(g).all():
                raise NonFiniteGradient(f"non-finite gradient in {name}")
            m, v = self.state[name]
            if c.optimizer == "adam":
                m[:] = c.beta1 * m + (1 - c.beta1) * g
                v[:] = c.beta2 * v + (1 - c.beta2) * g * g
                m_hat = m / (1 - c.beta1 ** self.t)
                v_hat = v / (1 - c.beta2 ** self.t)
                p.data -= c.learning_rate * m_hat / (np.sqrt(v_hat) + c.eps)
            else:
                m[:] = c.momentum * m + g
                p.data -= c.learning_rate * m

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None


def _epoch_loss(samples, config, params, buffers, batch_size=256):
    """Dropout-free loss over a sample set, batched for memory."""
    total, n = 0.0, len(samples)
    for start in range(0, n, batch_size):
        idx = slice(start, min(start + batch_size, n))
        preds = forward_batch(samples.features[idx], samples.mask[idx],
                              config, params, buffers, train=False)
        err = preds.data - samples.targets[idx]
        total += float((err ** 2).sum())
    return total / n


def train(samples: SampleSet, model_config: ModelConfig,
          train_config: TrainConfig, val_samples: SampleSet | None = None,
          params=None, buffers=None, log_fn=None):
    """Train with early stopping; returns (report, best_params, best_buffers).

    When `val_samples` is None an internal unit-level split is made first.
    """
    if len(samples) == 0:
        raise EmptyBatch("training set is empty")
    if val_samples is None:
        samples, val_samples = split_train_val(
            samples, train_config.val_fraction, train_config.seed)
    if params is None:
        params, buffers = init_params(model_config, seed=train_config.seed)
    optimizer = Optimizer(params, train_config)

    start = time.monotonic()
    best_val = np.inf
    best_epoch = 0
    best_state = None
    train_losses, val_losses = [], []
    n = len(samples)
    for epoch in range(1, train_config.max_epochs + 1):
        order = _derive_rng(train_config.seed, "shuffle", epoch).permutation(n)
        epoch_loss = 0.0
        for b, start_i in enumerate(range(0, n, train_config.batch_size)):
            idx = order[start_i:start_i + train_config.batch_size]
            drop_rng = _derive_rng(train_config.seed, "dropout",
                                   epoch * 100003 + b)
            optimizer.zero_grad()
            preds = forward_batch(samples.features[idx], samples.mask[idx],
                                  model_config, params, buffers,
                                  train=True, rng=drop_rng)
            loss = mse_loss(preds, samples.targets[idx])
            if not np.isfinite(loss.data):
                raise NonFiniteLoss(f"loss became non-finite at epoch {epoch}")
            loss.backward()
            optimizer.step()
            epoch_loss += float(loss.data) * len(idx)
        train_losses.append(epoch_loss / n)
        val_loss = _epoch_loss(val_samples, model_config, params, buffers)
        val_losses.append(val_loss)
        if log_fn:
            log_fn(epoch, train_losses[-1], val_loss)
        if val_loss < best_val:
            best_val = val_loss
            best_epoch = epoch
            best_state = ({k: p.data.copy() for k, p in params.items()},
                          {k: b.copy() for k, b in buffers.items()})
        elif epoch - best_epoch >= train_config.patience:
            break
    for k, p in params.items():
        p.data = best_state[0][k]
    buffers.update(best_state[1])
    report = TrainReport(train_losses=train_losses, val_losses=val_losses,
                         best_epoch=best_epoch,
                         wall_clock_seconds=time.monotonic() - start)
    return report, params, buffers


DEFAULT_SEARCH_SPACE = {
    "d_model": list(range(20, 31, 2)),
    "n_heads": [1, 2, 3, 4],
    "n_blocks": [1, 2, 3],
    "dim_ffw": [10, 11, 12, 13, 14],
    "dropout_rate": [round(0.3 + 0.1 * i, 1) for i in range(5)],
}


def _candidate_configs(space, strategy, n_random, seed):
    names = sorted(space)
    if any(not space[k] for k in names):
        raise EmptySpace("a hyperparameter range is empty")
    combos = list(itertools.product(*(space[k] for k in names)))
    combos = [dict(zip(names, c)) for c in combos]
    if strategy == "grid":
        return combos
    rng = _derive_rng(seed, "search")
    n = min(n_random, len(combos))
    picks = rng.choice(len(combos), size=n, replace=False)
    return [combos[i] for i in sorted(picks)]


def hyperparameter_search(samples: SampleSet, space, strategy="random",
                          n_random=10, train_config: TrainConfig | None = None,
                          base_config: ModelConfig | None = None,
                          search_epochs=30):
    """Rank candidate configurations by best validation loss (reduced budget)."""
    train_config = train_config or TrainConfig()
    candidates = _candidate_configs(space, strategy, n_random, train_config.seed)
    base = base_config.to_dict() if base_config else {}
    results = []
    train_set, val_set = split_train_val(samples, train_config.val_fraction,
                                         train_config.seed)
    for cand in candidates:
        cfg_dict = dict(base)
        cfg_dict.update(cand)
        cfg_dict.setdefault("d_features", samples.n_features)
        cfg_dict.setdefault("max_len", samples.pad_to)
        if cfg_dict["d_model"] % cfg_dict.get("n_heads", 2) != 0:
            continue  # incompatible head split
        config = ModelConfig(**cfg_dict)
        budget = TrainConfig(**{**asdict(train_config), "max_epochs": search_epochs})
        report, _, _ = train(train_set, config, budget, val_samples=val_set)
        results.append((cand, min(report.val_losses)))
    results.sort(key=lambda r: r[1])
    return results
