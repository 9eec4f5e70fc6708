"""Window construction: padded, masked, fixed-shape samples with scaled RUL targets.

Two modes: a fixed-length sliding window (step 1) and an expanding window
anchored at the first cycle that grows by one step per sample.  Targets are
the piecewise RUL at each window's last timestep, min-max scaled to [0, 1].
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, field

import numpy as np

from .cmapss import Dataset, Trajectory
from .errors import EndAfterFailure, OutOfRange, UsageError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RulPolicy:
    """Piecewise label ceiling and the scaling range tied to it."""

    rul_early: int = 125
    y_min: int = 0

    @property
    def y_max(self):
        return self.rul_early


@dataclass(frozen=True)
class WindowSpec:
    mode: str = "expanding"        # "sliding" | "expanding"
    window_length: int = 30        # sliding only
    min_len: int = 5               # expanding only
    step: int = 1                  # expanding only
    pad_to: int | None = None      # resolved at build time for expanding

    def __post_init__(self):
        if self.mode not in ("sliding", "expanding"):
            raise UsageError(f"unknown window mode {self.mode!r}")
        if self.mode == "sliding" and self.window_length < 1:
            raise UsageError("window_length must be positive")
        if self.mode == "expanding" and (self.min_len < 1 or self.step < 1):
            raise UsageError("min_len and step must be positive")

    def resolved_pad_to(self):
        if self.mode == "sliding":
            return self.pad_to or self.window_length
        if self.pad_to is None:
            raise UsageError("expanding mode needs pad_to resolved from the training set")
        return self.pad_to


@dataclass
class WindowedSample:
    features: np.ndarray    # (pad_to, D), zero rows at padded positions
    mask: np.ndarray        # (pad_to,) 0/1
    target_scaled: float
    unit_id: int
    end_cycle: int
    truncated: bool = False

    def __post_init__(self):
        if not 0.0 <= self.target_scaled <= 1.0:
            raise OutOfRange(f"target_scaled {self.target_scaled} outside [0,1]")


def piecewise_rul(end_cycle, failure_cycle, policy=RulPolicy()):
    """RUL at end_cycle, clipped above at the early-life ceiling."""
    if end_cycle > failure_cycle:
        raise EndAfterFailure(f"end cycle {end_cycle} after failure {failure_cycle}")
    return min(failure_cycle - end_cycle, policy.rul_early)


def scale_target(rul, policy=RulPolicy()):
    if not policy.y_min <= rul <= policy.y_max:
        raise OutOfRange(f"RUL {rul} outside [{policy.y_min}, {policy.y_max}]")
    return (rul - policy.y_min) / (policy.y_max - policy.y_min)


def unscale_target(y, policy=RulPolicy()):
    if not 0.0 <= y <= 1.0:
        raise OutOfRange(f"scaled target {y} outside [0, 1]")
    return y * (policy.y_max - policy.y_min) + policy.y_min


def _pad(features, pad_to, left):
    L, D = features.shape
    out = np.zeros((pad_to, D))
    mask = np.zeros(pad_to)
    if left:
        out[pad_to - L:] = features
        mask[pad_to - L:] = 1.0
    else:
        out[:L] = features
        mask[:L] = 1.0
    return out, mask


def sliding_windows(trajectory: Trajectory, T, policy=RulPolicy(), pad_to=None,
                    failure_cycle=None):
    """Fixed-length windows, step 1; short trajectories left-pad to one sample."""
    pad_to = pad_to or T
    L = trajectory.length
    failure = failure_cycle if failure_cycle is not None else int(trajectory.cycles[-1])
    samples = []
    if L >= T:
        for start in range(L - T + 1):
            end = start + T
            feats, mask = _pad(trajectory.sensors[start:end], pad_to, left=True)
            end_cycle = int(trajectory.cycles[end - 1])
            rul = piecewise_rul(end_cycle, failure, policy)
            samples.append(WindowedSample(feats, mask, scale_target(rul, policy),
                                          trajectory.unit_id, end_cycle))
    else:
        feats, mask = _pad(trajectory.sensors, pad_to, left=True)
        end_cycle = int(trajectory.cycles[-1])
        rul = piecewise_rul(end_cycle, failure, policy)
        samples.append(WindowedSample(feats, mask, scale_target(rul, policy),
                                      trajectory.unit_id, end_cycle))
    return samples


def expanding_windows(trajectory: Trajectory, min_len=5, step=1,
                      policy=RulPolicy(), pad_to=None, failure_cycle=None):
    """Windows anchored at cycle 1 with lengths min_len, min_len+step, ..., L."""
    L = trajectory.length
    pad_to = pad_to or L
    if pad_to < L:
        raise UsageError(f"pad_to {pad_to} smaller than trajectory length {L}")
    failure = failure_cycle if failure_cycle is not None else int(trajectory.cycles[-1])
    if L < min_len:
        log.warning("unit %d: length %d below min window %d, no samples emitted",
                    trajectory.unit_id, L, min_len)
        return []
    samples = []
    for length in range(min_len, L + 1, step):
        feats, mask = _pad(trajectory.sensors[:length], pad_to, left=False)
        end_cycle = int(trajectory.cycles[length - 1])
        rul = piecewise_rul(end_cycle, failure, policy)
        samples.append(WindowedSample(feats, mask, scale_target(rul, policy),
                                      trajectory.unit_id, end_cycle))
    return samples


@dataclass
class SampleSet:
    """Stacked windows ready for batching: (N, pad_to, D) features."""

    features: np.ndarray
    mask: np.ndarray
    targets: np.ndarray
    unit_ids: np.ndarray
    end_cycles: np.ndarray
    spec: WindowSpec
    policy: RulPolicy

    def __len__(self):
        return len(self.features)

    @property
    def pad_to(self):
        return self.features.shape[1]

    @property
    def n_features(self):
        return self.features.shape[2]

    def subset(self, idx):
        return SampleSet(self.features[idx], self.mask[idx], self.targets[idx],
                         self.unit_ids[idx], self.end_cycles[idx],
                         self.spec, self.policy)


def _stack(samples, spec, policy):
    if not samples:
        pad = spec.resolved_pad_to() if spec.pad_to or spec.mode == "sliding" else 0
        return SampleSet(np.zeros((0, pad, 0)), np.zeros((0, pad)), np.zeros(0),
                         np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64),
                         spec, policy)
    return SampleSet(
        features=np.stack([s.features for s in samples]),
        mask=np.stack([s.mask for s in samples]),
        targets=np.array([s.target_scaled for s in samples]),
        unit_ids=np.array([s.unit_id for s in samples], dtype=np.int64),
        end_cycles=np.array([s.end_cycle for s in samples], dtype=np.int64),
        spec=spec, policy=policy,
    )


def build_training_set(dataset: Dataset, spec: WindowSpec,
                       policy=RulPolicy()) -> SampleSet:
    """Windows over every unit, ordered by (unit id, end cycle)."""
    if spec.mode == "expanding" and spec.pad_to is None and len(dataset):
        spec = WindowSpec(mode="expanding", min_len=spec.min_len, step=spec.step,
                          pad_to=dataset.max_length())
    samples = []
    for unit in sorted(dataset.trajectories):
        traj = dataset.trajectories[unit]
        if spec.mode == "sliding":
            samples.extend(sliding_windows(traj, spec.window_length, policy,
                                           spec.resolved_pad_to()))
        else:
            samples.extend(expanding_windows(traj, spec.min_len, spec.step,
                                             policy, spec.resolved_pad_to()))
    return _stack(samples, spec, policy)


def build_inference_sample(trajectory: Trajectory, spec: WindowSpec,
                           policy=RulPolicy(), true_rul=None) -> WindowedSample:
    """One sample covering the observed prefix (expanding) or final window (sliding)."""
    pad_to = spec.resolved_pad_to()
    rul = 0 if true_rul is None else min(int(true_rul), policy.rul_early)
    target = scale_target(rul, policy)
    end_cycle = int(trajectory.cycles[-1])
    truncated = False
    if spec.mode == "sliding":
        T = spec.window_length
        feats = trajectory.sensors[-T:] if trajectory.length >= T else trajectory.sensors
        padded, mask = _pad(feats, pad_to, left=True)
    else:
        feats = trajectory.sensors
        if trajectory.length > pad_to:
            feats = feats[-pad_to:]  # keep the most recent pad_to cycles
            truncated = True
            log.warning("unit %d: observed length %d exceeds pad_to %d, truncating",
                        trajectory.unit_id, trajectory.length, pad_to)
        padded, mask = _pad(feats, pad_to, left=False)
    return WindowedSample(padded, mask, target, trajectory.unit_id, end_cycle,
                          truncated=truncated)


# ----------------------------------------------------------------------
# binary record stream: header (pad_to, D, count) then per-sample records
# ----------------------------------------------------------------------

_HEADER = struct.Struct("<III")
_TAIL = struct.Struct("<dqq")  # target, unit_id, end_cycle


def save_samples(samples: SampleSet, path, sidecar_path=None):
    """Bit-exact binary stream plus a JSON sidecar describing spec and policy."""
    n, pad_to, d = samples.features.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(pad_to, d, n))
        for i in range(n):
            fh.write(samples.features[i].astype("<f8").tobytes())
            fh.write(samples.mask[i].astype(np.uint8).tobytes())
            fh.write(_TAIL.pack(float(samples.targets[i]),
                                int(samples.unit_ids[i]),
                                int(samples.end_cycles[i])))
    sidecar = sidecar_path or str(path) + ".json"
    meta = {
        "mode": samples.spec.mode,
        "window_length": samples.spec.window_length,
        "min_len": samples.spec.min_len,
        "step": samples.spec.step,
        "pad_to": pad_to,
        "rul_early": samples.policy.rul_early,
        "y_min": samples.policy.y_min,
    }
    with open(sidecar, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)


def load_samples(path, sidecar_path=None) -> SampleSet:
    sidecar = sidecar_path or str(path) + ".json"
    with open(sidecar) as fh:
        meta = json.load(fh)
    spec = WindowSpec(mode=meta["mode"], window_length=meta["window_length"],
                      min_len=meta["min_len"], step=meta["step"], pad_to=meta["pad_to"])
    policy = RulPolicy(rul_early=meta["rul_early"], y_min=meta["y_min"])
    with open(path, "rb") as fh:
        pad_to, d, n = _HEADER.unpack(fh.read(_HEADER.size))
        feats = np.empty((n, pad_to, d))
        mask = np.empty((n, pad_to))
        targets = np.empty(n)
        unit_ids = np.empty(n, dtype=np.int64)
        end_cycles = np.empty(n, dtype=np.int64)
        row_bytes = pad_to * d * 8
        for i in range(n):
            feats[i] = np.frombuffer(fh.read(row_bytes), dtype="<f8").reshape(pad_to, d)
            mask[i] = np.frombuffer(fh.read(pad_to), dtype=np.uint8)
            targets[i], unit_ids[i], end_cycles[i] = _TAIL.unpack(fh.read(_TAIL.size))
    return SampleSet(feats, mask, targets, unit_ids, end_cycles, spec, policy)
