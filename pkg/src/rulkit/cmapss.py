"""Parse, validate, write, and synthesize 26-column run-to-failure trajectory files.

File layout: whitespace-delimited text, one timestep per line with
unit id, cycle, 3 operating settings, and 21 sensor readings.
Test sets come with a companion truth file of one integer RUL per unit.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import CountMismatch, MalformedRow, NonContiguousCycles, UsageError

N_SETTINGS = 3
N_SENSORS = 21
N_COLUMNS = 2 + N_SETTINGS + N_SENSORS


@dataclass
class Trajectory:
    """One unit's record: cycles 1..L with settings and sensor rows."""

    unit_id: int
    cycles: np.ndarray        # (L,) int
    op_settings: np.ndarray   # (L, 3) float
    sensors: np.ndarray       # (L, n_sensors) float

    def __post_init__(self):
        self.cycles = np.asarray(self.cycles, dtype=np.int64)
        self.op_settings = np.asarray(self.op_settings, dtype=np.float64)
        self.sensors = np.asarray(self.sensors, dtype=np.float64)
        L = len(self.cycles)
        if L < 1:
            raise UsageError(f"unit {self.unit_id}: empty trajectory")
        if not np.array_equal(self.cycles, np.arange(1, L + 1)):
            raise NonContiguousCycles(
                f"unit {self.unit_id}: cycles must run 1..{L} with unit steps")
        if self.op_settings.shape != (L, N_SETTINGS):
            raise UsageError(f"unit {self.unit_id}: op_settings shape {self.op_settings.shape}")
        if self.sensors.shape[0] != L:
            raise UsageError(f"unit {self.unit_id}: sensors rows != cycles")

    @property
    def length(self):
        return len(self.cycles)


@dataclass
class Dataset:
    trajectories: dict[int, Trajectory]
    kind: str  # "train" | "test"
    true_test_ruls: dict[int, int] | None = None

    def __post_init__(self):
        if self.kind not in ("train", "test"):
            raise UsageError(f"dataset kind must be train or test, got {self.kind!r}")
        if self.true_test_ruls is not None:
            missing = set(self.trajectories) - set(self.true_test_ruls)
            if missing:
                raise CountMismatch(f"truth RULs missing for units {sorted(missing)}")

    @property
    def unit_ids(self):
        return list(self.trajectories)

    def __len__(self):
        return len(self.trajectories)

    def max_length(self):
        return max(t.length for t in self.trajectories.values())


@dataclass
class SyntheticSpec:
    """Knobs for the data-free synthetic fleet generator."""

    n_units: int = 20
    life_range: tuple[int, int] = (60, 80)
    n_regimes: int = 1
    noise_std: float = 0.02
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.life_range
        if self.n_units < 1 or self.n_regimes < 1:
            raise UsageError("n_units and n_regimes must be positive")
        if lo < 10 or hi < lo:
            raise UsageError("life_range lower bound must be >= 10 and <= upper bound")
        if self.noise_std < 0:
            raise UsageError("noise_std must be nonnegative")


def _open_text(source):
    if isinstance(source, (str, os.PathLike)):
        if not os.path.exists(source):
            raise UsageError(f"input path does not exist: {source}")
        return open(source, "r")
    if isinstance(source, str):
        return io.StringIO(source)
    return source  # file-like


def parse_trajectories(source, kind="train") -> Dataset:
    """Parse a 26-column trajectory file (path, text buffer, or file object)."""
    if isinstance(source, str) and "\n" in source:
        fh = io.StringIO(source)
    else:
        fh = _open_text(source)
    rows_by_unit: dict[int, list] = {}
    try:
        for line_no, line in enumerate(fh, start=1):
            fields = line.split()
            if not fields:
                continue
            if len(fields) != N_COLUMNS:
                raise MalformedRow(line_no, f"expected {N_COLUMNS} fields, got {len(fields)}")
            try:
                values = [float(v) for v in fields]
            except ValueError as exc:
                raise MalformedRow(line_no, f"non-numeric field ({exc})") from None
            unit = int(values[0])
            rows_by_unit.setdefault(unit, []).append(values[1:])
    finally:
        if fh is not source:
            fh.close()
    trajectories = {}
    for unit, rows in rows_by_unit.items():
        arr = np.asarray(rows, dtype=np.float64)
        trajectories[unit] = Trajectory(
            unit_id=unit,
            cycles=arr[:, 0].astype(np.int64),
            op_settings=arr[:, 1:1 + N_SETTINGS],
            sensors=arr[:, 1 + N_SETTINGS:],
        )
    return Dataset(trajectories=trajectories, kind=kind)


def parse_rul_truth(source, dataset: Dataset) -> Dataset:
    """Attach truth RULs; line i pairs with the i-th unit in file order."""
    if isinstance(source, str) and ("\n" in source or not os.path.exists(source)):
        fh = io.StringIO(source)
    else:
        fh = _open_text(source)
    values = []
    try:
        for line_no, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            try:
                v = int(text)
            except ValueError:
                raise MalformedRow(line_no, f"expected integer RUL, got {text!r}") from None
            if v < 0:
                raise MalformedRow(line_no, f"negative RUL {v}")
            values.append(v)
    finally:
        if fh is not source:
            fh.close()
    units = list(dataset.trajectories)
    if len(values) != len(units):
        raise CountMismatch(f"{len(values)} truth lines for {len(units)} test units")
    truths = dict(zip(units, values))
    return Dataset(trajectories=dataset.trajectories, kind=dataset.kind,
                   true_test_ruls=truths)


def write_trajectories(dataset: Dataset, sink):
    """Write the 26-column layout; round-trips with parse at 1e-6 relative."""
    own = isinstance(sink, (str, os.PathLike))
    fh = open(sink, "w") if own else sink
    try:
        for unit, traj in dataset.trajectories.items():
            for i in range(traj.length):
                parts = [str(unit), str(int(traj.cycles[i]))]
                parts += [f"{v:.10g}" for v in traj.op_settings[i]]
                parts += [f"{v:.10g}" for v in traj.sensors[i]]
                fh.write(" ".join(parts) + "\n")
    finally:
        if own:
            fh.close()


def write_rul_truth(dataset: Dataset, sink):
    own = isinstance(sink, (str, os.PathLike))
    fh = open(sink, "w") if own else sink
    try:
        for unit in dataset.trajectories:
            fh.write(f"{dataset.true_test_ruls[unit]}\n")
    finally:
        if own:
            fh.close()


# Sensors that carry the degradation trend in the synthetic fleet;
# matches the retained-sensor convention so default selection works on it.
_SYNTH_TREND_SENSORS = (2, 3, 4, 7, 11, 12, 15, 17)


def _regime_centroids(n_regimes):
    """Well-separated fixed centroids in operating-setting space."""
    c = np.zeros((n_regimes, N_SETTINGS))
    for i in range(n_regimes):
        c[i] = (10.0 * i, 0.84 * i / max(1, n_regimes - 1), 100.0 - 40.0 * (i % 2))
    return c


def generate_synthetic(spec: SyntheticSpec):
    """Deterministic synthetic fleet: flat-then-linear degradation per unit.

    Returns (train, test) datasets; test trajectories are truncated with
    the remaining cycles recorded as truth RULs.
    """
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed & 0xFFFFFFFF, 0x51]))
    centroids = _regime_centroids(spec.n_regimes)
    lo, hi = spec.life_range

    def make_unit(unit_id):
        L = int(rng.integers(lo, hi + 1))
        knee = rng.uniform(0.4, 0.8) * L
        regime = rng.integers(0, spec.n_regimes, size=L)
        ops = centroids[regime] + rng.normal(0.0, 1e-3, size=(L, N_SETTINGS))
        t = np.arange(1, L + 1, dtype=np.float64)
        ramp = np.maximum(0.0, t - knee) / max(1.0, L - knee)
        sensors = np.zeros((L, N_SENSORS))
        offsets = rng.normal(0.0, 0.0, size=N_SENSORS)  # base levels per sensor
        base = 5.0 + np.arange(N_SENSORS) * 0.5 + offsets
        regime_shift = (np.arange(1, N_SENSORS + 1)[None, :] * 0.3) * regime[:, None]
        directions = np.where(np.arange(1, N_SENSORS + 1) % 2 == 0, 1.0, -1.0)
        for s in range(N_SENSORS):
            sensor_no = s + 1
            level = base[s] + regime_shift[:, s]
            if sensor_no in _SYNTH_TREND_SENSORS:
                level = level + directions[s] * 3.0 * ramp
            if spec.noise_std > 0:
                level = level + rng.normal(0.0, spec.noise_std, size=L)
            sensors[:, s] = level
        return Trajectory(unit_id=unit_id, cycles=np.arange(1, L + 1),
                          op_settings=ops, sensors=sensors)

    train = {u: make_unit(u) for u in range(1, spec.n_units + 1)}
    test = {}
    truths = {}
    for u in range(1, spec.n_units + 1):
        full = make_unit(u)
        L = full.length
        cut = int(rng.integers(max(6, L // 4), L))  # observe a strict prefix
        test[u] = Trajectory(unit_id=u, cycles=full.cycles[:cut],
                             op_settings=full.op_settings[:cut],
                             sensors=full.sensors[:cut])
        truths[u] = L - cut
    return (Dataset(train, "train"),
            Dataset(test, "test", true_test_ruls=truths))
