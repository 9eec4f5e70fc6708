"""Operating-regime discovery and per-cluster sensor standardization.

Operating settings are clustered with restarted k-means (k-means++ style
seeding); each retained sensor is then standardized with the mean/std of
the cluster its row falls into, which exposes degradation trends hidden
by regime shifts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .cmapss import Dataset, Trajectory
from .errors import DegenerateCluster, EmptyInput, KExceedsN, SeriesTooShort, UsageError

# Retained sensors: the channels with monotone degradation trends.
DEFAULT_SELECTED_SENSORS = (2, 3, 4, 7, 8, 9, 11, 12, 13, 14, 15, 17, 20, 21)
DROPPED_SENSORS = (1, 5, 6, 10, 16, 18, 19)

DEGENERATE_STD_EPS = 1e-8


def _derive_rng(seed, name, index=0):
    import zlib
    return np.random.default_rng(
        [seed & 0xFFFFFFFF, zlib.crc32(name.encode()), index])


def _assign(points, centroids):
    d2 = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    labels = d2.argmin(axis=1)
    return labels, d2[np.arange(len(points)), labels].sum()


def _kmeans_pp_init(points, k, rng):
    n = len(points)
    centroids = np.empty((k, points.shape[1]))
    centroids[0] = points[rng.integers(n)]
    d2 = ((points - centroids[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0:
            centroids[i] = points[rng.integers(n)]
        else:
            centroids[i] = points[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, ((points - centroids[i]) ** 2).sum(axis=1))
    return centroids


def _lloyd(points, centroids, max_iter=300, tol=1e-12):
    prev_cost = np.inf
    labels, cost = _assign(points, centroids)
    for _ in range(max_iter):
        if cost > prev_cost + 1e-9 * max(1.0, prev_cost):
            raise AssertionError("k-means cost increased across an iteration")
        for j in range(len(centroids)):
            members = points[labels == j]
            if len(members):
                centroids[j] = members.mean(axis=0)
            else:
                # relocate an empty centroid to the worst-fitted point
                d2 = ((points - centroids[labels]) ** 2).sum(axis=1)
                centroids[j] = points[d2.argmax()]
        prev_cost = cost
        labels, cost = _assign(points, centroids)
        if prev_cost - cost <= tol * max(1.0, prev_cost):
            break
    return centroids, labels, cost


def kmeans_fit(points, k, seed=0, restarts=10):
    """Restarted Lloyd k-means; returns (centroids, assignments, cost)."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or len(points) == 0:
        raise EmptyInput("k-means needs a non-empty 2-D point matrix")
    if k < 1:
        raise UsageError("k must be positive")
    if k > len(points):
        raise KExceedsN(f"k={k} exceeds N={len(points)}")
    best = None
    for r in range(restarts):
        rng = _derive_rng(seed, "kmeans", r)
        init = _kmeans_pp_init(points, k, rng)
        centroids, labels, cost = _lloyd(points, init)
        if best is None or cost < best[2]:
            best = (centroids, labels, cost)
    return best


def silhouette_score(points, labels):
    """Mean silhouette coefficient (O(N^2); callers subsample large inputs)."""
    points = np.asarray(points, dtype=np.float64)
    n = len(points)
    dist = np.sqrt(((points[:, None, :] - points[None, :, :]) ** 2).sum(axis=2))
    scores = np.zeros(n)
    unique = np.unique(labels)
    if len(unique) < 2:
        return 0.0
    for i in range(n):
        own = labels == labels[i]
        n_own = own.sum()
        if n_own <= 1:
            scores[i] = 0.0
            continue
        a = dist[i, own].sum() / (n_own - 1)
        b = min(dist[i, labels == c].mean() for c in unique if c != labels[i])
        scores[i] = (b - a) / max(a, b)
    return float(scores.mean())


def select_k(points, k_max=8, seed=0, subsample=2000):
    """Pick k in [1..k_max] by mean silhouette; fall back to 1 below 0.5."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or len(points) == 0:
        raise EmptyInput("select_k needs a non-empty point matrix")
    if k_max < 1:
        raise UsageError("k_max must be positive")
    sil_points = points
    if len(points) > subsample:
        idx = _derive_rng(seed, "silhouette").choice(len(points), subsample, replace=False)
        sil_points = points[np.sort(idx)]
    best_k, best_sil = 1, -np.inf
    for k in range(2, min(k_max, len(sil_points)) + 1):
        _, labels, _ = kmeans_fit(sil_points, k, seed=seed)
        sil = silhouette_score(sil_points, labels)
        if sil > best_sil:
            best_k, best_sil = k, sil
    if best_sil < 0.5:
        return 1
    return best_k


@dataclass
class RegimeModel:
    """Fitted centroids plus per-cluster, per-sensor standardization stats."""

    k: int
    centroids: np.ndarray          # (k, 3) in min-max scaled setting space
    setting_min: np.ndarray        # (3,)
    setting_max: np.ndarray        # (3,)
    cluster_means: np.ndarray      # (k, D)
    cluster_stds: np.ndarray       # (k, D)
    selected_sensors: tuple[int, ...] = DEFAULT_SELECTED_SENSORS
    degenerate: tuple[tuple[int, int], ...] = ()  # (cluster, sensor_no) pairs

    def __post_init__(self):
        sel = tuple(self.selected_sensors)
        if len(set(sel)) != len(sel) or any(s < 1 or s > 21 for s in sel):
            raise UsageError("selected_sensors must be unique indices in 1..21")
        self.selected_sensors = sel

    def scale_settings(self, ops):
        span = np.where(self.setting_max > self.setting_min,
                        self.setting_max - self.setting_min, 1.0)
        return (ops - self.setting_min) / span

    def assign(self, ops):
        scaled = self.scale_settings(np.asarray(ops, dtype=np.float64))
        d2 = ((scaled[:, None, :] - self.centroids[None, :, :]) ** 2).sum(axis=2)
        return d2.argmin(axis=1)

    def to_json(self):
        return json.dumps({
            "k": self.k,
            "centroids": self.centroids.tolist(),
            "setting_min": self.setting_min.tolist(),
            "setting_max": self.setting_max.tolist(),
            "cluster_means": self.cluster_means.tolist(),
            "cluster_stds": self.cluster_stds.tolist(),
            "selected_sensors": list(self.selected_sensors),
            "degenerate": [list(p) for p in self.degenerate],
        }, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        return cls(
            k=d["k"],
            centroids=np.asarray(d["centroids"]),
            setting_min=np.asarray(d["setting_min"]),
            setting_max=np.asarray(d["setting_max"]),
            cluster_means=np.asarray(d["cluster_means"]),
            cluster_stds=np.asarray(d["cluster_stds"]),
            selected_sensors=tuple(d["selected_sensors"]),
            degenerate=tuple(tuple(p) for p in d["degenerate"]),
        )

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(fh.read())


def fit_regime_model(train: Dataset, k=None, seed=0,
                     selected_sensors=DEFAULT_SELECTED_SENSORS) -> RegimeModel:
    """Cluster pooled operating settings and compute per-cluster sensor stats."""
    if len(train) == 0:
        raise EmptyInput("training dataset is empty")
    ops = np.concatenate([t.op_settings for t in train.trajectories.values()])
    sensors = np.concatenate([t.sensors for t in train.trajectories.values()])
    sel = tuple(selected_sensors)
    sensors = sensors[:, [s - 1 for s in sel]]

    smin, smax = ops.min(axis=0), ops.max(axis=0)
    span = np.where(smax > smin, smax - smin, 1.0)
    scaled = (ops - smin) / span
    if k is None:
        k = select_k(scaled, seed=seed)
    centroids, labels, _ = kmeans_fit(scaled, k, seed=seed)

    D = len(sel)
    means = np.zeros((k, D))
    stds = np.zeros((k, D))
    degenerate = []
    for c in range(k):
        members = sensors[labels == c]
        if len(members) < 2:
            raise DegenerateCluster(f"cluster {c} has {len(members)} rows")
        means[c] = members.mean(axis=0)
        stds[c] = members.std(axis=0)  # population std
        for j, s in enumerate(sel):
            if stds[c, j] < DEGENERATE_STD_EPS:
                stds[c, j] = 1.0  # value passes through as x - mean
                degenerate.append((c, s))
    return RegimeModel(k=k, centroids=centroids, setting_min=smin, setting_max=smax,
                       cluster_means=means, cluster_stds=stds,
                       selected_sensors=sel, degenerate=tuple(degenerate))


def normalize(dataset: Dataset, model: RegimeModel) -> Dataset:
    """Standardize retained sensors with the stats of each row's nearest cluster."""
    cols = [s - 1 for s in model.selected_sensors]
    out = {}
    for unit, traj in dataset.trajectories.items():
        labels = model.assign(traj.op_settings)
        if traj.sensors.shape[1] == len(cols):
            x = traj.sensors  # already reduced to the retained sensors
        else:
            x = traj.sensors[:, cols]
        normed = (x - model.cluster_means[labels]) / model.cluster_stds[labels]
        out[unit] = Trajectory(unit_id=unit, cycles=traj.cycles.copy(),
                               op_settings=traj.op_settings.copy(), sensors=normed)
    return Dataset(trajectories=out, kind=dataset.kind,
                   true_test_ruls=None if dataset.true_test_ruls is None
                   else dict(dataset.true_test_ruls))


@dataclass
class StationarityReport:
    window_length: int
    rolling_means: np.ndarray
    autocovariance_by_lag: dict[int, float]


def stationarity_diagnostics(series, window_length, max_lag) -> StationarityReport:
    """Rolling means plus autocovariance by lag, for eyeballing weak stationarity."""
    y = np.asarray(series, dtype=np.float64)
    L = len(y)
    if window_length > L:
        raise SeriesTooShort(f"window {window_length} exceeds series length {L}")
    if max_lag >= L:
        raise SeriesTooShort(f"max_lag {max_lag} must be < series length {L}")
    kernel = np.ones(window_length) / window_length
    rolling = np.convolve(y, kernel, mode="valid")
    ybar = y.mean()
    centered = y - ybar
    autocov = {}
    for tau in range(max_lag + 1):
        if tau == 0:
            autocov[0] = float((centered ** 2).mean())
        else:
            autocov[tau] = float((centered[:-tau] * centered[tau:]).mean())
    return StationarityReport(window_length=window_length,
                              rolling_means=rolling,
                              autocovariance_by_lag=autocov)
