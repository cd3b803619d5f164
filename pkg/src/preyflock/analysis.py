"""Swarm measurements: clustering, alignment, cohesion, density, survival."""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from scipy.stats import spearmanr

from .geometry import torus_displacement, unit_vector, wrap_angle, wrap_turn

log = logging.getLogger(__name__)

NOISE = -1
TRANSIENT_FRAMES = 100
DEFAULT_EPS = 4.0
DEFAULT_MIN_PTS = 3
DEFAULT_BANDWIDTH = 2.0


class CircularMean(NamedTuple):
    angle: float
    degenerate: bool


class AngleDeviation(NamedTuple):
    value: float
    degenerate: bool


def circular_mean(angles, tol: float = 1e-9) -> CircularMean:
    """Direction of the resultant of unit vectors, in [0, 360).

    A vanishing resultant is flagged and reported as 0.
    """
    angles = np.asarray(angles, dtype=np.float64)
    if angles.size == 0:
        raise ValueError("circular_mean of an empty set")
    s = unit_vector(angles).sum(axis=0)
    if np.hypot(s[0], s[1]) <= tol * angles.size:
        return CircularMean(0.0, True)
    return CircularMean(wrap_angle(np.degrees(np.arctan2(s[1], s[0]))), False)


def mean_angle_deviation(angles) -> AngleDeviation:
    mean = circular_mean(angles)
    dev = np.abs(wrap_turn(np.asarray(angles, dtype=np.float64) - mean.angle))
    return AngleDeviation(float(np.mean(dev)), mean.degenerate)


def torus_distance_matrix(points, L: float) -> np.ndarray:
    p = np.asarray(points, dtype=np.float64)
    d = torus_displacement(p[:, None, :], p[None, :, :], L)
    return np.sqrt(np.sum(d * d, axis=-1))


def dbscan(points, eps: float = DEFAULT_EPS, min_pts: int = DEFAULT_MIN_PTS,
           L: Optional[float] = None) -> np.ndarray:
    """DBSCAN labels under the torus metric (Euclidean if ``L`` is None).

    A point is core if at least ``min_pts`` points, itself included, lie
    within ``eps``. Clusters are numbered in order of discovery while
    scanning points by index; noise is ``NOISE``.
    """
    if eps <= 0 or min_pts < 1:
        raise ValueError("eps must be > 0 and min_pts >= 1")
    p = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    n = len(p)
    if L is None:
        dist = np.sqrt(np.sum((p[:, None, :] - p[None, :, :]) ** 2, axis=-1))
    else:
        dist = torus_distance_matrix(p, L)
    adj = dist <= eps
    core = adj.sum(axis=1) >= min_pts
    neighbors = [np.flatnonzero(row) for row in adj]

    unvisited = -2
    labels = np.full(n, unvisited, dtype=np.int64)
    cluster = 0
    for i in range(n):
        if labels[i] != unvisited:
            continue
        if not core[i]:
            labels[i] = NOISE
            continue
        labels[i] = cluster
        queue = deque(neighbors[i])
        while queue:
            j = queue.popleft()
            if labels[j] == NOISE:
                labels[j] = cluster
                continue
            if labels[j] != unvisited:
                continue
            labels[j] = cluster
            if core[j]:
                queue.extend(neighbors[j])
        cluster += 1
    return labels


def cluster_sizes(labels) -> tuple:
    """Cluster sizes in descending order and the noise count."""
    labels = np.asarray(labels)
    ids, counts = np.unique(labels[labels != NOISE], return_counts=True)
    return sorted(counts.tolist(), reverse=True), int(np.sum(labels == NOISE))


def cluster_size_table(frames) -> tuple:
    """Average cluster sizes by size rank over frames, plus mean noise count.

    Frames with fewer clusters contribute 0 at the missing ranks, so the mean
    sizes plus mean noise still add up to the agent count.
    """
    per_frame = [cluster_sizes(lab) for lab in frames]
    if not per_frame:
        return np.zeros(0), 0.0
    width = max(len(s) for s, _ in per_frame)
    table = np.zeros((len(per_frame), width))
    for k, (sizes, _) in enumerate(per_frame):
        table[k, :len(sizes)] = sizes
    return table.mean(axis=0), float(np.mean([nz for _, nz in per_frame]))


def _mean_pair_distance(points, L: float) -> float:
    n = len(points)
    if n < 2:
        return float("nan")
    d = torus_distance_matrix(points, L)
    return float(d[np.triu_indices(n, k=1)].mean())


def avg_pairwise_distance(points, L: float) -> float:
    """Mean torus distance over unordered pairs, with the edge scaled to 1.

    ``nan`` for fewer than two points.
    """
    p = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    return _mean_pair_distance(p / L, 1.0)


def kde_density(points, query, bandwidth: float = DEFAULT_BANDWIDTH, L: float = 40.0):
    """Unnormalised Gaussian KDE on the torus (integrates to ``len(points)``).

    Each kernel uses only the shortest image, which is accurate while the
    bandwidth is small relative to ``L``. ``query`` may be ``(2,)`` or
    ``(..., 2)``.
    """
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    p = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    q = np.asarray(query, dtype=np.float64)
    if len(p) == 0:
        return 0.0 if q.ndim == 1 else np.zeros(q.shape[:-1])
    d = torus_displacement(q[..., None, :], p, L)
    r2 = np.sum(d * d, axis=-1)
    dens = np.exp(-r2 / (2.0 * bandwidth**2)).sum(axis=-1) / (2.0 * np.pi * bandwidth**2)
    return float(dens) if q.ndim == 1 else dens


@dataclass
class FrameMetrics:
    labels: np.ndarray
    sizes: list
    noise: int
    cluster_deviation: list
    cluster_pairwise: list
    pooled_pairwise: float
    noise_pairwise: float
    all_pairwise: float
    all_deviation: float


def frame_metrics(positions, orientations, L: float, eps: float = DEFAULT_EPS,
                  min_pts: int = DEFAULT_MIN_PTS) -> FrameMetrics:
    pos = np.asarray(positions, dtype=np.float64)
    ori = np.asarray(orientations, dtype=np.float64)
    labels = dbscan(pos, eps, min_pts, L)
    sizes, noise = cluster_sizes(labels)
    scaled = pos / L
    dev, pair = [], []
    pooled_sum, pooled_n = 0.0, 0
    for c in range(labels.max() + 1 if len(labels) else 0):
        members = labels == c
        dev.append(mean_angle_deviation(ori[members]).value)
        k = int(members.sum())
        if k < 2:
            pair.append(float("nan"))
            continue
        d = torus_distance_matrix(scaled[members], 1.0)[np.triu_indices(k, k=1)]
        pair.append(float(d.mean()))
        pooled_sum += float(d.sum())
        pooled_n += len(d)
    return FrameMetrics(
        labels=labels,
        sizes=sizes,
        noise=noise,
        cluster_deviation=dev,
        cluster_pairwise=pair,
        pooled_pairwise=pooled_sum / pooled_n if pooled_n else float("nan"),
        noise_pairwise=_mean_pair_distance(scaled[labels == NOISE], 1.0),
        all_pairwise=_mean_pair_distance(scaled, 1.0),
        all_deviation=mean_angle_deviation(ori).value if len(ori) else float("nan"),
    )


def _nanmean(values) -> float:
    values = [v for v in values if v is not None and not np.isnan(v)]
    return float(np.mean(values)) if values else float("nan")


@dataclass
class SwarmMetrics:
    """Frame metrics averaged over frames (clusters averaged within a frame first)."""

    frames: int = 0
    cluster_deviation: float = float("nan")
    all_deviation: float = float("nan")
    cluster_pairwise: float = float("nan")
    pooled_pairwise: float = float("nan")
    noise_pairwise: float = float("nan")
    all_pairwise: float = float("nan")
    mean_sizes: np.ndarray = field(default_factory=lambda: np.zeros(0))
    mean_noise: float = float("nan")
    largest_fraction: float = float("nan")

    @classmethod
    def from_frames(cls, metrics: list, num_agents: int) -> "SwarmMetrics":
        if not metrics:
            return cls()
        sizes, noise = cluster_size_table([m.labels for m in metrics])
        return cls(
            frames=len(metrics),
            cluster_deviation=_nanmean([_nanmean(m.cluster_deviation) for m in metrics]),
            all_deviation=_nanmean([m.all_deviation for m in metrics]),
            cluster_pairwise=_nanmean([_nanmean(m.cluster_pairwise) for m in metrics]),
            pooled_pairwise=_nanmean([m.pooled_pairwise for m in metrics]),
            noise_pairwise=_nanmean([m.noise_pairwise for m in metrics]),
            all_pairwise=_nanmean([m.all_pairwise for m in metrics]),
            mean_sizes=sizes,
            mean_noise=noise,
            largest_fraction=float(
                np.mean([(m.sizes[0] if m.sizes else 0) / num_agents for m in metrics])
            ),
        )


def trajectory_metrics(traj, L: float, eps: float = DEFAULT_EPS, min_pts: int = DEFAULT_MIN_PTS,
                       skip: int = TRANSIENT_FRAMES, every: int = 1) -> list:
    """Frame metrics for frames ``skip, skip + every, ...`` of a trajectory."""
    return [
        frame_metrics(traj.prey_pos[t], traj.prey_ori[t], L, eps, min_pts)
        for t in range(skip, traj.num_frames, every)
    ]


def caught_per_frame(catches: int, length: int, transient: int = TRANSIENT_FRAMES):
    """Catches per frame after the transient; ``None`` if the episode is too short."""
    if length <= transient:
        log.info("episode of %d frames excluded from caught-per-frame", length)
        return None
    return catches / (length - transient)


def aggregate_caught_per_frame(by_seed: dict, transient: int = TRANSIENT_FRAMES) -> float:
    """Mean over episodes within each seed, then over seeds.

    ``by_seed`` maps a seed to a list of ``(catches, length)`` pairs.
    """
    seed_means = []
    for episodes in by_seed.values():
        vals = [caught_per_frame(c, n, transient) for c, n in episodes]
        vals = [v for v in vals if v is not None]
        if vals:
            seed_means.append(float(np.mean(vals)))
    return float(np.mean(seed_means)) if seed_means else float("nan")


@dataclass
class DensityTrace:
    """``mean[k]`` is the density ``window - k`` frames before the catch."""

    mean: np.ndarray
    count: int
    excluded: int


def death_windows(traj, window: int = TRANSIENT_FRAMES):
    """``(agent, catch_frame)`` pairs whose victim lived ``window`` frames first.

    Also returns the number of catches skipped for too short a life.
    """
    spawn = np.zeros(traj.num_agents, dtype=np.int64)
    kept, excluded = [], 0
    for t in range(1, traj.num_frames):
        for i in np.flatnonzero(traj.caught[t]):
            # alive on frames spawn[i] .. t-1
            if t - spawn[i] >= window:
                kept.append((int(i), t))
            else:
                excluded += 1
            spawn[i] = t
    return kept, excluded


def density_before_death(trajs, bandwidth: float = DEFAULT_BANDWIDTH, L: float = 40.0,
                         window: int = TRANSIENT_FRAMES) -> DensityTrace:
    """KDE density at each victim's position over its last ``window`` frames.

    The victim itself is left out of the point set. Traces are aligned on
    time-to-death and averaged over all victims of all trajectories.
    """
    if not isinstance(trajs, (list, tuple)):
        trajs = [trajs]
    total = np.zeros(window)
    count, excluded = 0, 0
    for traj in trajs:
        kept, skipped = death_windows(traj, window)
        excluded += skipped
        for i, t in kept:
            frames = np.arange(t - window, t)
            pts = traj.prey_pos[frames]
            others = np.delete(pts, i, axis=1)
            q = pts[:, i, :]
            d = torus_displacement(q[:, None, :], others, L)
            r2 = np.sum(d * d, axis=-1)
            total += np.exp(-r2 / (2.0 * bandwidth**2)).sum(axis=1) / (2.0 * np.pi * bandwidth**2)
            count += 1
    if excluded:
        log.info("%d catches excluded from density-before-death (life < %d frames)", excluded, window)
    mean = total / count if count else np.zeros(window)
    return DensityTrace(mean, count, excluded)


def density_trend(trace: DensityTrace):
    """Spearman correlation of the mean trace with time elapsed toward death.

    Negative means density falls as capture approaches.
    """
    res = spearmanr(np.arange(len(trace.mean)), trace.mean)
    return float(res.statistic), float(res.pvalue)
