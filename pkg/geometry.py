"""Planar geometry helpers: norms, travel times, direct paths and velocity checks."""

import math
from typing import Any

import numpy as np
from scipy.spatial import distance as spd

from models import NormKind, Trajectory, as_point, as_points

# slack absorbed before taking the ceiling in travel_time
_CEIL_SLACK = 1e-9


def distance(a: Any, b: Any, norm: NormKind = NormKind.EUCLIDEAN) -> float:
    """Distance between two points under the chosen norm"""
    a, b = as_point(a, 'a'), as_point(b, 'b')
    if NormKind(norm) == NormKind.MANHATTAN:
        return float(spd.cityblock(a, b))
    return float(spd.euclidean(a, b))


def row_norms(vectors: np.ndarray, norm: NormKind = NormKind.EUCLIDEAN) -> np.ndarray:
    vectors = np.atleast_2d(vectors)
    if NormKind(norm) == NormKind.MANHATTAN:
        return np.abs(vectors).sum(axis=1)
    return np.hypot(vectors[:, 0], vectors[:, 1])


def project_norm_ball(vectors: np.ndarray, radius: Any,
                      norm: NormKind = NormKind.EUCLIDEAN) -> np.ndarray:
    """Row-wise projection of (n, 2) vectors onto the norm ball of the given radius.

    The Manhattan ball uses the exact l1 projection: soft-thresholding with the
    threshold chosen so the result lands on the ball boundary.
    """
    w = np.atleast_2d(np.asarray(vectors, dtype=float))
    r = np.broadcast_to(np.asarray(radius, dtype=float), (w.shape[0],))
    if NormKind(norm) == NormKind.MANHATTAN:
        mags = np.abs(w)
        outside = mags.sum(axis=1) > r
        if not np.any(outside):
            return w.copy()
        hi = mags.max(axis=1)
        lo = mags.min(axis=1)
        theta = np.where(hi - lo >= r, hi - r, 0.5 * (hi + lo - r))
        shrunk = np.sign(w) * np.maximum(mags - theta[:, None], 0.0)
        return np.where(outside[:, None], shrunk, w)
    lengths = np.hypot(w[:, 0], w[:, 1])
    scale = np.ones_like(lengths)
    big = lengths > r
    scale[big] = r[big] / lengths[big]
    return w * scale[:, None]


def travel_time(s: Any, d: Any, v: float, norm: NormKind = NormKind.EUCLIDEAN) -> int:
    """Number of moves needed to cover s -> d at per-slot speed v (ceiling)"""
    if v <= 0:
        raise ValueError(f"speed must be positive, got {v}")
    dist = distance(s, d, norm)
    if dist == 0.0:
        return 0
    return int(math.ceil(dist / v - _CEIL_SLACK))


def direct_path(s: Any, d: Any, n_slots: int) -> Trajectory:
    """Uniform-speed straight line with point 1 = s and point n_slots = d"""
    if n_slots < 1:
        raise ValueError(f"n_slots must be at least 1, got {n_slots}")
    s, d = as_point(s, 's'), as_point(d, 'd')
    if n_slots == 1:
        if not np.array_equal(s, d):
            raise ValueError("a single-slot path needs s == d")
        return Trajectory(s[None, :])
    frac = np.linspace(0.0, 1.0, n_slots)[:, None]
    points = s + frac * (d - s)
    points[-1] = d
    return Trajectory(points)


def step_lengths(traj: Trajectory, norm: NormKind = NormKind.EUCLIDEAN) -> np.ndarray:
    return row_norms(traj.steps(), norm) if traj.slot_count > 1 else np.zeros(0)


def check_velocity_feasible(traj: Trajectory, v: float,
                            norm: NormKind = NormKind.EUCLIDEAN, tol: float = 0.0) -> bool:
    if tol < 0:
        raise ValueError("tol must be non-negative")
    lengths = step_lengths(traj, norm)
    return bool(np.all(lengths <= v + tol))


def distance_to_destination(traj: Trajectory, d: Any,
                            norm: NormKind = NormKind.EUCLIDEAN) -> float:
    return distance(traj.end, d, norm)


def region_diameter(points: Any, norm: NormKind = NormKind.EUCLIDEAN) -> float:
    """Largest pairwise distance in a point cloud"""
    pts = as_points(points, 'points')
    if pts.shape[0] < 2:
        return 0.0
    metric = 'cityblock' if NormKind(norm) == NormKind.MANHATTAN else 'euclidean'
    return float(spd.pdist(pts, metric=metric).max())
