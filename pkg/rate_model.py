"""Link utilities: received signal strength, SNR and Shannon rate over a path-loss channel."""

import logging
from dataclasses import replace
from typing import Any, NamedTuple, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from models import RateModel, Trajectory

logger = logging.getLogger(__name__)

Number = Union[float, np.ndarray]


class RateSummary(NamedTuple):
    average_bps: float
    downloaded_bits: float


def _checked_distance(dist: Any) -> np.ndarray:
    arr = np.asarray(dist, dtype=float)
    if np.any(~(arr > 0)):
        raise ValueError("distance must be positive: path loss is undefined at zero range")
    return arr


def _as_output(arr: np.ndarray, like: Any) -> Number:
    return float(arr) if np.ndim(like) == 0 else arr


def utility_rss(dist: Number, alpha: float) -> Number:
    """Average received signal strength dist^-alpha"""
    arr = _checked_distance(dist)
    return _as_output(np.power(arr, -alpha), dist)


def utility_snr(dist: Number, model: RateModel) -> Number:
    arr = _checked_distance(dist)
    rss = np.power(arr / model.distance_scale, -model.path_loss_alpha)
    return _as_output(rss / (model.noise_power_sigma2 + rss), dist)


def rate(dist: Number, model: RateModel) -> Number:
    """Maximum achievable rate W log2(1 + SNR) in bits per second"""
    snr = np.asarray(utility_snr(dist, model), dtype=float)
    return _as_output(model.bandwidth_W * np.log2(1.0 + snr), dist)


# Capacity utility and rate coincide
utility_capacity = rate


def separations(traj1: Trajectory, traj2: Trajectory) -> np.ndarray:
    """Per-slot Euclidean separation over the common slots"""
    n = min(traj1.slot_count, traj2.slot_count)
    diff = traj1.points[:n] - traj2.points[:n]
    return np.hypot(diff[:, 0], diff[:, 1])


def average_rate(traj1: Trajectory, traj2: Trajectory, model: RateModel,
                 slot_duration_s: float = 1.0) -> RateSummary:
    """Mean per-slot rate over the common slots and the total bits downloaded"""
    if traj1.slot_count == 0 or traj2.slot_count == 0:
        raise ValueError("trajectories must be non-empty")
    per_slot = np.asarray(rate(separations(traj1, traj2), model), dtype=float)
    return RateSummary(float(per_slot.mean()), float(per_slot.sum() * slot_duration_s))


def calibrate_distance_scale(traj1: Trajectory, traj2: Trajectory, model: RateModel,
                             target_bps: float, min_distance: float = 1e-3) -> float:
    """Distance scale at which the average rate between two trajectories equals target_bps.

    The average rate is increasing in the scale, so the root is bracketed by
    growing the interval geometrically and refined with Brent's method.
    """
    if not 0 < target_bps < model.bandwidth_W:
        raise ValueError(f"target rate must lie in (0, W), got {target_bps}")
    dists = np.maximum(separations(traj1, traj2), min_distance)

    def gap(log_scale: float) -> float:
        scaled = model.with_scale(float(np.exp(log_scale)))
        return float(np.mean(rate(dists, scaled))) - target_bps

    lo, hi = -5.0, 5.0
    for _ in range(60):
        if gap(lo) < 0 < gap(hi):
            break
        lo, hi = lo - 5.0, hi + 5.0
    else:
        raise ValueError("could not bracket the calibration target")
    root = brentq(gap, lo, hi, xtol=1e-14, rtol=1e-14, maxiter=500)
    scale = float(np.exp(root))
    logger.debug("calibrated distance scale %.12g for %.6g bps", scale, target_bps)
    return scale


def fit_path_loss_exponent(direct: Tuple[Trajectory, Trajectory],
                           pairs: Sequence[Tuple[Trajectory, Trajectory]],
                           targets_bps: Sequence[float], model: RateModel,
                           direct_target_bps: float, min_distance: float = 1e-3,
                           bounds: Tuple[float, float] = (0.5, 6.0)) -> RateModel:
    """Rate model whose exponent best matches average rates over several trajectory pairs.

    For every trial exponent the distance scale is first calibrated so the
    direct pair averages direct_target_bps; the exponent then minimises the
    summed squared log ratio between the pair averages and targets_bps.
    """
    if len(pairs) != len(targets_bps) or not pairs:
        raise ValueError("need one target rate per trajectory pair")
    targets = np.asarray(targets_bps, dtype=float)
    dists = [np.maximum(separations(a, b), min_distance) for a, b in pairs]

    def calibrated(alpha: float) -> RateModel:
        trial = replace(model, path_loss_alpha=float(alpha))
        scale = calibrate_distance_scale(direct[0], direct[1], trial, direct_target_bps, min_distance)
        return trial.with_scale(scale)

    def misfit(alpha: float) -> float:
        trial = calibrated(alpha)
        achieved = np.array([np.mean(rate(d, trial)) for d in dists])
        return float(np.sum(np.log(achieved / targets) ** 2))

    result = minimize_scalar(misfit, bounds=bounds, method='bounded', options={'xatol': 1e-9})
    fitted = calibrated(result.x)
    logger.info("fitted path-loss exponent %.6g (scale %.6g, misfit %.3g)",
                fitted.path_loss_alpha, fitted.distance_scale, result.fun)
    return fitted
