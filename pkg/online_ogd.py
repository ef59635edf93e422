"""Online gradient descent planner chasing a leading path between peer and destination."""

import logging
import math
from typing import Any, Optional, Union

import numpy as np

from geometry import project_norm_ball
from models import (
    AssumptionReport,
    LambdaSchedule,
    LossKind,
    LossSpec,
    OgdConfig,
    Region,
    Scenario,
    ScheduleKind,
    Trajectory,
)
from projections import project_region

logger = logging.getLogger(__name__)

Number = Union[float, np.ndarray]


def lambda_at(schedule: LambdaSchedule, t: int) -> float:
    """Weight of the peer in the leading path at slot t"""
    if not 1 <= t <= schedule.horizon:
        raise ValueError(f"slot {t} outside 1..{schedule.horizon}")
    if schedule.kind == ScheduleKind.LINEAR_DOWN:
        return 1.0 - t / schedule.horizon
    if schedule.kind == ScheduleKind.LINEAR_UP:
        return t / schedule.horizon
    return float(schedule.values[t - 1])


def leading_path(lam: float, peer: Any, dest: Any) -> np.ndarray:
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    return lam * np.asarray(peer, dtype=float) + (1.0 - lam) * np.asarray(dest, dtype=float)


def lead_stream(scenario: Scenario, schedule: LambdaSchedule) -> np.ndarray:
    """Leading path l(t) for t = 1..T' as an (T', 2) array"""
    rows = [leading_path(lambda_at(schedule, t), scenario.peer_at(t), scenario.destination_at(t))
            for t in range(1, scenario.horizon + 1)]
    return np.vstack(rows)


def project_ball(w: Any, v: float) -> np.ndarray:
    """Euclidean projection onto the ball of radius v centred at the origin"""
    arr = np.asarray(w, dtype=float)
    out = project_norm_ball(arr, v)
    return out[0] if arr.ndim == 1 else out


def huber_value(d: Number, mu: float, v: float) -> Number:
    """Huber-type loss of a distance: quadratic inside the knee v, mixed linear beyond.

    The far branch closes with (1 - mu) v^2 / 2 so value and slope are
    continuous at d = v. The published (1 - mu^2) v^2 / 2 constant leaves a
    jump of mu (1 - mu) v^2 / 2 at the knee; it is taken to be a typo and
    not used.
    """
    arr = np.asarray(d, dtype=float)
    if np.any(arr < 0):
        raise ValueError("distance must be non-negative")
    near = 0.5 * arr * arr
    far = v * (1.0 - mu) * arr + 0.5 * mu * arr * arr - 0.5 * (1.0 - mu) * v * v
    out = np.where(arr <= v, near, far)
    return float(out) if np.ndim(d) == 0 else out


def loss_value(spec: LossSpec, x: Any, lead: Any) -> Number:
    diff = np.asarray(x, dtype=float) - np.asarray(lead, dtype=float)
    dist = np.linalg.norm(diff, axis=-1)
    if spec.kind == LossKind.SQUARED:
        out = dist * dist
    else:
        out = huber_value(dist, spec.mu, spec.knee_v)
    return float(out) if np.ndim(out) == 0 else out


def loss_grad(spec: LossSpec, x: Any, lead: Any) -> np.ndarray:
    diff = np.asarray(x, dtype=float) - np.asarray(lead, dtype=float)
    if spec.kind == LossKind.SQUARED:
        return 2.0 * diff
    return spec.mu * diff + (1.0 - spec.mu) * project_ball(diff, spec.knee_v)


def ogd_step(x: Any, lead: Any, cfg: OgdConfig) -> np.ndarray:
    """x - grad f(x) / gamma"""
    return np.asarray(x, dtype=float) - loss_grad(cfg.loss, x, lead) / cfg.gamma


def min_gamma(mu: float, region_diameter: float, v: float, lipschitz_L: float = 1.0) -> float:
    """Smallest gamma meeting both gamma >= L and the bounded-variation condition"""
    if mu < 0 or region_diameter < 0 or v <= 0:
        raise ValueError("mu, R must be non-negative and v positive")
    return max(lipschitz_L, 1.0 + mu * region_diameter / v)


def auto_config(loss: LossSpec, schedule: LambdaSchedule, region_diameter: float, v: float,
                region: Optional[Region] = None) -> OgdConfig:
    gamma = min_gamma(loss.mu, region_diameter, v, loss.lipschitz_L)
    return OgdConfig(gamma=gamma, loss=loss.with_diameter(region_diameter),
                     schedule=schedule, region=region)


def verify_assumptions(cfg: OgdConfig, region_diameter: float,
                       speed_v: Optional[float] = None) -> AssumptionReport:
    loss = cfg.loss
    v = speed_v if speed_v is not None else loss.knee_v
    if v is None or v <= 0:
        raise ValueError("a positive speed is needed to check bounded variation")
    grad_bound = loss.gradient_bound(region_diameter)
    lipschitz = loss.lipschitz_L
    needed = grad_bound / v
    return AssumptionReport(
        a1_strong_convexity=loss.mu > 0,
        a2_lipschitz_gradient=math.isfinite(lipschitz) and math.isfinite(grad_bound),
        a3_bounded_variation=cfg.gamma >= needed * (1.0 - 1e-12),
        gamma_at_least_L=cfg.gamma >= lipschitz,
        mu=loss.mu,
        lipschitz_L=lipschitz,
        grad_bound_G=grad_bound,
        gamma=cfg.gamma,
        required_gamma=max(lipschitz, needed),
        speed_v=v,
        region_diameter_R=region_diameter,
    )


def ogd_run(scenario: Scenario, cfg: OgdConfig) -> Trajectory:
    """Play the online learner for T' slots; only slot-t readings are used at slot t.

    Any positive gamma runs. When verify_assumptions reports a failure a
    warning names it, and steps longer than v are clipped to the speed ball so
    the trajectory stays velocity-feasible; with A3 in force the clip never
    binds for the Euclidean norm.
    """
    if cfg.schedule.horizon != scenario.horizon:
        raise ValueError(f"schedule horizon {cfg.schedule.horizon} != scenario horizon {scenario.horizon}")
    report = verify_assumptions(cfg, scenario.region_diameter_R, scenario.speed_v)
    if not report.all_hold:
        logger.warning("ogd assumptions not satisfied (%s): gamma=%.6g, required gamma >= %.6g",
                       ", ".join(report.failed()), report.gamma, report.required_gamma)
    region = cfg.region or scenario.region
    v = scenario.speed_v

    points = np.empty((scenario.horizon, 2))
    points[0] = scenario.start
    for t in range(1, scenario.horizon):
        lead = leading_path(lambda_at(cfg.schedule, t), scenario.peer_at(t), scenario.destination_at(t))
        x = points[t - 1]
        nxt = ogd_step(x, lead, cfg)
        nxt = x + project_norm_ball(nxt - x, v, scenario.norm)[0]
        if region is not None:
            nxt = project_region(nxt, region)
        points[t] = nxt
    logger.debug("ogd run finished: %d slots, gamma=%.6g", scenario.horizon, cfg.gamma)
    return Trajectory(points)
