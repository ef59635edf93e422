"""Offline trajectory solvers.

All three problems (cooperative two-user planning, the regret benchmark and
tracking of a known lead stream) are smooth convex objectives over a
FeasibleSet. They share one accelerated projected-gradient core with
gradient-based adaptive restart that stops only once the fixed-point residual
has been verified with a converged projection.

Without a region the iteration runs on the free steps, where the feasible set
is a product of norm balls plus one sum constraint per end-pinned chain and
is projected exactly. With a region it runs on points with warm-started
Dykstra sweeps, and the final iterate is blended with a feasible reference so
returned trajectories meet every step bound and pin exactly.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np

from exceptions import InfeasibleInput, UnreachableDestination
from geometry import direct_path, distance, project_norm_ball
from models import (
    BenchmarkProblem,
    CooperativeProblem,
    NormKind,
    SolveReport,
    TrackingProblem,
    Trajectory,
    as_point,
)
from online_ogd import loss_grad, loss_value
from projections import Chain, DykstraProjector, FeasibleSet, StepProjector
from settings import settings

logger = logging.getLogger(__name__)

# relative slack on reachability budgets
REACH_SLACK = 1e-9


@dataclass(frozen=True)
class SolverSettings:
    tolerance: float = settings.SOLVER_TOLERANCE
    max_iter: int = settings.SOLVER_MAX_ITER
    projection_tolerance: float = settings.PROJECTION_TOLERANCE
    projection_max_sweeps: int = settings.PROJECTION_MAX_SWEEPS


@dataclass
class _Formulation:
    feasible: FeasibleSet
    objective: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    lipschitz: float
    reference: np.ndarray
    finalize: Optional[Callable[[np.ndarray], np.ndarray]] = None


def _check_reachable(start: np.ndarray, dest: np.ndarray, speed: float, moves: int,
                     norm: NormKind, user: int = 1):
    gap = distance(start, dest, norm)
    budget = speed * moves
    if gap > budget * (1.0 + REACH_SLACK):
        raise UnreachableDestination(gap, budget, user)


def _steer_to(start: np.ndarray, dest: np.ndarray, speed: float, slots: int,
              norm: NormKind) -> np.ndarray:
    """Points after start moving straight toward dest at full speed, then waiting"""
    points = np.empty((slots, 2))
    current = start
    for i in range(slots):
        current = current + project_norm_ball(dest - current, speed, norm)[0]
        points[i] = current
    if slots:
        points[-1] = dest
    return points


def _cooperative_formulation(p: CooperativeProblem) -> _Formulation:
    users = (p.user1, p.user2)
    chains, refs = [], []
    for i, user in enumerate(users, start=1):
        s, d = as_point(user.start, 'start'), as_point(user.destination, 'destination')
        _check_reachable(s, d, user.speed_v, user.slots - 1, p.norm, user=i)
        pins = {0: s, user.slots - 1: d} if user.slots > 1 else {0: s}
        chains.append(Chain(user.slots, user.speed_v, pins))
        refs.append(direct_path(s, d, user.slots).points if user.slots > 1 else s[None, :])
    feasible = FeasibleSet(chains, p.norm, p.region)
    h = p.common_slots
    o2 = p.user1.slots

    def objective(x: np.ndarray) -> float:
        diff = x[:h] - x[o2:o2 + h]
        return float(np.sum(diff * diff))

    def gradient(x: np.ndarray) -> np.ndarray:
        g = np.zeros_like(x)
        diff = 2.0 * (x[:h] - x[o2:o2 + h])
        g[:h] = diff
        g[o2:o2 + h] = -diff
        return g

    def finalize(x: np.ndarray) -> np.ndarray:
        # slots past the shared horizon carry no objective: head straight home
        y = x.copy()
        for k, user in enumerate(users):
            if user.slots > h:
                sl = feasible.chain_slice(k)
                seg = y[sl]
                seg[h:] = _steer_to(seg[h - 1], as_point(user.destination), user.speed_v,
                                    user.slots - h, p.norm)
                y[sl] = seg
        return y

    return _Formulation(feasible, objective, gradient, 4.0, np.vstack(refs), finalize)


def _benchmark_formulation(p: BenchmarkProblem) -> _Formulation:
    feasible = FeasibleSet([Chain(p.horizon, p.speed_v, {0: p.start})], p.norm, p.region)
    leads = p.leads

    def objective(x: np.ndarray) -> float:
        return float(np.sum(loss_value(p.loss, x, leads)))

    def gradient(x: np.ndarray) -> np.ndarray:
        return loss_grad(p.loss, x, leads)

    reference = np.repeat(p.start[None, :], p.horizon, axis=0)
    return _Formulation(feasible, objective, gradient, p.loss.lipschitz_L, reference)


def _tracking_formulation(p: TrackingProblem) -> _Formulation:
    prefix = p.pinned_prefix
    k = prefix.shape[0]
    n = p.horizon
    _check_reachable(prefix[-1], p.destination, p.speed_v, n - k, p.norm)
    pins = {i: prefix[i] for i in range(k)}
    pins[n - 1] = p.destination
    feasible = FeasibleSet([Chain(n, p.speed_v, pins)], p.norm, p.region)
    leads = p.leads

    def objective(x: np.ndarray) -> float:
        diff = x - leads
        return float(np.sum(diff * diff))

    def gradient(x: np.ndarray) -> np.ndarray:
        return 2.0 * (x - leads)

    tail = direct_path(prefix[-1], p.destination, n - k + 1).points[1:]
    reference = np.vstack([prefix, tail])
    return _Formulation(feasible, objective, gradient, 2.0, reference)


def _formulation_for(problem) -> _Formulation:
    if isinstance(problem, CooperativeProblem):
        return _cooperative_formulation(problem)
    if isinstance(problem, BenchmarkProblem):
        return _benchmark_formulation(problem)
    if isinstance(problem, TrackingProblem):
        return _tracking_formulation(problem)
    raise TypeError(f"unsupported problem type {type(problem).__name__}")


def _step_residual(form: _Formulation, space: StepProjector, u: np.ndarray,
                   lipschitz: float) -> Tuple[float, bool]:
    target = u - space.pull_back(form.gradient(space.to_points(u))) / lipschitz
    moved, ok = space.project(target)
    return float(np.linalg.norm(u - moved)) / form.feasible.speed_scale, ok


def _point_residual(form: _Formulation, projector: DykstraProjector, x: np.ndarray,
                    warm: bool) -> Tuple[float, bool]:
    target = x - form.gradient(x) / form.lipschitz
    moved, ok = projector.project(target, warm=warm)
    return float(np.linalg.norm(x - moved)) / form.feasible.speed_scale, ok


def _accelerated(project: Callable[[np.ndarray], Tuple[np.ndarray, bool]],
                 gradient: Callable[[np.ndarray], np.ndarray],
                 residual: Callable[[np.ndarray], Tuple[float, bool]],
                 start: np.ndarray, lipschitz: float, scale: float,
                 opts: SolverSettings) -> Tuple[np.ndarray, int]:
    """FISTA with gradient-based restart; stops only on a verified residual"""
    x, _ = project(start)
    y = x.copy()
    t = 1.0
    step = 1.0 / lipschitz
    iterations = 0
    for iterations in range(1, opts.max_iter + 1):
        x_new, ok = project(y - step * gradient(y))
        moved = float(np.linalg.norm(x_new - y)) / scale
        if np.vdot(y - x_new, x_new - x) > 0:
            # momentum points uphill, restart
            t = 1.0
            y = x_new.copy()
        else:
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            y = x_new + ((t - 1.0) / t_next) * (x_new - x)
            t = t_next
        x = x_new
        if ok and moved <= opts.tolerance:
            value, verified = residual(x)
            if verified and value <= opts.tolerance:
                break
    return x, iterations


def _solve(form: _Formulation, opts: SolverSettings,
           initial: Optional[np.ndarray] = None) -> Tuple[np.ndarray, int, float, bool]:
    """Solved points, iterations, residual and whether that residual is verified"""
    start = form.reference if initial is None else np.asarray(initial, dtype=float)
    scale = form.feasible.speed_scale
    if form.feasible.region is None:
        space = StepProjector(form.feasible, opts.projection_tolerance)
        lipschitz = form.lipschitz * space.lipschitz_factor

        def gradient(u: np.ndarray) -> np.ndarray:
            return space.pull_back(form.gradient(space.to_points(u)))

        def residual(u: np.ndarray) -> Tuple[float, bool]:
            return _step_residual(form, space, u, lipschitz)

        u, iterations = _accelerated(space.project, gradient, residual,
                                     space.to_steps(start), lipschitz, scale, opts)
        value, ok = residual(u)
        x = space.to_points(u)
        logger.debug("step-space solve finished after %d iterations", iterations)
    else:
        projector = DykstraProjector(form.feasible, opts.projection_tolerance,
                                     opts.projection_max_sweeps)
        x, iterations = _accelerated(
            projector.project, form.gradient,
            lambda z: _point_residual(form, projector, z, warm=True),
            start, form.lipschitz, scale, opts)
        logger.debug("projected gradient finished after %d iterations, %d Dykstra sweeps",
                     iterations, projector.total_sweeps)
        checker = DykstraProjector(form.feasible, opts.projection_tolerance,
                                   opts.projection_max_sweeps)
        value, ok = _point_residual(form, checker, x, warm=False)
        x = form.feasible.restore(x, form.reference)
    if form.finalize is not None:
        x = form.finalize(x)
    return x, iterations, value, ok


def _report(form: _Formulation, x: np.ndarray, iterations: int, residual: float,
            verified: bool, opts: SolverSettings, split: Sequence[slice]) -> SolveReport:
    converged = verified and residual <= opts.tolerance
    if not converged:
        logger.warning("solver stopped at kkt residual %.3g after %d iterations%s",
                       residual, iterations, "" if verified else " (projection unconverged)")
    return SolveReport(
        trajectories=tuple(Trajectory(x[sl]) for sl in split),
        objective=form.objective(x),
        iterations=iterations,
        kkt_residual=residual,
        converged=converged,
    )


def solve_cooperative(p: CooperativeProblem, opts: Optional[SolverSettings] = None) -> SolveReport:
    """Jointly plan two users to minimize their summed squared separation"""
    opts = opts or SolverSettings()
    form = _cooperative_formulation(p)
    x, iterations, residual, ok = _solve(form, opts)
    split = [form.feasible.chain_slice(0), form.feasible.chain_slice(1)]
    return _report(form, x, iterations, residual, ok, opts, split)


def solve_benchmark(p: BenchmarkProblem, opts: Optional[SolverSettings] = None) -> SolveReport:
    """Best velocity-feasible trajectory in hindsight for a sequence of losses"""
    opts = opts or SolverSettings()
    form = _benchmark_formulation(p)
    x, iterations, residual, ok = _solve(form, opts)
    return _report(form, x, iterations, residual, ok, opts, [slice(0, p.horizon)])


def solve_tracking(p: TrackingProblem, opts: Optional[SolverSettings] = None,
                   initial: Optional[np.ndarray] = None) -> SolveReport:
    """Track known lead points between a pinned prefix and a pinned destination"""
    opts = opts or SolverSettings()
    form = _tracking_formulation(p)
    x, iterations, residual, ok = _solve(form, opts, initial)
    return _report(form, x, iterations, residual, ok, opts, [slice(0, p.horizon)])


def kkt_residual(traj: Union[Trajectory, Tuple[Trajectory, Trajectory]], problem,
                 opts: Optional[SolverSettings] = None) -> float:
    """Projected-gradient residual in speed units; zero iff stationary.

    Without a region it is ||u - P(u - grad_u/L_u)|| over the free steps u,
    with an exact projection. With a region it is the same map on points,
    projected by cold-started Dykstra.
    """
    opts = opts or SolverSettings()
    form = _formulation_for(problem)
    trajs = traj if isinstance(traj, tuple) else (traj,)
    x = np.vstack([t.points for t in trajs])
    if x.shape[0] != form.feasible.n_rows:
        raise InfeasibleInput(f"expected {form.feasible.n_rows} slots, got {x.shape[0]}")
    tol = settings.FEASIBILITY_TOL * form.feasible.speed_scale
    violation = form.feasible.violation(x)
    if violation > tol:
        raise InfeasibleInput(f"trajectory violates constraints by {violation:.3g}")
    if form.feasible.region is None:
        space = StepProjector(form.feasible, opts.projection_tolerance)
        value, ok = _step_residual(form, space, space.to_steps(x),
                                   form.lipschitz * space.lipschitz_factor)
    else:
        checker = DykstraProjector(form.feasible, opts.projection_tolerance,
                                   opts.projection_max_sweeps)
        value, ok = _point_residual(form, checker, x, warm=False)
    if not ok:
        logger.warning("residual projection did not converge, %.3g is approximate", value)
    return value
