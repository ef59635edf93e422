"""Receding-horizon planner: re-solve the full horizon every slot, commit one step."""

import logging
from typing import Any, List, Optional, Tuple

import numpy as np

from exceptions import Infeasible
from geometry import distance
from models import (
    MpcState,
    NormKind,
    Region,
    Scenario,
    SolveReport,
    TrackingProblem,
    Trajectory,
    as_point,
)
from offline_solver import REACH_SLACK, SolverSettings, solve_tracking

logger = logging.getLogger(__name__)


def reachability_check(pos: Any, dest: Any, v: float, remaining_slots: int,
                       norm: NormKind = NormKind.EUCLIDEAN, tol: float = 0.0) -> bool:
    """True iff dest can be reached from pos within remaining_slots moves at speed v"""
    if remaining_slots < 0:
        raise ValueError("remaining_slots must be non-negative")
    return distance(pos, dest, norm) <= v * remaining_slots + tol


def _plan(state: MpcState, peer_now: Any, dest_now: Any, v: float,
          norm: NormKind = NormKind.EUCLIDEAN, region: Optional[Region] = None,
          opts: Optional[SolverSettings] = None) -> SolveReport:
    prefix = state.committed_prefix.points
    dest_now = as_point(dest_now, 'dest_now')
    remaining = state.horizon - state.current_slot
    budget = v * remaining
    if not reachability_check(prefix[-1], dest_now, v, remaining, norm, tol=budget * REACH_SLACK):
        raise Infeasible(state.current_slot, distance(prefix[-1], dest_now, norm), budget,
                         committed=state.committed_prefix)
    problem = TrackingProblem(
        start=prefix[0],
        destination=dest_now,
        leads=np.repeat(as_point(peer_now, 'peer_now')[None, :], state.horizon, axis=0),
        speed_v=v,
        norm=norm,
        region=region,
        prefix=prefix,
    )
    initial = None
    if state.previous_plan is not None:
        # the previous plan already contains the step just committed
        initial = np.array(state.previous_plan, dtype=float, copy=True)
        initial[:prefix.shape[0]] = prefix
        initial[-1] = dest_now
    return solve_tracking(problem, opts, initial)


def mpc_plan(state: MpcState, peer_now: Any, dest_now: Any, v: float,
             norm: NormKind = NormKind.EUCLIDEAN, region: Optional[Region] = None,
             opts: Optional[SolverSettings] = None) -> Trajectory:
    """Full-horizon plan keeping the committed prefix and ending at dest_now"""
    return _plan(state, peer_now, dest_now, v, norm, region, opts).trajectory


def mpc_run(scenario: Scenario,
            opts: Optional[SolverSettings] = None) -> Tuple[Trajectory, List[SolveReport]]:
    """Commit one step per slot; raises Infeasible carrying the committed prefix"""
    horizon = scenario.horizon
    points = [scenario.start.copy()]
    reports: List[SolveReport] = []
    plan = None
    for t in range(1, horizon):
        state = MpcState(Trajectory(np.vstack(points)), t, horizon, previous_plan=plan)
        report = _plan(state, scenario.peer_at(t), scenario.destination_at(t),
                       scenario.speed_v, scenario.norm, scenario.region, opts)
        reports.append(report)
        plan = report.trajectory.points
        points.append(plan[t].copy())
        logger.debug("mpc slot %d: committed %s (kkt %.2g)", t, plan[t], report.kkt_residual)
    return Trajectory(np.vstack(points)), reports
