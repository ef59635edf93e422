"""
Tests for the receding-horizon planner.
"""

import numpy as np
import pytest

from exceptions import Infeasible
from geometry import check_velocity_feasible
from models import MpcState, NormKind, Scenario, TrackingProblem, Trajectory
from mpc import mpc_plan, mpc_run, reachability_check
from offline_solver import solve_tracking

JUMP_HORIZON_T = 9
JUMP_DELAY = 3


def jump_scenario(dest_stream: np.ndarray) -> Scenario:
    """Eight moves from (0, 0) to (8, 0) at unit speed, three slots of slack, static peer"""
    horizon = JUMP_HORIZON_T + JUMP_DELAY
    return Scenario((0.0, 0.0), dest_stream, 1.0, JUMP_HORIZON_T, JUMP_DELAY,
                    np.repeat([[3.0, 2.0]], horizon, axis=0))


class TestReachability:
    """Reachability of a (possibly jumped) destination."""

    def test_random_jumps(self, rng):
        """Jumps inside the remaining budget are reachable, jumps beyond it are not."""
        for _ in range(10):
            pos = rng.uniform(-50, 50, size=2)
            v, remaining = rng.uniform(0.5, 5.0), int(rng.integers(1, 20))
            angle = rng.uniform(0, 2 * np.pi)
            direction = np.array([np.cos(angle), np.sin(angle)])
            inside = pos + direction * v * remaining * rng.uniform(0.0, 0.999)
            outside = pos + direction * v * remaining * rng.uniform(1.01, 3.0)
            assert reachability_check(pos, inside, v, remaining)
            assert not reachability_check(pos, outside, v, remaining)

    def test_boundary_and_zero_slots(self):
        assert reachability_check((0, 0), (3, 4), 1.0, 5)
        assert reachability_check((1, 1), (1, 1), 1.0, 0)
        assert not reachability_check((0, 0), (0.1, 0), 1.0, 0)

    def test_manhattan(self):
        assert reachability_check((0, 0), (3, 4), 1.0, 5)
        assert not reachability_check((0, 0), (3, 4), 1.0, 5, NormKind.MANHATTAN)

    def test_rejects_negative_slots(self):
        with pytest.raises(ValueError):
            reachability_check((0, 0), (1, 1), 1.0, -1)


class TestPlan:
    """One planning step."""

    def test_keeps_prefix_and_ends_at_destination(self):
        prefix = Trajectory(np.array([[0.0, 0.0], [1.0, 0.5]]))
        plan = mpc_plan(MpcState(prefix, 2, 8), (4.0, 4.0), (6.0, 0.0), 1.5)
        assert plan.slot_count == 8
        assert np.array_equal(plan.points[:2], prefix.points)
        assert np.allclose(plan.end, [6.0, 0.0])
        assert check_velocity_feasible(plan, 1.5, tol=1e-6)

    def test_matches_offline_tracking_of_a_static_peer(self):
        """From the first slot the plan is the offline tracking solution with every lead at the peer."""
        peer, dest, v = np.array([2.0, 2.0]), np.array([3.0, 0.0]), 1.0
        start = Trajectory(np.array([[0.0, 0.0]]))
        plan = mpc_plan(MpcState(start, 1, 5), peer, dest, v)
        offline = solve_tracking(TrackingProblem((0.0, 0.0), dest, np.repeat(peer[None, :], 5, axis=0), v))
        assert float(np.sum((plan.points - peer) ** 2)) == pytest.approx(offline.objective, abs=1e-3)
        assert np.allclose(plan.points, offline.trajectory.points, atol=1e-3)

    def test_infeasible_state(self):
        prefix = Trajectory(np.array([[0.0, 0.0], [1.0, 0.0]]))
        with pytest.raises(Infeasible) as err:
            mpc_plan(MpcState(prefix, 2, 4), (0.0, 0.0), (50.0, 0.0), 1.0)
        assert err.value.slot == 2


class TestRun:
    """Full receding-horizon runs."""

    def test_reaches_destination(self, small_scenario):
        traj, reports = mpc_run(small_scenario)
        assert traj.slot_count == small_scenario.horizon
        assert len(reports) == small_scenario.horizon - 1
        assert np.array_equal(traj.start, small_scenario.start)
        assert np.allclose(traj.end, [10.0, 0.0], atol=1e-6)
        assert check_velocity_feasible(traj, 2.0, tol=1e-6 * 2.0)

    def test_moves_toward_peer_with_slack(self, small_scenario):
        """With spare slots the user bends toward the peer above the path."""
        traj, _ = mpc_run(small_scenario)
        assert traj.points[:, 1].max() > 0.5

    def test_static_world_matches_offline(self):
        """With a fixed peer and destination every re-plan keeps the first plan."""
        horizon = JUMP_HORIZON_T + JUMP_DELAY
        scenario = jump_scenario(np.repeat([[8.0, 0.0]], horizon, axis=0))
        traj, reports = mpc_run(scenario)
        offline = solve_tracking(TrackingProblem((0.0, 0.0), (8.0, 0.0), scenario.peer_stream, 1.0))
        objective = float(np.sum((traj.points - scenario.peer_stream) ** 2))
        assert objective == pytest.approx(offline.objective, rel=1e-5, abs=1e-6)
        assert all(r.converged for r in reports)

    def test_random_jumps_fail_exactly_when_unreachable(self, rng):
        """10 reachable and 10 unreachable jumps: Infeasible is raised only for the latter, at the jump slot."""
        horizon = JUMP_HORIZON_T + JUMP_DELAY
        base = np.repeat([[8.0, 0.0]], horizon, axis=0)
        calm, _ = mpc_run(jump_scenario(base))
        for reachable in [True] * 10 + [False] * 10:
            slot = int(rng.integers(2, horizon - 1))
            remaining = horizon - slot
            position = calm.points[slot - 1]
            angle = rng.uniform(0.0, 2.0 * np.pi)
            factor = rng.uniform(0.1, 0.95) if reachable else rng.uniform(1.05, 2.0)
            target = position + factor * remaining * np.array([np.cos(angle), np.sin(angle)])
            assert reachability_check(position, target, 1.0, remaining) == reachable
            dest = base.copy()
            dest[slot - 1:] = target
            if reachable:
                traj, _ = mpc_run(jump_scenario(dest))
                assert np.allclose(traj.end, target, atol=1e-6)
                assert check_velocity_feasible(traj, 1.0, tol=1e-6)
            else:
                with pytest.raises(Infeasible) as err:
                    mpc_run(jump_scenario(dest))
                assert err.value.slot == slot
                assert np.array_equal(err.value.committed.points, calm.points[:slot])

    def test_destination_jump_is_infeasible(self):
        horizon = 6
        dest = np.repeat([[5.0, 0.0]], horizon, axis=0)
        dest[2:] = [100.0, 0.0]
        scenario = Scenario((0, 0), dest, 1.0, 6, 0, np.repeat([[2.0, 2.0]], horizon, axis=0))
        with pytest.raises(Infeasible) as err:
            mpc_run(scenario)
        assert err.value.slot == 3
        assert err.value.committed.slot_count == 3
