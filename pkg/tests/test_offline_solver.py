"""
Tests for the offline cooperative, benchmark and tracking solvers.
"""

import numpy as np
import pytest
from scipy.spatial.distance import cdist

from conftest import slsqp_oracle
from exceptions import InfeasibleInput, UnreachableDestination
from geometry import check_velocity_feasible, direct_path
from models import (
    BenchmarkProblem,
    CooperativeProblem,
    LossSpec,
    NormKind,
    Region,
    TrackingProblem,
    Trajectory,
    UserPlan,
)
from offline_solver import (
    SolverSettings,
    kkt_residual,
    solve_benchmark,
    solve_cooperative,
    solve_tracking,
)
from online_ogd import loss_grad, loss_value

FIG1_USER1 = ((0.0, 400.0), (400.0, 1200.0))
FIG1_USER2 = ((400.0, 0.0), (800.0, 800.0))
FIG1_SPEED = 38.9


def fig1_problem(delta: int) -> CooperativeProblem:
    return CooperativeProblem(
        UserPlan(*FIG1_USER1, FIG1_SPEED, 24 + delta),
        UserPlan(*FIG1_USER2, FIG1_SPEED, 24 + delta),
    )


class TestCooperative:
    """Joint two-user solves."""

    def test_three_slot_meeting_point(self):
        """Users one unit apart can meet in the middle slot: objective 1 + 0 + 1."""
        problem = CooperativeProblem(UserPlan((0, 0), (1, 0), 1.0, 3),
                                     UserPlan((0, 1), (1, 1), 1.0, 3))
        report = solve_cooperative(problem)
        assert report.objective == pytest.approx(2.0, abs=1e-5)
        mid1, mid2 = report.trajectories[0].point(2), report.trajectories[1].point(2)
        assert np.linalg.norm(mid1 - mid2) == pytest.approx(0.0, abs=5e-3)

    def test_three_slot_grid_oracle(self):
        """A grid over the free middle points gives the same optimum."""
        v = np.sqrt(2.0)
        problem = CooperativeProblem(UserPlan((0, 0), (2, 0), v, 3),
                                     UserPlan((0, 4), (2, 4), v, 3))
        report = solve_cooperative(problem)
        grid = np.array([(x, y) for x in np.linspace(-1.0, 3.0, 81)
                         for y in np.linspace(-1.5, 5.5, 141)])

        def admissible(s, d):
            near = (np.linalg.norm(grid - s, axis=1) <= v + 1e-9) \
                & (np.linalg.norm(grid - d, axis=1) <= v + 1e-9)
            return grid[near]

        m1 = admissible(np.array([0, 0]), np.array([2, 0]))
        m2 = admissible(np.array([0, 4]), np.array([2, 4]))
        oracle = 16.0 + float(cdist(m1, m2, 'sqeuclidean').min()) + 16.0
        assert oracle == pytest.approx(36.0, abs=1e-9)
        assert report.objective == pytest.approx(oracle, abs=1e-4)

    @pytest.mark.parametrize("delta", [0, 1, 3])
    def test_solution_is_feasible(self, delta):
        """Tight delays leave thin feasible tubes; the solve still converges there."""
        problem = fig1_problem(delta)
        report = solve_cooperative(problem)
        for traj, (s, d) in zip(report.trajectories, (FIG1_USER1, FIG1_USER2)):
            assert traj.slot_count == 24 + delta
            assert np.allclose(traj.start, s) and np.allclose(traj.end, d)
            assert check_velocity_feasible(traj, FIG1_SPEED, tol=1e-6 * FIG1_SPEED)
        assert report.converged
        assert report.kkt_residual <= SolverSettings().tolerance
        assert kkt_residual(report.trajectories, problem) <= 2 * SolverSettings().tolerance

    def test_unequal_horizons_head_home(self):
        """The longer user still reaches its destination after the common slots."""
        problem = CooperativeProblem(UserPlan((0, 0), (4, 0), 1.0, 6),
                                     UserPlan((0, 2), (0, 6), 1.0, 9))
        report = solve_cooperative(problem)
        second = report.trajectories[1]
        assert second.slot_count == 9
        assert np.allclose(second.end, (0, 6))
        assert check_velocity_feasible(second, 1.0, tol=1e-6)

    def test_unreachable_destination(self):
        problem = CooperativeProblem(UserPlan((0, 0), (10, 0), 1.0, 5),
                                     UserPlan((0, 1), (1, 1), 1.0, 5))
        with pytest.raises(UnreachableDestination) as err:
            solve_cooperative(problem)
        assert err.value.user == 1

    def test_direct_path_is_not_stationary(self):
        """Deviating helps on the cooperative preset, so the direct path has a positive residual."""
        problem = fig1_problem(3)
        direct = (direct_path(*FIG1_USER1, 27), direct_path(*FIG1_USER2, 27))
        assert kkt_residual(direct, problem) > 1e-3

    def test_residual_rejects_infeasible_input(self):
        problem = CooperativeProblem(UserPlan((0, 0), (1, 0), 1.0, 3),
                                     UserPlan((0, 1), (1, 1), 1.0, 3))
        bad = (Trajectory(np.array([[0, 0], [5, 0], [1, 0]], dtype=float)),
               direct_path((0, 1), (1, 1), 3))
        with pytest.raises(InfeasibleInput):
            kkt_residual(bad, problem)

    @pytest.mark.slow
    def test_objective_monotone_in_delay(self):
        """More excess delay never hurts the joint objective."""
        objectives = [solve_cooperative(fig1_problem(d)).objective for d in (0, 1, 3, 5)]
        for a, b in zip(objectives, objectives[1:]):
            assert b <= a * (1.0 + 1e-6) + 1e-6


class TestBenchmark:
    """Hindsight benchmark with a pinned start."""

    @pytest.mark.parametrize("loss", [LossSpec.squared(), LossSpec.huber(0.2, 1.0)],
                             ids=["squared", "huber"])
    def test_matches_oracle(self, rng, loss):
        """20 random instances of 4 to 6 slots against a constrained quasi-Newton solve."""
        for _ in range(20):
            slots = int(rng.integers(4, 7))
            leads = rng.uniform(-3.0, 3.0, size=(slots, 2))
            report = solve_benchmark(BenchmarkProblem(loss, leads, (0.0, 0.0), 1.0))

            def objective(x, leads=leads):
                return float(np.sum(loss_value(loss, x, leads)))

            def gradient(x, leads=leads):
                return loss_grad(loss, x, leads)

            _, oracle = slsqp_oracle(objective, gradient, np.zeros((slots, 2)), 1.0,
                                     {0: (0.0, 0.0)}, slots)
            assert report.objective == pytest.approx(oracle, abs=1e-3)
            assert np.array_equal(report.trajectory.start, [0.0, 0.0])

    def test_reachable_leads_are_tracked_exactly(self):
        leads = direct_path((0, 0), (4, 0), 5).points
        report = solve_benchmark(BenchmarkProblem(LossSpec.squared(), leads, (0, 0), 1.0))
        assert report.objective == pytest.approx(0.0, abs=1e-9)

    def test_region_constrains_solution(self):
        leads = np.repeat([[5.0, 5.0]], 6, axis=0)
        region = Region.disk(0, 0, 2)
        report = solve_benchmark(BenchmarkProblem(LossSpec.squared(), leads, (0, 0), 1.0,
                                                  region=region))
        assert region.contains(report.trajectory.points, tol=1e-6)
        assert np.allclose(report.trajectory.end, [np.sqrt(2), np.sqrt(2)], atol=1e-4)

    def test_residual_of_solution_is_small(self, rng):
        problem = BenchmarkProblem(LossSpec.squared(), rng.uniform(-3, 3, size=(5, 2)), (0, 0), 1.0)
        report = solve_benchmark(problem)
        assert kkt_residual(report.trajectory, problem) <= 10 * SolverSettings().tolerance


class TestTracking:
    """Known-peer tracking between pinned endpoints."""

    def test_matches_oracle(self, rng):
        leads = rng.uniform(-2.0, 6.0, size=(7, 2))
        problem = TrackingProblem((0.0, 0.0), (4.0, 2.0), leads, 1.0)
        report = solve_tracking(problem)

        def objective(x):
            return float(np.sum((x - leads) ** 2))

        def gradient(x):
            return 2.0 * (x - leads)

        _, oracle = slsqp_oracle(objective, gradient, direct_path((0, 0), (4, 2), 7).points,
                                 1.0, {0: (0, 0), 6: (4, 2)}, 7)
        assert report.objective == pytest.approx(oracle, rel=1e-4, abs=1e-6)
        assert np.allclose(report.trajectory.end, [4.0, 2.0])

    def test_prefix_is_kept(self):
        leads = np.repeat([[2.0, 3.0]], 6, axis=0)
        prefix = np.array([[0.0, 0.0], [0.5, 0.0]])
        report = solve_tracking(TrackingProblem((0, 0), (3, 0), leads, 1.0, prefix=prefix))
        assert np.array_equal(report.trajectory.points[:2], prefix)
        assert check_velocity_feasible(report.trajectory, 1.0, tol=1e-6)

    def test_manhattan_norm(self):
        leads = np.repeat([[2.0, 2.0]], 6, axis=0)
        report = solve_tracking(TrackingProblem((0, 0), (3, 0), leads, 1.0, NormKind.MANHATTAN))
        assert check_velocity_feasible(report.trajectory, 1.0, NormKind.MANHATTAN, tol=1e-6)
        assert np.allclose(report.trajectory.end, [3.0, 0.0])

    def test_unreachable(self):
        with pytest.raises(UnreachableDestination):
            solve_tracking(TrackingProblem((0, 0), (10, 0), np.zeros((4, 2)), 1.0))

    def test_converged_implies_small_residual(self, rng):
        leads = rng.uniform(-2.0, 6.0, size=(7, 2))
        opts = SolverSettings(tolerance=1e-7)
        report = solve_tracking(TrackingProblem((0, 0), (4, 2), leads, 1.0), opts)
        assert report.converged
        assert report.kkt_residual <= opts.tolerance
