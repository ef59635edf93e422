import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, List, Optional, Tuple

import numpy as np
import pandas as pd

from models import (
    BenchmarkProblem,
    LambdaSchedule,
    LossSpec,
    OgdConfig,
    PeerGenerator,
    PeerKind,
    RegretReport,
    Scenario,
    ScheduleKind,
    SolveReport,
    Trajectory,
)
from offline_solver import SolverSettings, solve_benchmark
from online_ogd import auto_config, lead_stream, loss_value, ogd_run
from peers import generate_peer
from settings import settings

logger = logging.getLogger(__name__)

# relative slack on bound comparisons
BOUND_RTOL = 1e-6


@dataclass
class SlotLosses:
    """The loss revealed at each slot: one LossSpec and the leading point l(t)"""
    spec: LossSpec
    leads: np.ndarray  # (T', 2)

    @property
    def horizon(self) -> int:
        return self.leads.shape[0]

    def values(self, traj: Trajectory) -> np.ndarray:
        if traj.slot_count != self.horizon:
            raise ValueError(f"trajectory has {traj.slot_count} slots, losses cover {self.horizon}")
        return np.asarray(loss_value(self.spec, traj.points, self.leads), dtype=float)


def squared_path_length(traj: Trajectory) -> float:
    """Sum of squared consecutive displacements"""
    steps = traj.steps()
    return float(np.sum(steps * steps))


def cumulative_loss(losses: SlotLosses, traj: Trajectory) -> float:
    return float(losses.values(traj).sum())


def offline_regret(losses: SlotLosses, online: Trajectory, benchmark: Trajectory) -> float:
    if online.slot_count != benchmark.slot_count:
        raise ValueError("online and benchmark trajectories differ in length")
    return cumulative_loss(losses, online) - cumulative_loss(losses, benchmark)


def dynamic_regret(losses: SlotLosses, online: Trajectory) -> float:
    """Regret against per-slot minimizers; both loss kinds attain 0 at the lead"""
    return cumulative_loss(losses, online)


def _contraction(mu: float, gamma: float) -> float:
    if mu <= 0 or gamma <= 0:
        raise ValueError("mu and gamma must be positive")
    if mu > gamma:
        raise ValueError(f"mu ({mu}) must not exceed gamma ({gamma})")
    return 1.0 - math.sqrt(1.0 - mu / gamma)


def theorem_bound(G: float, horizon: int, s_star: float, mu: float, gamma: float) -> float:
    """G * sqrt(T' * S* / (1 - sqrt(1 - mu/gamma)))"""
    return G * math.sqrt(horizon * s_star / _contraction(mu, gamma))


def gap_bound(s_star: float, mu: float, gamma: float) -> float:
    return s_star / _contraction(mu, gamma)


def approximate_gap_bound(s_star: float, mu: float, gamma: float) -> float:
    """Small mu/gamma expansion of gap_bound"""
    return math.sqrt(2.0 * gamma / mu) * s_star


def iterate_gap_check(online: Trajectory, benchmark: Trajectory, mu: float, gamma: float,
                      slack: float = 0.0) -> Tuple[float, float, bool]:
    if online.slot_count != benchmark.slot_count:
        raise ValueError("online and benchmark trajectories differ in length")
    if not np.allclose(online.start, benchmark.start, rtol=0.0, atol=1e-9):
        raise ValueError("online and benchmark trajectories must share their first point")
    diff = online.points - benchmark.points
    gap_sq = float(np.sum(diff * diff))
    bound = gap_bound(squared_path_length(benchmark), mu, gamma)
    return gap_sq, bound, gap_sq <= bound * (1.0 + BOUND_RTOL) + slack


def solver_slack(kkt: float, lipschitz_L: float, mu: float, speed_scale: float,
                 region_diameter: float, horizon: int) -> Tuple[float, float]:
    """Objective and iterate slack implied by a benchmark solved to residual kkt.

    The gradient mapping has norm L * kkt * speed_scale; the objective gap is at
    most that times the trajectory diameter, and the iterate error at most
    twice that over mu.
    """
    mapping = lipschitz_L * kkt * speed_scale
    value = mapping * region_diameter * math.sqrt(horizon) + 1e-9
    iterate = 2.0 * mapping / mu if mu > 0 else math.inf
    return value, iterate


class RegretAnalyzer:
    @staticmethod
    def build_report(losses: SlotLosses, online: Trajectory, benchmark: SolveReport,
                     cfg: OgdConfig, region_diameter: float, speed_v: float) -> RegretReport:
        """Regret, path lengths and both bounds for one online run against its benchmark"""
        bench = benchmark.trajectory
        loss = cfg.loss
        online_cum = cumulative_loss(losses, online)
        offline_cum = cumulative_loss(losses, bench)
        s_star = squared_path_length(bench)
        G = loss.gradient_bound(region_diameter)
        bound = theorem_bound(G, losses.horizon, s_star, loss.mu, cfg.gamma)
        value_slack, iterate_err = solver_slack(benchmark.kkt_residual, loss.lipschitz_L, loss.mu,
                                                max(1.0, speed_v), region_diameter, losses.horizon)
        diff = online.points - bench.points
        gap_sq = float(np.sum(diff * diff))
        gap_slack = 2.0 * math.sqrt(gap_sq) * iterate_err + iterate_err ** 2
        _, g_bound, gap_ok = iterate_gap_check(online, bench, loss.mu, cfg.gamma, gap_slack)
        regret = online_cum - offline_cum
        return RegretReport(
            online_cumloss=online_cum,
            offline_cumloss=offline_cum,
            offline_regret=regret,
            dynamic_regret=online_cum,
            s_star=s_star,
            o_path_length=squared_path_length(online),
            iterate_gap_sq=gap_sq,
            theorem_bound=bound,
            gap_bound=g_bound,
            approx_gap_bound=approximate_gap_bound(s_star, loss.mu, cfg.gamma),
            solver_slack=value_slack,
            regret_within_bound=regret <= bound * (1.0 + BOUND_RTOL) + value_slack,
            gap_within_bound=gap_ok,
        )

    @staticmethod
    def evaluate(scenario: Scenario, cfg: OgdConfig,
                 opts: Optional[SolverSettings] = None) -> Tuple[Trajectory, SolveReport, RegretReport]:
        """Run the online learner, solve its benchmark and compare the two"""
        online = ogd_run(scenario, cfg)
        leads = lead_stream(scenario, cfg.schedule)
        region = cfg.region or scenario.region
        problem = BenchmarkProblem(cfg.loss, leads, scenario.start, scenario.speed_v,
                                   scenario.norm, region)
        bench = solve_benchmark(problem, opts)
        report = RegretAnalyzer.build_report(SlotLosses(cfg.loss, leads), online, bench, cfg,
                                             scenario.region_diameter_R, scenario.speed_v)
        return online, bench, report


def sublinearity_probe(family: Callable[[int], Scenario], loss: LossSpec, horizons: Iterable[int],
                       schedule_kind: ScheduleKind = ScheduleKind.LINEAR_DOWN,
                       opts: Optional[SolverSettings] = None) -> pd.DataFrame:
    """Regret and regret per slot for a scenario family evaluated at growing horizons"""
    rows = []
    for horizon in horizons:
        scenario = family(horizon)
        schedule = LambdaSchedule(schedule_kind, scenario.horizon)
        cfg = auto_config(loss, schedule, scenario.region_diameter_R, scenario.speed_v, scenario.region)
        _, _, report = RegretAnalyzer.evaluate(scenario, cfg, opts)
        rows.append({
            'horizon': scenario.horizon,
            'regret': report.offline_regret,
            'regret_per_slot': report.offline_regret / scenario.horizon,
            's_star': report.s_star,
            'theorem_bound': report.theorem_bound,
        })
        logger.info("sublinearity T'=%d: regret %.6g", scenario.horizon, report.offline_regret)
    return pd.DataFrame(rows)


def bounded_variation_family(start=(0.0, 0.0), destination=(60.0, 0.0), peer_start=(30.0, 30.0),
                             peer_velocity=(1.0, 0.0), moving_slots: int = 10,
                             speed_v: float = 5.0) -> Callable[[int], Scenario]:
    """Scenarios whose peer moves for a fixed number of slots and then stays put"""
    def build(horizon: int) -> Scenario:
        gen = PeerGenerator(PeerKind.LINEAR, tuple(peer_start), velocity=tuple(peer_velocity))
        moving = generate_peer(gen, min(horizon, moving_slots))
        rest = np.repeat(moving[-1:], horizon - moving.shape[0], axis=0)
        return Scenario(
            start=np.asarray(start, dtype=float),
            destination_stream=np.repeat(np.asarray(destination, dtype=float)[None, :], horizon, axis=0),
            speed_v=speed_v,
            horizon_T=horizon,
            excess_delay=0,
            peer_stream=np.vstack([moving, rest]),
        )
    return build


def random_bound_scenario(rng: np.random.Generator) -> Tuple[Scenario, LossSpec]:
    """Small seeded instance with a slow random-walk peer"""
    horizon = int(rng.integers(4, 11))
    v = float(rng.uniform(0.5, 2.0))
    start = rng.uniform(-5.0, 5.0, size=2)
    dest = start + rng.uniform(-0.8, 0.8, size=2) * v * (horizon - 1)
    gen = PeerGenerator(PeerKind.RANDOM_WALK, tuple(rng.uniform(-5.0, 5.0, size=2)),
                        max_step=0.5 * v, seed=int(rng.integers(0, 2**31 - 1)))
    scenario = Scenario(
        start=start,
        destination_stream=np.repeat(dest[None, :], horizon, axis=0),
        speed_v=v,
        horizon_T=horizon,
        excess_delay=0,
        peer_stream=generate_peer(gen, horizon),
    )
    if rng.random() < 0.25:
        loss = LossSpec.squared()
    else:
        loss = LossSpec.huber(float(10 ** rng.uniform(-3, math.log10(0.5))), v)
    return scenario, loss


def _bound_trial(args: Tuple[int, np.random.SeedSequence, Optional[SolverSettings]]) -> dict:
    index, seed_seq, opts = args
    rng = np.random.default_rng(seed_seq)
    scenario, loss = random_bound_scenario(rng)
    schedule = LambdaSchedule(ScheduleKind.LINEAR_DOWN, scenario.horizon)
    cfg = auto_config(loss, schedule, scenario.region_diameter_R, scenario.speed_v)
    _, bench, report = RegretAnalyzer.evaluate(scenario, cfg, opts)
    return {
        'trial': index,
        'horizon': scenario.horizon,
        'loss': loss.kind.value,
        'mu': loss.mu,
        'gamma': cfg.gamma,
        'offline_regret': report.offline_regret,
        'theorem_bound': report.theorem_bound,
        'iterate_gap_sq': report.iterate_gap_sq,
        'gap_bound': report.gap_bound,
        'kkt_residual': bench.kkt_residual,
        'regret_ok': report.regret_within_bound,
        'gap_ok': report.gap_within_bound,
    }


def monte_carlo_bounds(trials: int = settings.DEFAULT_BOUND_TRIALS, seed: int = 0,
                       opts: Optional[SolverSettings] = None,
                       max_workers: int = settings.MAX_WORKERS) -> pd.DataFrame:
    """One row per seeded random scenario with both bound checks"""
    children = np.random.SeedSequence(seed).spawn(trials)
    jobs = [(i, child, opts) for i, child in enumerate(children)]
    if max_workers > 1:
        with ProcessPoolExecutor(max_workers=max_workers) as pool:
            rows: List[dict] = list(pool.map(_bound_trial, jobs))
    else:
        rows = [_bound_trial(job) for job in jobs]
    table = pd.DataFrame(rows)
    failures = int((~(table['regret_ok'] & table['gap_ok'])).sum())
    if failures:
        logger.warning("%d of %d trials violated a bound", failures, trials)
    return table
