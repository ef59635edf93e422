import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from exceptions import Infeasible, ScenarioError
from geometry import check_velocity_feasible, direct_path, distance_to_destination
from models import (
    AlgorithmRun,
    BenchmarkProblem,
    OgdConfig,
    RateModel,
    RunReport,
    Scenario,
    SolveReport,
    TrackingProblem,
    Trajectory,
)
from mpc import mpc_run
from offline_solver import SolverSettings, solve_benchmark, solve_cooperative, solve_tracking
from online_ogd import lambda_at, lead_stream, loss_value, ogd_run, verify_assumptions
from rate_model import calibrate_distance_scale, fit_path_loss_exponent, rate
from regret import RegretAnalyzer, SlotLosses, monte_carlo_bounds
from scenario_io import ScenarioFile
from settings import settings

logger = logging.getLogger(__name__)

RECORD_COLUMNS = ['t', 'x1_x', 'x1_y', 'x2_x', 'x2_y', 'd_x', 'd_y',
                  'lambda', 'dist', 'loss', 'rate_bps']

COMMANDS = ('offline', 'mpc', 'ogd', 'compare', 'sweep-delta', 'verify-bounds')


class TrajectorySimulator:
    """Runs the planners on one scenario file and assembles RunReports"""

    def __init__(self, scenario_file: ScenarioFile, opts: Optional[SolverSettings] = None,
                 rate_model: Optional[RateModel] = None):
        self.file = scenario_file
        self.opts = opts or SolverSettings()
        self._offline: Dict[int, Tuple[SolveReport, np.ndarray]] = {}
        self.rate_model = rate_model or self._resolve_rate_model()

    def _resolve_rate_model(self) -> RateModel:
        target = self.file.calibrate_direct_rate_bps
        if target is None:
            return self.file.rate_model
        traj1, traj2 = self._direct_pair(0)
        if self.file.calibrate_delay_rates_bps:
            delays = [d for d, _ in self.file.calibrate_delay_rates_bps]
            pairs = []
            for d in delays:
                report, peer = self._offline_solve(d)
                pairs.append((report.trajectory, Trajectory(peer)))
            return fit_path_loss_exponent(
                (traj1, traj2), pairs, [r for _, r in self.file.calibrate_delay_rates_bps],
                self.file.rate_model, target, self.file.min_distance)
        scale = calibrate_distance_scale(traj1, traj2, self.file.rate_model, target,
                                         self.file.min_distance)
        logger.info("calibrated distance scale %.12g for a %.4g bps direct path", scale, target)
        return self.file.rate_model.with_scale(scale)

    def _direct_pair(self, delta: Optional[int]) -> Tuple[Trajectory, Trajectory]:
        """Both users (or user and exogenous peer) on their direct paths"""
        scenario = self.file.build_scenario(delta)
        own = direct_path(scenario.start, scenario.final_destination, scenario.horizon)
        return own, Trajectory(scenario.peer_stream[:scenario.horizon])

    # ---- per-slot records -------------------------------------------------

    def _records(self, traj: Trajectory, peer: np.ndarray, scenario: Scenario,
                 cfg: OgdConfig) -> pd.DataFrame:
        n = traj.slot_count
        if peer.shape[0] < n:
            peer = np.vstack([peer, np.repeat(peer[-1:], n - peer.shape[0], axis=0)])
        peer = peer[:n]
        dest = scenario.destination_stream[:n]
        lambdas = np.array([lambda_at(cfg.schedule, t) for t in range(1, n + 1)])
        leads = lambdas[:, None] * peer + (1.0 - lambdas[:, None]) * dest
        sep = np.hypot(*(traj.points - peer).T)
        rates = rate(np.maximum(sep, self.file.min_distance), self.rate_model)
        frame = traj.to_frame('x1').assign(**{
            'x2_x': peer[:, 0],
            'x2_y': peer[:, 1],
            'd_x': dest[:, 0],
            'd_y': dest[:, 1],
            'lambda': lambdas,
            'dist': sep,
            'loss': np.asarray(loss_value(cfg.loss, traj.points, leads), dtype=float),
            'rate_bps': np.asarray(rates, dtype=float),
        })
        return frame[RECORD_COLUMNS]

    def _algorithm_run(self, name: str, traj: Trajectory, peer: np.ndarray,
                       scenario: Scenario, extra: Optional[Dict] = None) -> AlgorithmRun:
        cfg = self.file.ogd_config(scenario)
        records = self._records(traj, peer, scenario, cfg)
        tol = settings.FEASIBILITY_TOL * scenario.speed_v
        feasible = check_velocity_feasible(traj, scenario.speed_v, scenario.norm, tol)
        if not feasible:
            logger.error("%s trajectory violates the velocity bound", name)
        summary = {
            'slots': int(traj.slot_count),
            'excess_delay': int(scenario.excess_delay),
            'average_rate_bps': float(records['rate_bps'].mean()),
            'downloaded_bits': float(records['rate_bps'].sum() * self.file.slot_duration_s),
            'terminal_distance': distance_to_destination(traj, scenario.final_destination, scenario.norm),
            'cumulative_loss': float(records['loss'].sum()),
            'velocity_feasible': bool(feasible),
        }
        summary.update(extra or {})
        return AlgorithmRun(name, records, summary)

    # ---- single algorithms ------------------------------------------------

    def run_direct(self, delta: Optional[int] = None) -> AlgorithmRun:
        scenario = self.file.build_scenario(delta)
        own, peer = self._direct_pair(delta)
        return self._algorithm_run('direct', own, peer.points, scenario)

    def _offline_solve(self, delta: Optional[int]) -> Tuple[SolveReport, np.ndarray]:
        """Offline solve and the peer it is scored against, cached per delay"""
        key = self.file.delay(delta)
        if key in self._offline:
            return self._offline[key]
        scenario = self.file.build_scenario(key)
        if self.file.is_cooperative:
            report = solve_cooperative(self.file.build_cooperative(key), self.opts)
            peer = report.trajectories[1].points
        else:
            problem = TrackingProblem(
                start=scenario.start,
                destination=scenario.final_destination,
                leads=scenario.peer_stream[:scenario.horizon],
                speed_v=scenario.speed_v,
                norm=scenario.norm,
                region=scenario.region,
            )
            report = solve_tracking(problem, self.opts)
            peer = scenario.peer_stream
        self._offline[key] = (report, peer)
        return report, peer

    def run_offline(self, delta: Optional[int] = None) -> AlgorithmRun:
        scenario = self.file.build_scenario(delta)
        report, peer = self._offline_solve(delta)
        return self._algorithm_run('offline', report.trajectory, peer, scenario, report.to_dict())

    def run_mpc(self, delta: Optional[int] = None) -> AlgorithmRun:
        scenario = self.file.build_scenario(delta)
        traj, reports = mpc_run(scenario, self.opts)
        extra = {
            'solves': len(reports),
            'max_kkt_residual': float(max((r.kkt_residual for r in reports), default=0.0)),
        }
        return self._algorithm_run('mpc', traj, scenario.peer_stream, scenario, extra)

    def run_ogd(self, delta: Optional[int] = None) -> AlgorithmRun:
        scenario = self.file.build_scenario(delta)
        cfg = self.file.ogd_config(scenario)
        assumptions = verify_assumptions(cfg, scenario.region_diameter_R, scenario.speed_v)
        traj = ogd_run(scenario, cfg)
        extra = {
            'gamma': cfg.gamma,
            'schedule': cfg.schedule.kind.value,
            'assumptions': assumptions.to_dict(),
        }
        return self._algorithm_run('ogd', traj, scenario.peer_stream, scenario, extra)

    # ---- commands ---------------------------------------------------------

    def _report(self, command: str) -> RunReport:
        return RunReport(
            command=command,
            scenario_name=self.file.name,
            seed=self.file.seed,
            app_version=settings.APP_VERSION,
            config=dict(self.file.raw),
            rate_model=self.rate_model,
        )

    def run(self, command: str, delays: Optional[Sequence[int]] = None,
            trials: Optional[int] = None) -> RunReport:
        if command not in COMMANDS:
            raise ScenarioError('command', f"unknown command {command!r}")
        if command == 'sweep-delta':
            return self.sweep_delta(delays)
        if command == 'verify-bounds':
            return self.verify_bounds(trials)
        report = self._report(command)
        if command == 'offline':
            report.runs.append(self.run_offline())
        elif command == 'mpc':
            report.runs.append(self.run_mpc())
        elif command == 'ogd':
            report.runs.append(self.run_ogd())
        else:
            self._compare_into(report)
        return report

    def _compare_into(self, report: RunReport, delta: Optional[int] = None):
        report.runs.append(self.run_direct(delta))
        report.runs.append(self.run_offline(delta))
        report.runs.append(self.run_mpc(delta))
        report.runs.append(self.run_ogd(delta))

        scenario = self.file.build_scenario(delta)
        cfg = self.file.ogd_config(scenario)
        online = Trajectory(report.run('ogd').records[['x1_x', 'x1_y']].to_numpy())
        leads = lead_stream(scenario, cfg.schedule)
        bench = solve_benchmark(BenchmarkProblem(cfg.loss, leads, scenario.start, scenario.speed_v,
                                                 scenario.norm, cfg.region or scenario.region), self.opts)
        report.regret = RegretAnalyzer.build_report(SlotLosses(cfg.loss, leads), online, bench, cfg,
                                                    scenario.region_diameter_R, scenario.speed_v)
        report.runs.append(self._algorithm_run('benchmark', bench.trajectory, scenario.peer_stream,
                                               scenario, bench.to_dict()))

    def sweep_delta(self, delays: Optional[Sequence[int]] = None) -> RunReport:
        """Every algorithm at every excess delay; one summary row per delay"""
        delays = tuple(delays) if delays else self.file.delay_sweep
        report = self._report('sweep-delta')
        jobs = [(self.file, self.opts, self.rate_model, d) for d in delays]
        if settings.MAX_WORKERS > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=settings.MAX_WORKERS) as pool:
                results = list(pool.map(_sweep_point, jobs))
        else:
            results = [_sweep_point(job) for job in jobs]

        rows = []
        for delta, (runs, notes) in zip(delays, results):
            row = {'delta': delta}
            for run in runs:
                for key in ('average_rate_bps', 'downloaded_bits', 'terminal_distance'):
                    row[f'{run.name}_{key}'] = run.summary[key]
                run.name = f'{run.name}_delta{delta}'
                report.runs.append(run)
            rows.append(row)
            report.notes.extend(notes)
        report.sweep = pd.DataFrame(rows)
        return report

    def verify_bounds(self, trials: Optional[int] = None) -> RunReport:
        report = self._report('verify-bounds')
        return _fill_bounds(report, self.file.seed, trials, self.opts)


def bounds_report(seed: int = 0, trials: Optional[int] = None,
                  opts: Optional[SolverSettings] = None) -> RunReport:
    """The Monte Carlo bound suite on its own, without a scenario file"""
    report = RunReport(
        command='verify-bounds',
        scenario_name='random',
        seed=seed,
        app_version=settings.APP_VERSION,
        config={'seed': str(seed)},
        rate_model=RateModel(),
    )
    return _fill_bounds(report, seed, trials, opts)


def _fill_bounds(report: RunReport, seed: int, trials: Optional[int],
                 opts: Optional[SolverSettings]) -> RunReport:
    trials = trials or settings.DEFAULT_BOUND_TRIALS
    report.bounds = monte_carlo_bounds(trials, seed, opts)
    report.notes.append(f"{trials - report.bounds_failed} of {trials} trials within both bounds")
    return report


def _sweep_point(args) -> Tuple[List[AlgorithmRun], List[str]]:
    scenario_file, opts, rate_model, delta = args
    sim = TrajectorySimulator(scenario_file, opts, rate_model)
    runs = [sim.run_direct(delta), sim.run_offline(delta)]
    notes = []
    if not scenario_file.is_cooperative:
        try:
            runs.append(sim.run_mpc(delta))
        except Infeasible as e:
            notes.append(f"delta={delta}: mpc infeasible at slot {e.slot}")
        runs.append(sim.run_ogd(delta))
    return runs, notes
