"""Scenario files: flat KEY=value text (dotenv syntax) with units in the key names.

Example::

    name = fig4
    start_x_m = 0
    start_y_m = 0
    destination_x_m = 150
    destination_y_m = 300
    speed_units_per_slot = 15
    excess_delay_slots = 1
    peer_kind = linear
    peer_start_x_m = 200
    peer_start_y_m = 0
    peer_velocity_x_m_per_slot = -0.5
    peer_velocity_y_m_per_slot = 1.0

See presets/ for complete files and README.md for every key.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from dotenv import dotenv_values

from exceptions import ScenarioError
from geometry import direct_path, travel_time
from models import (
    CooperativeProblem,
    LambdaSchedule,
    LossSpec,
    NormKind,
    OgdConfig,
    PeerGenerator,
    PeerKind,
    RateModel,
    Region,
    Scenario,
    ScheduleKind,
    UserPlan,
)
from online_ogd import auto_config
from peers import destination_stream, generate_peer
from settings import settings

logger = logging.getLogger(__name__)

KNOWN_KEYS = {
    'name', 'algorithm',
    'start_x_m', 'start_y_m', 'destination_x_m', 'destination_y_m', 'destination_events',
    'speed_units_per_slot', 'speed_m_per_s', 'slot_duration_s',
    'horizon_slots', 'excess_delay_slots', 'delay_sweep_slots', 'norm',
    'peer_kind', 'peer_start_x_m', 'peer_start_y_m',
    'peer_velocity_x_m_per_slot', 'peer_velocity_y_m_per_slot',
    'peer_waypoints_m', 'peer_speed_units_per_slot', 'peer_max_step_m', 'peer_seed',
    'peer_destination_x_m', 'peer_destination_y_m', 'peer_excess_delay_slots',
    'region', 'region_diameter_m',
    'bandwidth_hz', 'path_loss_exponent', 'noise_power', 'distance_scale',
    'calibrate_direct_rate_bps', 'calibrate_delay_rates_bps', 'min_distance_m',
    'loss_kind', 'huber_mu', 'ogd_gamma', 'lambda_schedule', 'lambda_values',
    'seed', 'output_dir',
}

REQUIRED_KEYS = ('start_x_m', 'start_y_m', 'destination_x_m', 'destination_y_m', 'peer_kind')

ALGORITHMS = ('offline', 'mpc', 'ogd', 'compare')


@dataclass(frozen=True)
class CooperativePeer:
    """Second user of a cooperative scenario; its direct path doubles as the peer stream"""
    start: Tuple[float, float]
    destination: Tuple[float, float]
    speed_v: float
    excess_delay: int


@dataclass
class ScenarioFile:
    name: str
    start: Tuple[float, float]
    destination: Tuple[float, float]
    speed_v: float
    horizon_T: int
    excess_delay: int
    rate_model: RateModel
    loss: LossSpec
    peer: Optional[PeerGenerator] = None
    cooperative_peer: Optional[CooperativePeer] = None
    destination_events: List[Tuple[int, Tuple[float, float]]] = field(default_factory=list)
    slot_duration_s: float = 1.0
    delay_sweep: Tuple[int, ...] = (0, 1, 3, 5)
    norm: NormKind = NormKind.EUCLIDEAN
    region: Optional[Region] = None
    region_diameter_R: Optional[float] = None
    calibrate_direct_rate_bps: Optional[float] = None
    calibrate_delay_rates_bps: Tuple[Tuple[int, float], ...] = ()  # (delay, offline rate) targets
    min_distance: float = settings.MIN_DISTANCE
    ogd_gamma: Optional[float] = None  # None derives gamma from min_gamma
    schedule_kind: ScheduleKind = ScheduleKind.LINEAR_DOWN
    lambda_values: Optional[Tuple[float, ...]] = None
    algorithm: str = 'compare'
    seed: int = 0
    output_dir: Path = settings.OUTPUT_DIR
    path: Optional[Path] = None
    raw: Dict[str, str] = field(default_factory=dict)

    @property
    def is_cooperative(self) -> bool:
        return self.cooperative_peer is not None

    def with_seed(self, seed: int) -> "ScenarioFile":
        peer = self.peer
        if peer is not None and 'peer_seed' not in self.raw:
            peer = replace(peer, seed=seed)
        raw = dict(self.raw, seed=str(seed))
        return replace(self, seed=seed, peer=peer, raw=raw)

    def delay(self, delta: Optional[int]) -> int:
        return self.excess_delay if delta is None else delta

    def peer_horizon(self, delta: Optional[int] = None) -> int:
        coop = self.cooperative_peer
        moves = travel_time(coop.start, coop.destination, coop.speed_v, self.norm)
        peer_delay = coop.excess_delay if delta is None else delta
        return moves + 1 + peer_delay

    def peer_stream(self, horizon: int, delta: Optional[int] = None) -> np.ndarray:
        if self.cooperative_peer is None:
            return generate_peer(self.peer, horizon)
        coop = self.cooperative_peer
        own = direct_path(coop.start, coop.destination, self.peer_horizon(delta)).points
        if own.shape[0] < horizon:
            own = np.vstack([own, np.repeat(own[-1:], horizon - own.shape[0], axis=0)])
        return own

    def build_scenario(self, delta: Optional[int] = None) -> Scenario:
        """Scenario for excess delay delta (the file's own delay when None)"""
        delta = self.delay(delta)
        horizon = self.horizon_T + delta
        return Scenario(
            start=np.asarray(self.start, dtype=float),
            destination_stream=destination_stream(self.destination, self.destination_events, horizon),
            speed_v=self.speed_v,
            horizon_T=self.horizon_T,
            excess_delay=delta,
            peer_stream=self.peer_stream(horizon, delta),
            norm=self.norm,
            region_diameter_R=self.region_diameter_R,
            region=self.region,
        )

    def build_cooperative(self, delta: Optional[int] = None) -> CooperativeProblem:
        if self.cooperative_peer is None:
            raise ScenarioError('peer_kind', "cooperative solve needs peer_kind = cooperative")
        coop = self.cooperative_peer
        return CooperativeProblem(
            user1=UserPlan(tuple(self.start), tuple(self.destination), self.speed_v,
                           self.horizon_T + self.delay(delta)),
            user2=UserPlan(tuple(coop.start), tuple(coop.destination), coop.speed_v,
                           self.peer_horizon(delta)),
            norm=self.norm,
            region=self.region,
        )

    def ogd_config(self, scenario: Scenario) -> OgdConfig:
        loss = self.loss
        if loss.knee_v is not None:
            loss = LossSpec.huber(loss.mu, scenario.speed_v)
        schedule = LambdaSchedule(self.schedule_kind, scenario.horizon, self.lambda_values)
        if self.ogd_gamma is None:
            return auto_config(loss, schedule, scenario.region_diameter_R, scenario.speed_v, self.region)
        return OgdConfig(self.ogd_gamma, loss.with_diameter(scenario.region_diameter_R),
                         schedule, self.region)


class _Fields:
    """Typed access to raw key/value pairs with diagnostics naming key and line"""

    def __init__(self, values: Dict[str, Optional[str]], lines: Dict[str, int]):
        self.values = values
        self.lines = lines

    def error(self, key: str, message: str) -> ScenarioError:
        return ScenarioError(key, message, self.lines.get(key))

    def has(self, key: str) -> bool:
        return self.values.get(key) not in (None, '')

    def text(self, key: str, default: Optional[str] = None) -> Optional[str]:
        if not self.has(key):
            return default
        return str(self.values[key]).strip()

    def number(self, key: str, default: Optional[float] = None, positive: bool = False,
               non_negative: bool = False) -> Optional[float]:
        raw = self.text(key)
        if raw is None:
            if default is None:
                return None
            value = float(default)
        else:
            try:
                value = float(raw)
            except ValueError:
                raise self.error(key, f"expected a number, got {raw!r}")
        if not math.isfinite(value):
            raise self.error(key, "must be finite")
        if positive and value <= 0:
            raise self.error(key, f"must be positive, got {value:g}")
        if non_negative and value < 0:
            raise self.error(key, f"must be non-negative, got {value:g}")
        return value

    def integer(self, key: str, default: Optional[int] = None, non_negative: bool = True) -> Optional[int]:
        value = self.number(key, default, non_negative=non_negative)
        if value is None:
            return None
        if value != int(value):
            raise self.error(key, f"expected an integer, got {value:g}")
        return int(value)

    def point(self, prefix: str, required: bool = True) -> Optional[Tuple[float, float]]:
        x_key, y_key = f'{prefix}_x_m', f'{prefix}_y_m'
        if not (self.has(x_key) or self.has(y_key)):
            if required:
                raise self.error(x_key, "missing required key")
            return None
        for key in (x_key, y_key):
            if not self.has(key):
                raise self.error(key, "missing required key")
        return (self.number(x_key), self.number(y_key))

    def numbers(self, key: str) -> List[float]:
        raw = self.text(key, '')
        try:
            return [float(part) for part in raw.replace(';', ',').split(',') if part.strip()]
        except ValueError:
            raise self.error(key, f"expected comma-separated numbers, got {raw!r}")

    def point_list(self, key: str) -> List[Tuple[float, float]]:
        points = []
        for chunk in self.text(key, '').split(';'):
            if not chunk.strip():
                continue
            parts = [p for p in chunk.split(',') if p.strip()]
            try:
                x, y = (float(p) for p in parts)
            except ValueError:
                raise self.error(key, f"expected 'x, y' pairs separated by ';', got {chunk!r}")
            points.append((x, y))
        return points

    def events(self, key: str) -> List[Tuple[int, Tuple[float, float]]]:
        events = []
        for chunk in self.text(key, '').split(';'):
            if not chunk.strip():
                continue
            slot_text, sep, rest = chunk.partition(':')
            try:
                slot = int(slot_text)
                x, y = (float(p) for p in rest.split(','))
            except ValueError:
                raise self.error(key, f"expected 'slot: x, y' events separated by ';', got {chunk!r}")
            if not sep or slot < 1:
                raise self.error(key, f"event slot must be a positive integer, got {chunk!r}")
            events.append((slot, (x, y)))
        return events

    def delay_rates(self, key: str) -> Tuple[Tuple[int, float], ...]:
        pairs = {}
        for chunk in self.text(key, '').split(';'):
            if not chunk.strip():
                continue
            delay_text, sep, rest = chunk.partition(':')
            try:
                delay, value = int(delay_text), float(rest)
            except ValueError:
                raise self.error(key, f"expected 'delay: rate' pairs separated by ';', got {chunk!r}")
            if not sep or delay < 0 or not value > 0:
                raise self.error(key, f"expected a non-negative delay and a positive rate, got {chunk!r}")
            pairs[delay] = value
        return tuple(sorted(pairs.items()))


def _scan_lines(path: Path) -> Dict[str, int]:
    """Map each key to its line number and reject lines that are not KEY=value"""
    lines: Dict[str, int] = {}
    with open(path, 'r', encoding='utf-8') as handle:
        for number, line in enumerate(handle, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith('#'):
                continue
            if stripped.startswith('export '):
                stripped = stripped[len('export '):]
            key, sep, _ = stripped.partition('=')
            if not sep or not key.strip():
                raise ScenarioError('syntax', f"expected KEY = value, got {stripped!r}", number)
            lines[key.strip()] = number
    return lines


def resolve_preset(name: str) -> Path:
    path = settings.PRESET_DIR / f"{name}.env"
    if not path.exists():
        available = sorted(p.stem for p in settings.PRESET_DIR.glob('*.env'))
        raise ScenarioError('preset', f"unknown preset {name!r}; available: {', '.join(available)}")
    return path


def parse_scenario(path: Union[str, Path]) -> ScenarioFile:
    """Read and validate a scenario file; raises ScenarioError naming the offending key"""
    path = Path(path)
    if not path.is_file():
        raise ScenarioError('scenario', f"cannot read {path}")
    lines = _scan_lines(path)
    values = dotenv_values(path, interpolate=False)
    return _build(values, lines, path)


def _build(values: Dict[str, Optional[str]], lines: Dict[str, int], path: Optional[Path]) -> ScenarioFile:
    f = _Fields(values, lines)
    unknown = sorted(set(values) - KNOWN_KEYS)
    if unknown:
        raise f.error(unknown[0], "unknown key")
    for key in REQUIRED_KEYS:
        if not f.has(key):
            raise f.error(key, "missing required key")

    start = f.point('start')
    destination = f.point('destination')
    try:
        norm = NormKind(f.text('norm', 'euclidean').lower())
    except ValueError:
        raise f.error('norm', "expected euclidean or manhattan")

    slot_duration = f.number('slot_duration_s', 1.0, positive=True)
    if f.has('speed_units_per_slot'):
        speed = f.number('speed_units_per_slot', positive=True)
    elif f.has('speed_m_per_s'):
        speed = f.number('speed_m_per_s', positive=True) * slot_duration
    else:
        raise f.error('speed_units_per_slot', "missing speed (speed_units_per_slot or speed_m_per_s)")

    moves = travel_time(start, destination, speed, norm)
    horizon_T = f.integer('horizon_slots', moves + 1)
    if horizon_T < 1:
        raise f.error('horizon_slots', "must be at least 1")
    if horizon_T < moves + 1:
        raise f.error('horizon_slots', f"destination needs {moves} moves, so at least {moves + 1} slots")
    excess_delay = f.integer('excess_delay_slots', 0)
    sweep = tuple(int(d) for d in f.numbers('delay_sweep_slots')) or (0, 1, 3, 5)
    if any(d < 0 for d in sweep):
        raise f.error('delay_sweep_slots', "delays must be non-negative")

    seed = f.integer('seed', 0)
    peer_seed = f.integer('peer_seed', seed)
    kind_text = f.text('peer_kind').lower()
    peer, coop = None, None
    if kind_text == 'cooperative':
        coop_speed = f.number('peer_speed_units_per_slot', speed, positive=True)
        coop = CooperativePeer(
            start=f.point('peer_start'),
            destination=f.point('peer_destination'),
            speed_v=coop_speed,
            excess_delay=f.integer('peer_excess_delay_slots', excess_delay),
        )
    else:
        try:
            kind = PeerKind(kind_text)
        except ValueError:
            raise f.error('peer_kind', f"unknown peer kind {kind_text!r}")
        velocity = (f.number('peer_velocity_x_m_per_slot', 0.0), f.number('peer_velocity_y_m_per_slot', 0.0))
        try:
            peer = PeerGenerator(
                kind=kind,
                start=f.point('peer_start'),
                velocity=velocity,
                waypoints=tuple(f.point_list('peer_waypoints_m')),
                speed=f.number('peer_speed_units_per_slot', 0.0, non_negative=True),
                max_step=f.number('peer_max_step_m', 0.0, non_negative=True),
                seed=peer_seed,
            )
        except ValueError as e:
            raise f.error('peer_kind', str(e))

    region = None
    if f.has('region'):
        shape, _, params = f.text('region').partition(':')
        try:
            numbers = [float(p) for p in params.split(',')]
            if shape.strip().lower() == 'box':
                region = Region.box(*numbers)
            elif shape.strip().lower() == 'disk':
                region = Region.disk(*numbers)
            else:
                raise ValueError(f"unknown region shape {shape!r}")
        except (TypeError, ValueError) as e:
            raise f.error('region', f"expected box:xmin,ymin,xmax,ymax or disk:cx,cy,r ({e})")

    rate_model = RateModel(
        bandwidth_W=f.number('bandwidth_hz', settings.DEFAULT_BANDWIDTH_HZ, positive=True),
        path_loss_alpha=f.number('path_loss_exponent', settings.DEFAULT_PATH_LOSS_EXPONENT, positive=True),
        noise_power_sigma2=f.number('noise_power', settings.DEFAULT_NOISE_POWER, positive=True),
        distance_scale=f.number('distance_scale', settings.DEFAULT_DISTANCE_SCALE, positive=True),
    )
    target = f.number('calibrate_direct_rate_bps', positive=True)
    if target is not None and target >= rate_model.bandwidth_W:
        raise f.error('calibrate_direct_rate_bps', "target must be below bandwidth_hz")
    delay_rates = f.delay_rates('calibrate_delay_rates_bps')
    if delay_rates and target is None:
        raise f.error('calibrate_delay_rates_bps', "needs calibrate_direct_rate_bps as well")
    if any(value >= rate_model.bandwidth_W for _, value in delay_rates):
        raise f.error('calibrate_delay_rates_bps', "targets must be below bandwidth_hz")

    loss_kind = f.text('loss_kind', 'huber').lower()
    if loss_kind == 'huber':
        mu = f.number('huber_mu', settings.DEFAULT_HUBER_MU, non_negative=True)
        if mu >= 1:
            raise f.error('huber_mu', "must lie in [0, 1)")
        loss = LossSpec.huber(mu, speed)
    elif loss_kind == 'squared':
        loss = LossSpec.squared()
    else:
        raise f.error('loss_kind', f"expected huber or squared, got {loss_kind!r}")

    gamma_text = f.text('ogd_gamma', 'auto').lower()
    gamma = None if gamma_text == 'auto' else f.number('ogd_gamma', positive=True)

    try:
        schedule_kind = ScheduleKind(f.text('lambda_schedule', 'linear_down').lower())
    except ValueError:
        raise f.error('lambda_schedule', "expected linear_down, linear_up or custom")
    lambda_values = tuple(f.numbers('lambda_values')) or None
    if schedule_kind == ScheduleKind.CUSTOM and lambda_values is None:
        raise f.error('lambda_values', "custom schedule needs lambda_values")
    if lambda_values and any(not 0.0 <= v <= 1.0 for v in lambda_values):
        raise f.error('lambda_values', "values must lie in [0, 1]")

    algorithm = f.text('algorithm', 'compare').lower()
    if algorithm not in ALGORITHMS:
        raise f.error('algorithm', f"expected one of {', '.join(ALGORITHMS)}")

    scenario_file = ScenarioFile(
        name=f.text('name', path.stem if path else 'scenario'),
        start=start,
        destination=destination,
        speed_v=speed,
        horizon_T=horizon_T,
        excess_delay=excess_delay,
        rate_model=rate_model,
        loss=loss,
        peer=peer,
        cooperative_peer=coop,
        destination_events=f.events('destination_events'),
        slot_duration_s=slot_duration,
        delay_sweep=sweep,
        norm=norm,
        region=region,
        region_diameter_R=f.number('region_diameter_m', positive=True),
        calibrate_direct_rate_bps=target,
        calibrate_delay_rates_bps=delay_rates,
        min_distance=f.number('min_distance_m', settings.MIN_DISTANCE, positive=True),
        ogd_gamma=gamma,
        schedule_kind=schedule_kind,
        lambda_values=lambda_values,
        algorithm=algorithm,
        seed=seed,
        output_dir=Path(f.text('output_dir', str(settings.OUTPUT_DIR))),
        path=path,
        raw={k: str(v) for k, v in values.items() if v is not None},
    )

    # streams, reachability and diameter are validated by building the scenario once
    try:
        scenario_file.build_scenario()
        if coop is not None:
            scenario_file.build_cooperative()
    except ScenarioError as e:
        key = {'streams': 'horizon_slots', 'region': 'region',
               'region_diameter_R': 'region_diameter_m'}.get(e.field, e.field)
        raise f.error(key, str(e).split(': ', 1)[-1])
    logger.debug("parsed scenario %s (T=%d, delta=%d)", scenario_file.name, horizon_T, excess_delay)
    return scenario_file
