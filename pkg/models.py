from dataclasses import dataclass, field, asdict
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple
import math

import numpy as np
import pandas as pd

from exceptions import ScenarioError
from settings import settings


class NormKind(str, Enum):
    EUCLIDEAN = "euclidean"
    MANHATTAN = "manhattan"


def as_point(value: Any, name: str = "point") -> np.ndarray:
    """Coerce an (x, y) pair into a finite float array of shape (2,)"""
    arr = np.asarray(value, dtype=float).reshape(-1)
    if arr.shape != (2,):
        raise ValueError(f"{name} must have exactly two coordinates, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


def as_points(value: Any, name: str = "points", min_rows: int = 1) -> np.ndarray:
    """Coerce into a finite float array of shape (n, 2) with n >= min_rows"""
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 1 and arr.size == 2:
        arr = arr.reshape(1, 2)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"{name} must be an (n, 2) array, got shape {arr.shape}")
    if arr.shape[0] < min_rows:
        raise ValueError(f"{name} needs at least {min_rows} rows, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


@dataclass
class Trajectory:
    points: np.ndarray  # (n, 2), row t-1 holds slot t

    def __post_init__(self):
        self.points = as_points(self.points, "trajectory").copy()

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def slot_count(self) -> int:
        return self.points.shape[0]

    def point(self, t: int) -> np.ndarray:
        """Position at 1-based slot t"""
        if not 1 <= t <= self.slot_count:
            raise IndexError(f"slot {t} outside 1..{self.slot_count}")
        return self.points[t - 1]

    @property
    def start(self) -> np.ndarray:
        return self.points[0]

    @property
    def end(self) -> np.ndarray:
        return self.points[-1]

    def steps(self) -> np.ndarray:
        return np.diff(self.points, axis=0)

    def to_frame(self, prefix: str = "x") -> pd.DataFrame:
        return pd.DataFrame({
            't': np.arange(1, self.slot_count + 1),
            f'{prefix}_x': self.points[:, 0],
            f'{prefix}_y': self.points[:, 1],
        })

    def to_dict(self) -> dict:
        return {'points': self.points.tolist()}

    @classmethod
    def from_dict(cls, data: dict):
        return cls(points=np.asarray(data['points'], dtype=float))


@dataclass(frozen=True)
class RateModel:
    bandwidth_W: float = settings.DEFAULT_BANDWIDTH_HZ
    path_loss_alpha: float = settings.DEFAULT_PATH_LOSS_EXPONENT
    noise_power_sigma2: float = settings.DEFAULT_NOISE_POWER
    distance_scale: float = settings.DEFAULT_DISTANCE_SCALE

    def __post_init__(self):
        for name in ('bandwidth_W', 'path_loss_alpha', 'noise_power_sigma2', 'distance_scale'):
            value = getattr(self, name)
            if not math.isfinite(value) or value <= 0:
                raise ValueError(f"{name} must be positive and finite, got {value}")

    def with_scale(self, distance_scale: float) -> "RateModel":
        return RateModel(self.bandwidth_W, self.path_loss_alpha,
                         self.noise_power_sigma2, distance_scale)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict):
        return cls(**{k: float(data[k]) for k in (
            'bandwidth_W', 'path_loss_alpha', 'noise_power_sigma2', 'distance_scale')})


class RegionKind(str, Enum):
    BOX = "box"
    DISK = "disk"


@dataclass(frozen=True)
class Region:
    """Convex operating area: an axis-aligned box or a disk"""
    kind: RegionKind
    params: Tuple[float, ...]  # box: xmin, ymin, xmax, ymax; disk: cx, cy, r

    def __post_init__(self):
        if self.kind == RegionKind.BOX:
            if len(self.params) != 4:
                raise ValueError("box region needs xmin, ymin, xmax, ymax")
            xmin, ymin, xmax, ymax = self.params
            if not (xmin <= xmax and ymin <= ymax):
                raise ValueError("box region bounds are inverted")
        else:
            if len(self.params) != 3 or self.params[2] <= 0:
                raise ValueError("disk region needs cx, cy and a positive radius")

    @classmethod
    def box(cls, xmin: float, ymin: float, xmax: float, ymax: float) -> "Region":
        return cls(RegionKind.BOX, (float(xmin), float(ymin), float(xmax), float(ymax)))

    @classmethod
    def disk(cls, cx: float, cy: float, radius: float) -> "Region":
        return cls(RegionKind.DISK, (float(cx), float(cy), float(radius)))

    @property
    def diameter(self) -> float:
        if self.kind == RegionKind.BOX:
            xmin, ymin, xmax, ymax = self.params
            return float(math.hypot(xmax - xmin, ymax - ymin))
        return 2.0 * self.params[2]

    def contains(self, points: Any, tol: float = 1e-9) -> bool:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.kind == RegionKind.BOX:
            xmin, ymin, xmax, ymax = self.params
            return bool(np.all((pts[:, 0] >= xmin - tol) & (pts[:, 0] <= xmax + tol)
                               & (pts[:, 1] >= ymin - tol) & (pts[:, 1] <= ymax + tol)))
        cx, cy, r = self.params
        return bool(np.all(np.hypot(pts[:, 0] - cx, pts[:, 1] - cy) <= r + tol))

    def farthest_distance(self, points: Any) -> float:
        """Largest Euclidean distance from any of the points to any point of the region"""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.kind == RegionKind.BOX:
            xmin, ymin, xmax, ymax = self.params
            corners = np.array([[xmin, ymin], [xmin, ymax], [xmax, ymin], [xmax, ymax]])
            diff = pts[:, None, :] - corners[None, :, :]
            return float(np.hypot(diff[..., 0], diff[..., 1]).max())
        cx, cy, r = self.params
        return float(np.hypot(pts[:, 0] - cx, pts[:, 1] - cy).max() + r)

    def describe(self) -> str:
        return f"{self.kind.value}:" + ",".join(f"{p:g}" for p in self.params)


@dataclass
class Scenario:
    start: np.ndarray
    destination_stream: np.ndarray  # (>= T', 2), row t-1 is d(t)
    speed_v: float
    horizon_T: int  # direct-path slot count (positions)
    excess_delay: int
    peer_stream: np.ndarray  # (>= T', 2), row t-1 is x2(t)
    norm: NormKind = NormKind.EUCLIDEAN
    region_diameter_R: Optional[float] = None
    region: Optional[Region] = None

    def __post_init__(self):
        if not math.isfinite(self.speed_v) or self.speed_v <= 0:
            raise ScenarioError('speed_v', f"speed must be positive, got {self.speed_v}")
        if self.horizon_T < 1:
            raise ScenarioError('horizon_T', "horizon must be at least one slot")
        if self.excess_delay < 0:
            raise ScenarioError('excess_delay', "excess delay must be non-negative")
        self.norm = NormKind(self.norm)
        self.start = as_point(self.start, 'start')
        try:
            self.destination_stream = as_points(self.destination_stream, 'destination_stream', self.horizon)
            self.peer_stream = as_points(self.peer_stream, 'peer_stream', self.horizon)
        except ValueError as e:
            raise ScenarioError('streams', str(e))
        if self.region is not None and not self.region.contains(self.start):
            raise ScenarioError('region', "start lies outside the operating region")
        required = self.minimum_diameter()
        if self.region_diameter_R is None:
            self.region_diameter_R = required
        elif self.region_diameter_R < required * (1.0 - 1e-12):
            raise ScenarioError(
                'region_diameter_R',
                f"diameter {self.region_diameter_R:g} is below the stream spread {required:g}")

    def minimum_diameter(self) -> float:
        """Smallest admissible R: spread of start and streams, widened by the region"""
        from geometry import region_diameter
        cloud = np.vstack([self.start[None, :],
                           self.destination_stream[:self.horizon],
                           self.peer_stream[:self.horizon]])
        spread = region_diameter(cloud)
        if self.region is not None:
            spread = max(spread, self.region.diameter, self.region.farthest_distance(cloud))
        return max(spread, self.speed_v)

    @property
    def horizon(self) -> int:
        """T' = T + delta"""
        return self.horizon_T + self.excess_delay

    def destination_at(self, t: int) -> np.ndarray:
        return self.destination_stream[t - 1]

    def peer_at(self, t: int) -> np.ndarray:
        return self.peer_stream[t - 1]

    @property
    def final_destination(self) -> np.ndarray:
        return self.destination_stream[self.horizon - 1]


@dataclass(frozen=True)
class UserPlan:
    """One cooperating user: endpoints, speed and slot count T'_i"""
    start: Tuple[float, float]
    destination: Tuple[float, float]
    speed_v: float
    slots: int

    def __post_init__(self):
        if self.speed_v <= 0:
            raise ValueError(f"speed must be positive, got {self.speed_v}")
        if self.slots < 1:
            raise ValueError("a user needs at least one slot")


@dataclass(frozen=True)
class CooperativeProblem:
    user1: UserPlan
    user2: UserPlan
    norm: NormKind = NormKind.EUCLIDEAN
    region: Optional[Region] = None

    @property
    def common_slots(self) -> int:
        return min(self.user1.slots, self.user2.slots)


class LossKind(str, Enum):
    SQUARED = "squared"
    HUBER = "huber"


@dataclass(frozen=True)
class LossSpec:
    kind: LossKind
    mu: float  # strong-convexity modulus
    lipschitz_L: float  # gradient Lipschitz constant
    knee_v: Optional[float] = None  # Huber knee, equals the per-slot speed
    grad_bound_G: Optional[float] = None  # filled once R is known

    def __post_init__(self):
        if self.kind == LossKind.HUBER:
            if not 0 <= self.mu < 1:
                raise ValueError(f"Huber mu must lie in [0, 1), got {self.mu}")
            if self.knee_v is None or self.knee_v <= 0:
                raise ValueError("Huber loss needs a positive knee v")

    @classmethod
    def squared(cls) -> "LossSpec":
        return cls(LossKind.SQUARED, mu=2.0, lipschitz_L=2.0)

    @classmethod
    def huber(cls, mu: float, v: float) -> "LossSpec":
        return cls(LossKind.HUBER, mu=float(mu), lipschitz_L=1.0, knee_v=float(v))

    def gradient_bound(self, region_diameter: float) -> float:
        """Bound G on the gradient norm when ||x - lead|| <= R"""
        if self.kind == LossKind.SQUARED:
            return 2.0 * region_diameter
        return self.mu * region_diameter + self.knee_v * (1.0 - self.mu)

    def with_diameter(self, region_diameter: float) -> "LossSpec":
        return LossSpec(self.kind, self.mu, self.lipschitz_L, self.knee_v,
                        self.gradient_bound(region_diameter))

    def to_dict(self) -> dict:
        return {
            'kind': self.kind.value,
            'mu': self.mu,
            'lipschitz_L': self.lipschitz_L,
            'knee_v': self.knee_v,
            'grad_bound_G': self.grad_bound_G,
        }


class ScheduleKind(str, Enum):
    LINEAR_DOWN = "linear_down"
    LINEAR_UP = "linear_up"
    CUSTOM = "custom"


@dataclass(frozen=True)
class LambdaSchedule:
    kind: ScheduleKind
    horizon: int  # T'
    values: Optional[Tuple[float, ...]] = None  # CUSTOM only, values[t-1] = lambda(t)

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("schedule horizon must be positive")
        if self.kind == ScheduleKind.CUSTOM:
            if self.values is None or len(self.values) < self.horizon:
                raise ValueError("custom schedule needs one value per slot")
            if any(not 0.0 <= v <= 1.0 for v in self.values):
                raise ValueError("custom schedule values must lie in [0, 1]")


@dataclass(frozen=True)
class OgdConfig:
    gamma: float
    loss: LossSpec
    schedule: LambdaSchedule
    region: Optional[Region] = None

    def __post_init__(self):
        if not math.isfinite(self.gamma) or self.gamma <= 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")

    def to_dict(self) -> dict:
        return {
            'gamma': self.gamma,
            'loss': self.loss.to_dict(),
            'schedule': self.schedule.kind.value,
            'region': self.region.describe() if self.region else None,
        }


@dataclass
class BenchmarkProblem:
    """min sum_t f_t(x(t)) with x(1) pinned and bounded steps"""
    loss: LossSpec
    leads: np.ndarray  # (T', 2), row t-1 is l(t)
    start: np.ndarray
    speed_v: float
    norm: NormKind = NormKind.EUCLIDEAN
    region: Optional[Region] = None

    def __post_init__(self):
        self.leads = as_points(self.leads, 'leads')
        self.start = as_point(self.start, 'start')
        if self.speed_v <= 0:
            raise ValueError("speed must be positive")
        self.norm = NormKind(self.norm)

    @property
    def horizon(self) -> int:
        return self.leads.shape[0]


@dataclass
class TrackingProblem:
    """Squared tracking of known lead points with start, destination and extra pins"""
    start: np.ndarray
    destination: np.ndarray
    leads: np.ndarray  # (T', 2)
    speed_v: float
    norm: NormKind = NormKind.EUCLIDEAN
    region: Optional[Region] = None
    prefix: Optional[np.ndarray] = None  # committed slots 1..k, overrides start

    def __post_init__(self):
        self.start = as_point(self.start, 'start')
        self.destination = as_point(self.destination, 'destination')
        self.leads = as_points(self.leads, 'leads', 2)
        if self.speed_v <= 0:
            raise ValueError("speed must be positive")
        self.norm = NormKind(self.norm)
        if self.prefix is not None:
            self.prefix = as_points(self.prefix, 'prefix')
            if self.prefix.shape[0] >= self.horizon:
                raise ValueError("prefix must leave at least one free slot")

    @property
    def horizon(self) -> int:
        return self.leads.shape[0]

    @property
    def pinned_prefix(self) -> np.ndarray:
        return self.prefix if self.prefix is not None else self.start[None, :]


@dataclass
class SolveReport:
    trajectories: Tuple[Trajectory, ...]
    objective: float
    iterations: int
    kkt_residual: float
    converged: bool

    @property
    def trajectory(self) -> Trajectory:
        return self.trajectories[0]

    def to_dict(self) -> dict:
        return {
            'objective': self.objective,
            'iterations': self.iterations,
            'kkt_residual': self.kkt_residual,
            'converged': self.converged,
        }


@dataclass
class MpcState:
    committed_prefix: Trajectory
    current_slot: int
    horizon: int
    previous_plan: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.committed_prefix.slot_count != self.current_slot:
            raise ValueError("committed prefix length must equal the current slot")
        if not 1 <= self.current_slot < self.horizon:
            raise ValueError(f"current slot {self.current_slot} outside 1..{self.horizon - 1}")


@dataclass
class AssumptionReport:
    a1_strong_convexity: bool
    a2_lipschitz_gradient: bool
    a3_bounded_variation: bool
    gamma_at_least_L: bool
    mu: float
    lipschitz_L: float
    grad_bound_G: float
    gamma: float
    required_gamma: float
    speed_v: float
    region_diameter_R: float

    @property
    def all_hold(self) -> bool:
        return not self.failed()

    def failed(self) -> List[str]:
        names = {
            'A1': self.a1_strong_convexity,
            'A2': self.a2_lipschitz_gradient,
            'A3': self.a3_bounded_variation,
            'gamma>=L': self.gamma_at_least_L,
        }
        return [name for name, ok in names.items() if not ok]

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RegretReport:
    online_cumloss: float
    offline_cumloss: float
    offline_regret: float
    dynamic_regret: float
    s_star: float
    o_path_length: float
    iterate_gap_sq: float
    theorem_bound: float
    gap_bound: float
    approx_gap_bound: float
    solver_slack: float
    regret_within_bound: bool
    gap_within_bound: bool

    @property
    def bound_satisfied(self) -> bool:
        return self.regret_within_bound and self.gap_within_bound

    def to_dict(self) -> dict:
        data = asdict(self)
        data['bound_satisfied'] = self.bound_satisfied
        return data


class PeerKind(str, Enum):
    STATIC = "static"
    LINEAR = "linear"
    WAYPOINTS = "waypoints"
    RANDOM_WALK = "random_walk"


@dataclass(frozen=True)
class PeerGenerator:
    kind: PeerKind
    start: Tuple[float, float]
    velocity: Tuple[float, float] = (0.0, 0.0)  # LINEAR, per slot
    waypoints: Tuple[Tuple[float, float], ...] = ()  # WAYPOINTS
    speed: float = 0.0  # WAYPOINTS, per slot
    max_step: float = 0.0  # RANDOM_WALK
    seed: int = 0

    def __post_init__(self):
        if self.kind == PeerKind.WAYPOINTS and (not self.waypoints or self.speed <= 0):
            raise ValueError("waypoint peer needs waypoints and a positive speed")
        if self.kind == PeerKind.RANDOM_WALK and self.max_step <= 0:
            raise ValueError("random-walk peer needs a positive max step")

    @property
    def step_bound(self) -> float:
        """Largest per-slot displacement the generator can produce"""
        if self.kind == PeerKind.STATIC:
            return 0.0
        if self.kind == PeerKind.LINEAR:
            return float(math.hypot(*self.velocity))
        if self.kind == PeerKind.WAYPOINTS:
            return self.speed
        return self.max_step


@dataclass
class AlgorithmRun:
    """Per-slot records and summary of one algorithm on one scenario"""
    name: str
    records: pd.DataFrame
    summary: Dict[str, Any] = field(default_factory=dict)


@dataclass
class RunReport:
    command: str
    scenario_name: str
    seed: int
    app_version: str
    config: Dict[str, str]
    rate_model: RateModel
    runs: List[AlgorithmRun] = field(default_factory=list)
    regret: Optional[RegretReport] = None
    sweep: Optional[pd.DataFrame] = None
    bounds: Optional[pd.DataFrame] = None
    notes: List[str] = field(default_factory=list)

    def run(self, name: str) -> AlgorithmRun:
        for item in self.runs:
            if item.name == name:
                return item
        raise KeyError(name)

    @property
    def bounds_failed(self) -> int:
        """Monte Carlo trials violating either bound (0 without a bounds table)"""
        if self.bounds is None or self.bounds.empty:
            return 0
        return int((~(self.bounds['regret_ok'] & self.bounds['gap_ok'])).sum())

    def to_dict(self) -> dict:
        data = {
            'command': self.command,
            'scenario': self.scenario_name,
            'seed': self.seed,
            'version': self.app_version,
            'config': dict(sorted(self.config.items())),
            'rate_model': self.rate_model.to_dict(),
            'algorithms': {run.name: run.summary for run in self.runs},
            'regret': self.regret.to_dict() if self.regret else None,
            'notes': list(self.notes),
        }
        if self.bounds is not None:
            data['bounds'] = {
                'trials': int(len(self.bounds)),
                'regret_failures': int((~self.bounds['regret_ok']).sum()),
                'gap_failures': int((~self.bounds['gap_ok']).sum()),
            }
        return data
