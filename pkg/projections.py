"""Feasible-set machinery for stacked trajectories.

A feasible set is a list of chains (one per user) stacked row-wise into one
(n, 2) array. Each chain bounds its consecutive steps by a speed, may pin
individual slots to fixed points and may be confined to a convex region.
Projection onto the intersection uses Dykstra's cyclic method over the set of
even-indexed step pairs, the set of odd-indexed step pairs and, optionally,
the region; each of these has a closed-form projection.

Without a region the set is handled exactly in step coordinates by
StepProjector instead.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize

from geometry import project_norm_ball, row_norms
from models import NormKind, Region, RegionKind, as_point
from settings import settings

logger = logging.getLogger(__name__)


def project_region(points: np.ndarray, region: Optional[Region]) -> np.ndarray:
    """Closed-form projection of points (a single point or rows) onto a box or disk"""
    pts = np.asarray(points, dtype=float)
    if region is None:
        return pts.copy()
    single = pts.ndim == 1
    rows = np.atleast_2d(pts)
    if region.kind == RegionKind.BOX:
        xmin, ymin, xmax, ymax = region.params
        out = np.column_stack([np.clip(rows[:, 0], xmin, xmax), np.clip(rows[:, 1], ymin, ymax)])
    else:
        cx, cy, r = region.params
        center = np.array([cx, cy])
        out = center + project_norm_ball(rows - center, r)
    return out[0] if single else out


@dataclass
class Chain:
    """One user's trajectory inside the stacked variable"""
    length: int
    speed: float
    pins: Dict[int, np.ndarray] = field(default_factory=dict)  # 0-based slot -> point

    def __post_init__(self):
        if self.length < 1:
            raise ValueError("chain needs at least one slot")
        if self.speed <= 0:
            raise ValueError("chain speed must be positive")
        pins = {}
        for idx, point in self.pins.items():
            if not 0 <= idx < self.length:
                raise ValueError(f"pin index {idx} outside chain of length {self.length}")
            pins[int(idx)] = as_point(point, f'pin {idx}')
        self.pins = pins


class FeasibleSet:
    def __init__(self, chains: Sequence[Chain], norm: NormKind = NormKind.EUCLIDEAN,
                 region: Optional[Region] = None):
        self.chains = list(chains)
        self.norm = NormKind(norm)
        self.region = region
        self.offsets = np.cumsum([0] + [c.length for c in self.chains])[:-1]
        self.n_rows = int(sum(c.length for c in self.chains))

        pinned_idx, pinned_val = [], []
        for chain, offset in zip(self.chains, self.offsets):
            for idx, point in sorted(chain.pins.items()):
                pinned_idx.append(offset + idx)
                pinned_val.append(point)
        self.pinned_idx = np.asarray(pinned_idx, dtype=int)
        self.pinned_val = np.asarray(pinned_val, dtype=float).reshape(-1, 2)
        self.is_pinned = np.zeros(self.n_rows, dtype=bool)
        self.is_pinned[self.pinned_idx] = True

        # pair groups: left indices and speeds for even and odd step parities
        self.groups: List[Tuple[np.ndarray, np.ndarray]] = []
        for parity in (0, 1):
            lefts, speeds = [], []
            for chain, offset in zip(self.chains, self.offsets):
                local = np.arange(parity, chain.length - 1, 2)
                lefts.append(offset + local)
                speeds.append(np.full(local.shape, chain.speed))
            self.groups.append((np.concatenate(lefts).astype(int), np.concatenate(speeds)))

        self.speed_scale = max(1.0, max(c.speed for c in self.chains))

    @property
    def set_count(self) -> int:
        return 3 if self.region is not None else 2

    def chain_slice(self, k: int) -> slice:
        start = int(self.offsets[k])
        return slice(start, start + self.chains[k].length)

    def apply_pins(self, x: np.ndarray) -> np.ndarray:
        y = np.array(x, dtype=float, copy=True)
        if self.pinned_idx.size:
            y[self.pinned_idx] = self.pinned_val
        return y

    def _project_group(self, x: np.ndarray, parity: int) -> np.ndarray:
        y = self.apply_pins(x)
        lefts, speeds = self.groups[parity]
        if lefts.size == 0:
            return y
        rights = lefts + 1
        a, b = y[lefts], y[rights]
        clipped = project_norm_ball(b - a, speeds, self.norm)
        mid = 0.5 * (a + b)
        lp = self.is_pinned[lefts][:, None]
        rp = self.is_pinned[rights][:, None]
        new_a = np.where(lp, a, np.where(rp, b - clipped, mid - 0.5 * clipped))
        new_b = np.where(rp, b, np.where(lp, a + clipped, mid + 0.5 * clipped))
        y[lefts] = new_a
        y[rights] = new_b
        return y

    def _project_set(self, x: np.ndarray, k: int) -> np.ndarray:
        if k < 2:
            return self._project_group(x, k)
        return self.apply_pins(project_region(x, self.region))

    def violation(self, x: np.ndarray) -> float:
        """Largest constraint violation (step excess, pin offset, region distance)"""
        worst = 0.0
        for k, chain in enumerate(self.chains):
            seg = x[self.chain_slice(k)]
            if chain.length > 1:
                excess = row_norms(np.diff(seg, axis=0), self.norm) - chain.speed
                worst = max(worst, float(excess.max()))
        if self.pinned_idx.size:
            worst = max(worst, float(np.abs(x[self.pinned_idx] - self.pinned_val).max()))
        if self.region is not None:
            worst = max(worst, float(np.abs(project_region(x, self.region) - x).max()))
        return max(worst, 0.0)

    def restore(self, x: np.ndarray, reference: np.ndarray) -> np.ndarray:
        """Blend each chain with a feasible reference so every step meets its bound.

        Per chain the largest theta in [0, 1] is taken such that
        theta * x + (1 - theta) * reference satisfies every step bound by the
        triangle inequality; pins shared with the reference are kept exactly.
        """
        y = self.apply_pins(x)
        for k, chain in enumerate(self.chains):
            sl = self.chain_slice(k)
            if chain.length < 2:
                continue
            steps = row_norms(np.diff(y[sl], axis=0), self.norm)
            ref_steps = row_norms(np.diff(reference[sl], axis=0), self.norm)
            bad = steps > chain.speed
            if not np.any(bad):
                continue
            denom = steps[bad] - ref_steps[bad]
            theta = np.where(denom > 0, (chain.speed - ref_steps[bad]) / np.where(denom > 0, denom, 1.0), 0.0)
            theta = float(np.clip(theta.min(), 0.0, 1.0))
            y[sl] = theta * y[sl] + (1.0 - theta) * reference[sl]
        return self.apply_pins(y)


class DykstraProjector:
    """Cyclic Dykstra projection onto a FeasibleSet, with increments kept between calls"""

    def __init__(self, feasible: FeasibleSet, tolerance: Optional[float] = None,
                 max_sweeps: Optional[int] = None):
        self.feasible = feasible
        self.tolerance = (settings.PROJECTION_TOLERANCE if tolerance is None else tolerance) \
            * feasible.speed_scale
        self.max_sweeps = settings.PROJECTION_MAX_SWEEPS if max_sweeps is None else max_sweeps
        self.increments = np.zeros((feasible.set_count, feasible.n_rows, 2))
        self.total_sweeps = 0

    def reset(self):
        self.increments[:] = 0.0

    def _run(self, z: np.ndarray) -> Tuple[np.ndarray, bool]:
        x = z - self.increments.sum(axis=0)
        for _ in range(self.max_sweeps):
            previous = x
            for k in range(self.feasible.set_count):
                shifted = x + self.increments[k]
                x = self.feasible._project_set(shifted, k)
                self.increments[k] = shifted - x
            self.total_sweeps += 1
            change = float(np.abs(x - previous).max())
            if change <= self.tolerance and self.feasible.violation(x) <= self.tolerance:
                return x, True
        return x, False

    def project(self, z: np.ndarray, warm: bool = True) -> Tuple[np.ndarray, bool]:
        """Projection of z and whether the sweeps converged"""
        z = np.asarray(z, dtype=float)
        if not warm:
            self.reset()
        x, ok = self._run(z)
        if not ok and warm:
            logger.debug("warm Dykstra stalled, restarting from zero increments")
            self.reset()
            x, ok = self._run(z)
        if not ok:
            logger.debug("Dykstra projection stopped after %d sweeps (violation %.3g)",
                           self.max_sweeps, self.feasible.violation(x))
        return x, ok


def _jacobian_sum(w: np.ndarray, radius: float, norm: NormKind) -> np.ndarray:
    """Sum over rows of the Jacobian of the row-wise norm-ball projection at w"""
    total = np.zeros((2, 2))
    if NormKind(norm) == NormKind.MANHATTAN:
        mags = np.abs(w)
        outside = mags.sum(axis=1) > radius
        total += np.eye(2) * np.count_nonzero(~outside)
        if np.any(outside):
            wo, mo = w[outside], mags[outside]
            hi, lo = mo.max(axis=1), mo.min(axis=1)
            theta = np.where(hi - lo >= radius, hi - radius, 0.5 * (hi + lo - radius))
            active = mo > theta[:, None]
            signs = np.sign(wo) * active
            count = np.maximum(active.sum(axis=1), 1)
            total += np.diag(active.sum(axis=0).astype(float))
            total -= np.einsum('i,ij,ik->jk', 1.0 / count, signs, signs)
        return total
    lengths = np.hypot(w[:, 0], w[:, 1])
    outside = lengths > radius
    total += np.eye(2) * np.count_nonzero(~outside)
    if np.any(outside):
        lo = lengths[outside]
        unit = w[outside] / lo[:, None]
        shrink = radius / lo
        total += np.eye(2) * shrink.sum() - np.einsum('i,ij,ik->jk', shrink, unit, unit)
    return total


def project_steps_with_sum(z: np.ndarray, target: np.ndarray, radius: float,
                           norm: NormKind = NormKind.EUCLIDEAN, tolerance: float = 1e-12,
                           max_iter: int = 100) -> Tuple[np.ndarray, bool]:
    """Projection of step rows onto {||u_i|| <= radius for all i} with sum(u_i) = target.

    The minimiser is u_i = P(z_i - nu) for the nu in R^2 that makes the steps
    add up to target. nu maximises a concave dual whose gradient is
    sum(u_i) - target; it is found by damped semismooth Newton, with L-BFGS-B
    as a fallback. Returns the steps and whether the sum was met to
    tolerance * max(1, radius).
    """
    z = np.atleast_2d(np.asarray(z, dtype=float))
    target = as_point(target, 'target')
    m = z.shape[0]
    if m == 0:
        return z.copy(), bool(np.allclose(target, 0.0))
    need = float(row_norms(target[None, :], norm)[0])
    if need >= m * radius * (1.0 - 1e-12):
        # the set collapses to equal steps
        return np.repeat(target[None, :] / m, m, axis=0), True
    slack = tolerance * max(1.0, radius)

    def dual(nu: np.ndarray) -> Tuple[np.ndarray, float, np.ndarray]:
        u = project_norm_ball(z - nu, radius, norm)
        gap = u.sum(axis=0) - target
        return u, 0.5 * float(np.sum((u - z) ** 2)) + float(nu @ gap), gap

    nu = z.mean(axis=0) - target / m
    u, value, gap = dual(nu)
    for _ in range(max_iter):
        if np.linalg.norm(gap) <= slack:
            return u, True
        hess = _jacobian_sum(z - nu, radius, norm) + 1e-12 * m * np.eye(2)
        try:
            direction = np.linalg.solve(hess, gap)
        except np.linalg.LinAlgError:
            direction = gap / m
        slope = float(gap @ direction)
        if not slope > 0.0:
            direction, slope = gap / m, float(gap @ gap) / m
        t = 1.0
        for _ in range(60):
            candidate = nu + t * direction
            u_c, value_c, gap_c = dual(candidate)
            if value_c >= value + 1e-4 * t * slope \
                    or np.linalg.norm(gap_c) <= 0.5 * np.linalg.norm(gap):
                break
            t *= 0.5
        else:
            break
        nu, u, value, gap = candidate, u_c, value_c, gap_c
    if np.linalg.norm(gap) <= slack:
        return u, True

    def negated(n: np.ndarray) -> Tuple[float, np.ndarray]:
        _, val, g = dual(n)
        return -val, -g

    result = minimize(negated, nu, jac=True, method='L-BFGS-B',
                      options={'gtol': slack, 'ftol': 0.0, 'maxiter': 1000})
    u, _, gap = dual(result.x)
    ok = bool(np.linalg.norm(gap) <= slack)
    if not ok:
        logger.debug("step-sum projection left a gap of %.3g", float(np.linalg.norm(gap)))
    return u, ok


def cumsum_gain(m: int) -> float:
    """Squared spectral norm of the m x m lower-triangular matrix of ones"""
    if m < 1:
        return 0.0
    return 1.0 / (4.0 * np.sin(np.pi / (2.0 * (2 * m + 1))) ** 2)


@dataclass
class _StepBlock:
    rows: slice  # free rows in the stacked trajectory
    steps: slice  # matching rows of the stacked step array
    anchor: int  # pinned row the first free step leaves from
    speed: float
    target: Optional[np.ndarray]  # required step sum when the chain ends on a pin


class StepProjector:
    """Exact projection for region-free feasible sets, working on steps.

    Every chain must be pinned on a leading prefix and optionally on its last
    slot. Its free rows are then the anchor (last prefix point) plus the
    cumulative sum of free steps, and the feasible set in step coordinates is
    a product of norm balls intersected with one sum constraint per
    end-pinned chain, which project_steps_with_sum handles exactly.
    """

    def __init__(self, feasible: FeasibleSet, tolerance: Optional[float] = None):
        if feasible.region is not None:
            raise ValueError("step projection does not handle regions")
        self.feasible = feasible
        self.tolerance = settings.PROJECTION_TOLERANCE if tolerance is None else tolerance
        self.blocks: List[_StepBlock] = []
        cursor = 0
        for k, chain in enumerate(feasible.chains):
            base = int(feasible.offsets[k])
            p = 0
            while p in chain.pins:
                p += 1
            last = chain.length - 1
            if p == 0 or set(chain.pins) - set(range(p)) - {last}:
                raise ValueError("chains need pins on a leading prefix and optionally the last slot")
            m = chain.length - p
            target = None
            if m and last in chain.pins:
                target = chain.pins[last] - chain.pins[p - 1]
            self.blocks.append(_StepBlock(slice(base + p, base + chain.length),
                                          slice(cursor, cursor + m), base + p - 1,
                                          chain.speed, target))
            cursor += m
        self.n_steps = cursor
        self.lipschitz_factor = max([cumsum_gain(b.steps.stop - b.steps.start)
                                     for b in self.blocks] + [1.0])

    def to_points(self, u: np.ndarray) -> np.ndarray:
        x = self.feasible.apply_pins(np.zeros((self.feasible.n_rows, 2)))
        for b in self.blocks:
            x[b.rows] = x[b.anchor] + np.cumsum(u[b.steps], axis=0)
        return self.feasible.apply_pins(x)

    def to_steps(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        u = np.zeros((self.n_steps, 2))
        for b in self.blocks:
            u[b.steps] = np.diff(x[b.anchor:b.rows.stop], axis=0)
        return u

    def pull_back(self, grad: np.ndarray) -> np.ndarray:
        """Gradient with respect to the steps given the gradient with respect to the points"""
        g = np.zeros((self.n_steps, 2))
        for b in self.blocks:
            g[b.steps] = np.cumsum(grad[b.rows][::-1], axis=0)[::-1]
        return g

    def project(self, z: np.ndarray) -> Tuple[np.ndarray, bool]:
        z = np.asarray(z, dtype=float)
        u = np.empty_like(z)
        ok = True
        for b in self.blocks:
            if b.target is None:
                u[b.steps] = project_norm_ball(z[b.steps], b.speed, self.feasible.norm)
                continue
            u[b.steps], done = project_steps_with_sum(z[b.steps], b.target, b.speed,
                                                      self.feasible.norm, self.tolerance)
            ok = ok and done
        return u, ok
