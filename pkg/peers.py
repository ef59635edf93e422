"""Exogenous streams: peer positions and destination changes, one row per slot."""

from typing import Any, Iterable, Tuple

import numpy as np

from models import PeerGenerator, PeerKind, as_point


def generate_peer(gen: PeerGenerator, horizon: int) -> np.ndarray:
    """Peer position x2(t) for t = 1..horizon as a (horizon, 2) array"""
    if horizon < 1:
        raise ValueError(f"horizon must be at least 1, got {horizon}")
    start = as_point(gen.start, 'peer start')
    slots = np.arange(horizon, dtype=float)[:, None]

    if gen.kind == PeerKind.STATIC:
        return np.repeat(start[None, :], horizon, axis=0)

    if gen.kind == PeerKind.LINEAR:
        return start + slots * as_point(gen.velocity, 'peer velocity')

    if gen.kind == PeerKind.WAYPOINTS:
        vertices = np.vstack([start[None, :], np.asarray(gen.waypoints, dtype=float)])
        seg = np.hypot(*np.diff(vertices, axis=0).T)
        arc = np.concatenate([[0.0], np.cumsum(seg)])
        travelled = np.minimum(slots[:, 0] * gen.speed, arc[-1])
        return np.column_stack([np.interp(travelled, arc, vertices[:, 0]),
                                np.interp(travelled, arc, vertices[:, 1])])

    # bounded random walk, uniform over the step disk
    rng = np.random.default_rng(gen.seed)
    angles = rng.uniform(0.0, 2.0 * np.pi, size=horizon - 1)
    radii = gen.max_step * np.sqrt(rng.uniform(0.0, 1.0, size=horizon - 1))
    steps = np.column_stack([radii * np.cos(angles), radii * np.sin(angles)])
    return start + np.vstack([np.zeros((1, 2)), np.cumsum(steps, axis=0)])


def destination_stream(base: Any, events: Iterable[Tuple[int, Any]], horizon: int) -> np.ndarray:
    """Per-slot destination: base until the first event, then each event's point from its slot on"""
    stream = np.repeat(as_point(base, 'destination')[None, :], horizon, axis=0)
    for slot, point in sorted(events, key=lambda e: e[0]):
        if slot < 1:
            raise ValueError(f"destination event slot must be >= 1, got {slot}")
        if slot <= horizon:
            stream[slot - 1:] = as_point(point, f'destination event at slot {slot}')
    return stream
