"""Shared fixtures and the constrained least-squares oracle used by solver tests."""

import sys
from pathlib import Path

import numpy as np
import pytest
from scipy.optimize import minimize

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from models import NormKind, Scenario  # noqa: E402


def slsqp_oracle(objective, gradient, x0, speed, pins, n_rows, chains=None):
    """Solve min objective over stacked (n, 2) points with step and pin constraints.

    chains: list of (offset, length) pairs; a single chain covering all rows by default.
    pins: {row: point}.
    """
    chains = chains or [(0, n_rows)]
    pairs = [(o + i, o + i + 1) for o, length in chains for i in range(length - 1)]

    def steps(flat):
        x = flat.reshape(-1, 2)
        return np.array([speed ** 2 - np.sum((x[b] - x[a]) ** 2) for a, b in pairs])

    def pinned(flat):
        x = flat.reshape(-1, 2)
        return np.concatenate([x[i] - np.asarray(p, dtype=float) for i, p in pins.items()])

    constraints = [{'type': 'ineq', 'fun': steps}]
    if pins:
        constraints.append({'type': 'eq', 'fun': pinned})
    result = minimize(
        lambda f: objective(f.reshape(-1, 2)),
        np.asarray(x0, dtype=float).ravel(),
        jac=lambda f: gradient(f.reshape(-1, 2)).ravel(),
        method='SLSQP',
        constraints=constraints,
        options={'ftol': 1e-14, 'maxiter': 2000},
    )
    return result.x.reshape(-1, 2), float(result.fun)


@pytest.fixture
def rng():
    return np.random.default_rng(20240501)


@pytest.fixture
def small_scenario():
    """Eight slots from (0,0) to (10,0) at speed 2 with a static peer above the path"""
    horizon = 8
    return Scenario(
        start=np.array([0.0, 0.0]),
        destination_stream=np.repeat([[10.0, 0.0]], horizon, axis=0),
        speed_v=2.0,
        horizon_T=6,
        excess_delay=2,
        peer_stream=np.repeat([[5.0, 5.0]], horizon, axis=0),
        norm=NormKind.EUCLIDEAN,
    )


SMALL_SCENARIO_TEXT = """\
# small test scenario
name = small
start_x_m = 0
start_y_m = 0
destination_x_m = 10
destination_y_m = 0
speed_units_per_slot = 2
excess_delay_slots = 2
delay_sweep_slots = 0,2
peer_kind = static
peer_start_x_m = 5
peer_start_y_m = 5
loss_kind = huber
huber_mu = 0.01
ogd_gamma = auto
seed = 3
"""


@pytest.fixture
def scenario_path(tmp_path):
    path = tmp_path / "small.env"
    path.write_text(SMALL_SCENARIO_TEXT, encoding="utf-8")
    return path


@pytest.fixture
def write_scenario(tmp_path):
    """Write scenario text to a temporary file and return its path"""
    def _write(text: str, name: str = "scenario.env") -> Path:
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path
    return _write
