"""
Tests for the path-loss rate model and its calibration.
"""

import numpy as np
import pytest

from geometry import direct_path
from models import RateModel, Trajectory
from rate_model import (
    average_rate,
    calibrate_distance_scale,
    fit_path_loss_exponent,
    rate,
    separations,
    utility_capacity,
    utility_rss,
    utility_snr,
)


class TestUtilities:
    """RSS, SNR and Shannon rate."""

    def test_rss_power_law(self):
        assert utility_rss(2.0, 2.0) == pytest.approx(0.25)

    def test_snr_at_scale_distance(self):
        """At dist == scale the RSS is one, so SNR = 1 / (sigma2 + 1)."""
        model = RateModel(distance_scale=50.0)
        assert utility_snr(50.0, model) == pytest.approx(1.0 / 1.2)

    def test_rate_at_scale_distance(self):
        model = RateModel(distance_scale=50.0)
        expected = 10e6 * np.log2(1.0 + 1.0 / 1.2)
        assert rate(50.0, model) == pytest.approx(expected)

    def test_rate_below_bandwidth_and_decreasing(self):
        model = RateModel()
        values = rate(np.array([1.0, 10.0, 100.0, 1000.0]), model)
        assert np.all(values < model.bandwidth_W)
        assert np.all(np.diff(values) < 0)

    @pytest.mark.parametrize("dist", [0.0, -1.0])
    def test_non_positive_distance_rejected(self, dist):
        with pytest.raises(ValueError):
            rate(dist, RateModel())
        with pytest.raises(ValueError):
            utility_rss(dist, 2.5)

    def test_capacity_is_rate(self):
        model = RateModel()
        assert utility_capacity(30.0, model) == rate(30.0, model)


class TestAverageRate:
    """Average rate between two trajectories."""

    def test_constant_separation(self):
        model = RateModel()
        t1 = direct_path((0, 0), (10, 0), 6)
        t2 = direct_path((0, 30), (10, 30), 6)
        summary = average_rate(t1, t2, model, slot_duration_s=2.0)
        assert summary.average_bps == pytest.approx(rate(30.0, model))
        assert summary.downloaded_bits == pytest.approx(6 * 2.0 * rate(30.0, model))

    def test_uses_common_slots(self):
        t1 = Trajectory(np.zeros((5, 2)))
        t2 = Trajectory(np.array([[3.0, 4.0], [6.0, 8.0]]))
        assert np.allclose(separations(t1, t2), [5.0, 10.0])


class TestCalibration:
    """Solving for the distance scale that hits a target rate."""

    @pytest.mark.parametrize("target", [1.1e6, 3.1e6, 8.0e6])
    def test_hits_target(self, target):
        model = RateModel()
        t1 = direct_path((0, 400), (400, 1200), 24)
        t2 = direct_path((400, 0), (800, 800), 24)
        scale = calibrate_distance_scale(t1, t2, model, target)
        achieved = average_rate(t1, t2, model.with_scale(scale)).average_bps
        assert achieved == pytest.approx(target, rel=1e-9)

    def test_rejects_target_above_bandwidth(self):
        t = direct_path((0, 0), (1, 0), 2)
        with pytest.raises(ValueError):
            calibrate_distance_scale(t, t, RateModel(), 2e7)


class TestExponentFit:
    """Fitting the path-loss exponent to several average rates at once."""

    @staticmethod
    def _pairs():
        direct = (direct_path((0, 400), (400, 1200), 24), direct_path((400, 0), (800, 800), 24))
        closer = [(direct_path((0, 400), (400, 1200), 24),
                   direct_path((400 - k, k), (800 - k, 800 + k), 24)) for k in (100, 200, 300)]
        return direct, closer

    def test_recovers_a_known_exponent(self):
        direct, pairs = self._pairs()
        base = RateModel(path_loss_alpha=1.8)
        truth = base.with_scale(calibrate_distance_scale(*direct, base, 1.1e6))
        targets = [average_rate(a, b, truth).average_bps for a, b in pairs]
        fitted = fit_path_loss_exponent(direct, pairs, targets, RateModel(), 1.1e6)
        assert fitted.path_loss_alpha == pytest.approx(1.8, rel=1e-4)
        assert average_rate(*direct, fitted).average_bps == pytest.approx(1.1e6, rel=1e-9)

    def test_keeps_bandwidth_and_noise(self):
        direct, pairs = self._pairs()
        model = RateModel(bandwidth_W=5e6, noise_power_sigma2=0.5)
        fitted = fit_path_loss_exponent(direct, pairs[:1], [1.5e6], model, 1e6)
        assert fitted.bandwidth_W == 5e6 and fitted.noise_power_sigma2 == 0.5

    def test_needs_one_target_per_pair(self):
        direct, pairs = self._pairs()
        with pytest.raises(ValueError):
            fit_path_loss_exponent(direct, pairs, [2e6], RateModel(), 1.1e6)
