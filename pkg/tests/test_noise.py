"""Tests for phase drift and the PZT actuator"""

import logging
import math

import numpy as np
import pytest

from abisim.services.errors import ConfigError
from abisim.services.noise import (
    DEFAULT_DIFFUSION, DriftModel, PztModel, calibrate_walkoff_scale, drift_path, drift_step,
    pzt_apply, walkoff_factor,
)


class TestDrift:
    def test_zero_diffusion_is_constant(self):
        m = DriftModel(0.0, current_phase=0.7)
        assert drift_step(m, 1e-3) == 0.7
        np.testing.assert_array_equal(drift_path(m, 1e-3, 5), np.full(5, 0.7))

    def test_increment_variance(self):
        m = DriftModel(DEFAULT_DIFFUSION, seed=4)
        dt = 1e-4
        path = drift_path(m, dt, 200_000)
        steps = np.diff(path)
        assert steps.var() == pytest.approx(DEFAULT_DIFFUSION * dt, rel=0.02)
        assert m.current_phase == path[-1]

    def test_one_second_spread(self):
        # +/- 1 sigma spans pi after one second
        spreads = [drift_path(DriftModel(seed=s), 1e-3, 1000)[-1] for s in range(400)]
        assert 2 * np.std(spreads) == pytest.approx(math.pi, rel=0.15)

    def test_increments_uncorrelated(self):
        steps = np.diff(drift_path(DriftModel(DEFAULT_DIFFUSION, seed=11), 1e-4, 100_001))
        steps = steps - steps.mean()
        for lag in (1, 2, 5, 10):
            rho = np.dot(steps[:-lag], steps[lag:]) / np.dot(steps, steps)
            assert abs(rho) < 0.02

    def test_ensemble_variance_grows_linearly(self):
        dt, n = 1e-3, 100
        ends = np.array([drift_path(DriftModel(DEFAULT_DIFFUSION, seed=s), dt, n)[-1] for s in range(10_000)])
        assert ends.var() == pytest.approx(DEFAULT_DIFFUSION * dt * n, rel=0.05)

    def test_same_seed_same_path(self):
        a = drift_path(DriftModel(seed=9), 1e-5, 100)
        b = drift_path(DriftModel(seed=9), 1e-5, 100)
        np.testing.assert_array_equal(a, b)

    def test_step_requires_positive_dt(self):
        with pytest.raises(ConfigError):
            drift_step(DriftModel(), 0.0)

    def test_negative_diffusion(self):
        with pytest.raises(ConfigError):
            DriftModel(-1.0)


class TestPzt:
    def test_phase_per_volt(self):
        resp = pzt_apply(PztModel(), 0.5)
        assert resp.phase == pytest.approx(math.pi / 2)
        assert not resp.saturated

    def test_rails_at_limit(self, caplog):
        with caplog.at_level(logging.WARNING):
            resp = pzt_apply(PztModel(), 11.0)
        assert resp.saturated
        assert resp.volts == 10.0
        assert 'PZT railed' in caplog.text

    def test_walkoff_at_reference_excursion(self):
        assert PztModel().visibility(1.96) == pytest.approx(0.937, abs=1e-3)
        assert walkoff_factor(PztModel(), 0.0) == 1.0

    def test_walkoff_calibration(self):
        assert calibrate_walkoff_scale(1.96) == pytest.approx(8.0, abs=0.01)

    def test_calibration_requires_degradation(self):
        with pytest.raises(ConfigError):
            calibrate_walkoff_scale(1.96, v0=0.9, v_target=0.95)

    @pytest.mark.parametrize('volts', [-4.9, -1.3, 0.0, 0.25, 2.0, 4.99])
    def test_phase_linear_in_volts(self, volts):
        m = PztModel()
        assert pzt_apply(m, 2 * volts).phase == pytest.approx(2 * pzt_apply(m, volts).phase, rel=1e-15, abs=1e-15)

    def test_walkoff_non_increasing_in_magnitude(self):
        m = PztModel()
        volts = np.linspace(0.0, 30.0, 3001)
        for sign in (1.0, -1.0):
            assert (np.diff(walkoff_factor(m, sign * volts)) <= 0).all()
        np.testing.assert_array_equal(walkoff_factor(m, volts), walkoff_factor(m, -volts))

    @pytest.mark.parametrize('kwargs', [
        {'gain': 0.0}, {'range_v': (5.0, -5.0)}, {'walkoff_scale_v': 0.0}, {'v0_visibility': 1.2},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            PztModel(**kwargs)
