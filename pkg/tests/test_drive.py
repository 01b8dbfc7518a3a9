"""Tests for RF drive phases, gates and timing sequences"""

import math

import numpy as np
import pytest

from abisim.services.drive import (
    GateEnvelope, RfDrive, beat_hz, carrier_theta, detuning_rad_s, gate_level, gate_state,
    make_switch_sequence, make_tuner_sequence, on_fraction,
)
from abisim.services.errors import ConfigError
from abisim.services.optics import overall_phase


class TestPhases:
    def test_overall_phase_follows_detuning(self):
        d1 = RfDrive(carrier_hz=80e6)
        d2 = RfDrive(carrier_hz=79.9e6)
        t = np.linspace(0, 20e-6, 101)
        phi = overall_phase(0.4, carrier_theta(d1, d1.carrier_hz, t), carrier_theta(d2, d1.carrier_hz, t))
        np.testing.assert_allclose(phi, 0.4 + detuning_rad_s(d1, d2) * t, atol=1e-9)

    def test_beat(self):
        assert beat_hz(RfDrive(carrier_hz=80e6), RfDrive(carrier_hz=79.9e6)) == pytest.approx(100e3)
        assert detuning_rad_s(RfDrive(carrier_hz=79.9e6), RfDrive(carrier_hz=80e6)) < 0

    def test_dither_enters_theta(self):
        d = RfDrive(phase0=0.2, dither_hz=200e3, dither_depth=0.1)
        quarter = 1 / (4 * 200e3)
        assert carrier_theta(d, d.carrier_hz, quarter) == pytest.approx(0.3)

    @pytest.mark.parametrize('kwargs', [
        {'carrier_hz': 0.0}, {'dither_depth': -0.1}, {'dither_hz': -1.0},
    ])
    def test_invalid_drive(self, kwargs):
        with pytest.raises(ConfigError):
            RfDrive(**kwargs)


class TestGates:
    def test_always_on(self):
        g = GateEnvelope()
        assert gate_state(g, 12.3) is True
        assert gate_state(g, np.zeros(4)).all()

    def test_duty_window(self):
        g = GateEnvelope(100.0, 0.3)
        t = np.array([0.0, 2.9e-3, 3.1e-3, 9.9e-3, 10.1e-3])
        np.testing.assert_array_equal(gate_state(g, t), [True, True, False, False, True])

    def test_phase_offset(self):
        g = GateEnvelope(100.0, 0.3, phase_offset_s=5e-3)
        assert not gate_state(g, 1e-3)
        assert gate_state(g, 6e-3)

    def test_ramp_level(self):
        g = GateEnvelope(100.0, 0.3, ramp_s=1e-3)
        t = np.array([0.5e-3, 1.5e-3, 2.5e-3, 5e-3])
        np.testing.assert_allclose(gate_level(g, t), [0.5, 1.0, 0.5, 0.0], atol=1e-9)
        assert gate_state(g, 0.5e-3)

    def test_on_fraction(self):
        assert on_fraction(GateEnvelope(100.0, 0.3), 1e-5) == pytest.approx(0.3, abs=2e-3)
        assert on_fraction(GateEnvelope(), 1e-5) == 1.0

    @pytest.mark.parametrize('periods', [1, 7, 1000])
    def test_periodic(self, periods):
        g = GateEnvelope(100.0, 0.3, phase_offset_s=1.7e-3)
        t = np.random.default_rng(3).uniform(0.0, 1.0, 20_000)
        tau = np.mod(t - g.phase_offset_s, g.period_s)
        edge = np.minimum.reduce([tau, np.abs(tau - g.on_time_s), g.period_s - tau])
        t = t[edge > 1e-9]
        shifted = gate_state(g, t + periods * g.period_s)
        np.testing.assert_array_equal(gate_state(g, t), shifted)
        assert gate_state(g, t).mean() == pytest.approx(0.3, abs=0.02)

    @pytest.mark.parametrize('rep', [0.0, 100.0])
    def test_zero_duty_never_on(self, rep):
        g = GateEnvelope(rep, 0.0, phase_offset_s=2e-3)
        t = np.linspace(-0.05, 0.05, 10_001)
        assert not gate_state(g, t).any()
        assert gate_state(g, 2e-3) is False
        assert not gate_level(g, t).any()

    def test_full_duty_always_on(self):
        g = GateEnvelope(100.0, 1.0, phase_offset_s=2e-3)
        assert gate_state(g, np.linspace(-0.05, 0.05, 10_001)).all()

    def test_invalid_duty(self):
        with pytest.raises(ConfigError):
            GateEnvelope(100.0, 1.5)


class TestTunerSequence:
    @pytest.fixture
    def seq(self):
        return make_tuner_sequence(0.3, 5.0, 0.5)

    @pytest.fixture
    def grid(self):
        # sample mid-millisecond over one 200 ms period, away from every edge
        return (np.arange(200) + 0.5) * 1e-3

    def test_lr_and_coh_complementary(self, seq, grid):
        lr = gate_state(seq.lr_gate, grid)
        coh = gate_state(seq.coh_gate, grid)
        assert not (lr & coh).any()
        assert (lr | coh).all()
        assert lr.mean() == pytest.approx(0.3)

    def test_spd_enable_inside_coh(self, seq, grid):
        spde = gate_state(seq.spde_gate, grid)
        coh = gate_state(seq.coh_gate, grid)
        assert spde.mean() == pytest.approx(0.5)
        assert not (spde & ~coh).any()

    def test_feedback_follows_lr(self, seq, grid):
        np.testing.assert_array_equal(gate_state(seq.feedback_enable, grid), gate_state(seq.lr_gate, grid))

    def test_spd_window_too_long(self):
        with pytest.raises(ConfigError, match='overlaps the LR window'):
            make_tuner_sequence(0.3, 5.0, 0.8)

    @pytest.mark.parametrize('lr_duty', [0.0, 1.0])
    def test_lr_duty_bounds(self, lr_duty):
        with pytest.raises(ConfigError):
            make_tuner_sequence(lr_duty, 5.0, 0.1)


class TestSwitchSequence:
    def test_feedback_synchronized(self):
        seq = make_switch_sequence(100.0, 0.3)
        t = (np.arange(100) + 0.5) * 1e-4
        np.testing.assert_array_equal(gate_state(seq.rf_gate, t), gate_state(seq.feedback_enable, t))
        assert seq.rf_gate.on_time_s == pytest.approx(3e-3)

    def test_requires_repetition(self):
        with pytest.raises(ConfigError):
            make_switch_sequence(0.0, 0.3)

    def test_period(self):
        assert make_switch_sequence(250.0, 0.5).rf_gate.period_s == pytest.approx(4e-3)
        assert math.isinf(GateEnvelope().period_s)
