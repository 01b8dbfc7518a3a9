"""
RF drive synthesis: carrier phases, the phase dither on RF1, gate envelopes
and the timing sequences of the chopped operating modes.

Optical fields follow the e^{-i omega t} convention, so an RF carrier enters
the AOM phase theta with a negative sign. With theta_k measured in a frame
rotating at a common reference frequency, the overall phase
phi = phi_path - theta1 + theta2 gains +2 pi (f1 - f2) t.

All functions of time accept scalars or numpy arrays.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class GateEnvelope:
    """
    Periodic on/off envelope

    Attributes:
        repetition_hz: gate repetition rate, 0 means always on
        duty: on fraction of each period
        phase_offset_s: time of the rising edge within the period
        ramp_s: linear edge ramp of the analog level (logic edges stay instantaneous)
    """
    repetition_hz: float = 0.0
    duty: float = 1.0
    phase_offset_s: float = 0.0
    ramp_s: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.duty <= 1.0:
            raise ConfigError(f"gate duty must lie in [0, 1], got {self.duty}")
        if self.repetition_hz < 0:
            raise ConfigError(f"gate repetition_hz must be >= 0, got {self.repetition_hz}")
        if self.ramp_s < 0:
            raise ConfigError(f"gate ramp_s must be >= 0, got {self.ramp_s}")

    @property
    def period_s(self) -> float:
        return math.inf if self.repetition_hz == 0 else 1.0 / self.repetition_hz

    @property
    def on_time_s(self) -> float:
        return self.duty * self.period_s


@dataclass(frozen=True)
class RfDrive:
    """RF drive of one AOM"""
    carrier_hz: float = 80e6
    phase0: float = 0.0
    dither_hz: float = 0.0
    dither_depth: float = 0.0
    gate: GateEnvelope = field(default_factory=GateEnvelope)

    def __post_init__(self):
        if not self.carrier_hz > 0:
            raise ConfigError(f"carrier_hz must be positive, got {self.carrier_hz}")
        if self.dither_depth < 0:
            raise ConfigError(f"dither_depth must be >= 0, got {self.dither_depth}")
        if self.dither_hz < 0:
            raise ConfigError(f"dither_hz must be >= 0, got {self.dither_hz}")


@dataclass(frozen=True)
class TimingSequence:
    """Complementary LR/Coh input pattern with SPD enable and feedback enable"""
    lr_gate: GateEnvelope
    coh_gate: GateEnvelope
    spde_gate: GateEnvelope
    feedback_enable: GateEnvelope


@dataclass(frozen=True)
class SwitchSequence:
    """RF gate of the chopped switch and the synchronized feedback enable"""
    rf_gate: GateEnvelope
    feedback_enable: GateEnvelope


# ==================================
# PHASES
# ==================================

def instantaneous_phase(drive: RfDrive, t):
    """AOM theta contributed by the drive phase and dither at time t (carrier excluded)"""
    return drive.phase0 + drive.dither_depth * np.sin(2.0 * np.pi * drive.dither_hz * t)


def carrier_theta(drive: RfDrive, reference_hz: float, t):
    """Full AOM theta in the frame rotating at reference_hz"""
    return -2.0 * np.pi * (drive.carrier_hz - reference_hz) * t + instantaneous_phase(drive, t)


def beat_hz(drive1: RfDrive, drive2: RfDrive) -> float:
    return abs(drive1.carrier_hz - drive2.carrier_hz)


def detuning_rad_s(drive1: RfDrive, drive2: RfDrive) -> float:
    """Delta omega entering the beating term, 2 pi (f1 - f2)"""
    return 2.0 * math.pi * (drive1.carrier_hz - drive2.carrier_hz)


# ==================================
# GATES
# ==================================

def _time_into_period(g: GateEnvelope, t):
    """Seconds since the start of the current period, in [0, period)"""
    dt = np.asarray(t, dtype=float) - g.phase_offset_s
    tau = dt - np.floor(dt * g.repetition_hz) * g.period_s
    return np.clip(tau, 0.0, np.nextafter(g.period_s, 0.0))


def gate_state(g: GateEnvelope, t):
    """
    True while the gate is on: time into the current period < duty * period.

    Times within a few ulp of a gate edge may resolve to either side; duty 0
    and duty 1 are exactly never-on and always-on.
    """
    if g.repetition_hz == 0.0 or g.duty in (0.0, 1.0):
        on = g.duty > 0.0
        return on if np.ndim(t) == 0 else np.full(np.shape(t), on)
    state = _time_into_period(g, t) < g.on_time_s
    return bool(state) if np.ndim(t) == 0 else state


def gate_level(g: GateEnvelope, t):
    """Analog gate level in [0, 1]; equals gate_state unless ramp_s > 0"""
    if g.ramp_s == 0.0 or g.repetition_hz == 0.0:
        return np.asarray(gate_state(g, t), dtype=float)
    tau = _time_into_period(g, t)
    width = g.on_time_s
    level = np.minimum(tau, width - tau) / g.ramp_s
    return np.where(tau < width, np.clip(level, 0.0, 1.0), 0.0)


def on_fraction(g: GateEnvelope, dt: float) -> float:
    """Fraction of on-samples over one period sampled at dt"""
    if g.repetition_hz == 0.0:
        return 1.0 if g.duty > 0 else 0.0
    n = int(round(g.period_s / dt))
    t = g.phase_offset_s + np.arange(n) * dt
    return float(np.mean(gate_state(g, t)))


# ==================================
# TIMING SEQUENCES
# ==================================

def make_tuner_sequence(lr_duty: float, lr_hz: float, spde_duty: float,
                        feedback_offset_s: float = 0.0) -> TimingSequence:
    """
    Build the frequency-tuner timing: LR on first, Coh on for the rest of the
    period, SPD enable centred inside the Coh window, feedback enable with LR.

    Raises:
        ConfigError: lr_duty outside (0, 1) or an SPD window that cannot fit in Coh
    """
    if not 0.0 < lr_duty < 1.0:
        raise ConfigError(f"lr_duty must lie in (0, 1), got {lr_duty}")
    if not lr_hz > 0:
        raise ConfigError(f"lr_hz must be positive, got {lr_hz}")
    if spde_duty < 0:
        raise ConfigError(f"spde_duty must be >= 0, got {spde_duty}")
    coh_duty = 1.0 - lr_duty
    if spde_duty > coh_duty:
        raise ConfigError(
            f"SPD enable window ({spde_duty:.3f} of the period) overlaps the LR window; "
            f"at most {coh_duty:.3f} fits inside Coh"
        )

    period = 1.0 / lr_hz
    coh_start = lr_duty * period
    spde_start = coh_start + 0.5 * (coh_duty - spde_duty) * period
    return TimingSequence(
        lr_gate=GateEnvelope(lr_hz, lr_duty, 0.0),
        coh_gate=GateEnvelope(lr_hz, coh_duty, coh_start),
        spde_gate=GateEnvelope(lr_hz, spde_duty, spde_start),
        feedback_enable=GateEnvelope(lr_hz, lr_duty, feedback_offset_s),
    )


def make_switch_sequence(repetition_hz: float, duty: float,
                         feedback_offset_s: float = 0.0, ramp_s: float = 0.0) -> SwitchSequence:
    """Chopped-switch timing: RF gate and the feedback enable synchronized to it"""
    if not repetition_hz > 0:
        raise ConfigError(f"repetition_hz must be positive, got {repetition_hz}")
    return SwitchSequence(
        rf_gate=GateEnvelope(repetition_hz, duty, 0.0, ramp_s),
        feedback_enable=GateEnvelope(repetition_hz, duty, feedback_offset_s),
    )
