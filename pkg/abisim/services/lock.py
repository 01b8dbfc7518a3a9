"""
Digital dither lock of the interferometer phase

RF1 carries a small sinusoidal phase dither. The detector signal is mixed
with the dither reference, averaged over each dither period and low-passed by
a single-pole IIR filter; the PID acts once per dither period on either the
PZT or the RF2 phase. When feedback is disabled the actuator holds its value.

Two simulation paths share the control loop:
    envelope  per-period demodulation evaluated in closed form (Bessel factors)
    field     the detector waveform is sampled inside each dither period by
              propagating the fields and demodulated numerically
"""

import logging
import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from scipy.signal import lfilter
from scipy.special import jv

from .detectors import PdModel, TimeSeries
from .drive import GateEnvelope, RfDrive, gate_level, gate_state
from .errors import ConfigError, LockLost, NoAcquisition, UndersampledError
from .noise import DriftModel, PztModel, drift_path
from .optics import AbiConfig, Port, abi_intensities, fringe_parameters_from

logger = logging.getLogger(__name__)

MIN_SAMPLES_PER_PERIOD = 10
ACTUATORS = ('pzt', 'rf2')
SIM_MODES = ('envelope', 'field')
TWO_PI = 2.0 * math.pi


# ==================================
# CONFIGURATION AND STATE
# ==================================

@dataclass(frozen=True)
class DemodConfig:
    """
    Lock-in demodulator

    Attributes:
        dither_hz: dither (reference) frequency
        lowpass_cutoff_hz: single-pole IIR cutoff, below dither_hz
        reference_phase: phase of the reference sin(2 pi f t + reference_phase)
    """
    dither_hz: float = 200e3
    lowpass_cutoff_hz: float = 10e3
    reference_phase: float = 0.0

    def __post_init__(self):
        if not self.dither_hz > 0:
            raise ConfigError(f"dither_hz must be positive, got {self.dither_hz}")
        if not 0 < self.lowpass_cutoff_hz < self.dither_hz:
            raise ConfigError(
                f"lowpass_cutoff_hz must lie in (0, dither_hz), got {self.lowpass_cutoff_hz}"
            )

    def alpha(self, dt: float) -> float:
        """Smoothing factor of the IIR filter updated every dt"""
        return 1.0 - math.exp(-TWO_PI * self.lowpass_cutoff_hz * dt)


@dataclass(frozen=True)
class PidConfig:
    kp: float = 2.0
    ki: float = 1.7e5
    kd: float = 0.0
    setpoint: float = 0.0
    output_limits: Tuple[float, float] = (-10.0, 10.0)

    def __post_init__(self):
        for name in ('kp', 'ki', 'kd', 'setpoint'):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"PID {name} must be finite")
        lo, hi = self.output_limits
        if not lo < hi:
            raise ConfigError(f"PID output_limits must be increasing, got {self.output_limits}")


@dataclass
class LockState:
    """
    Mutable loop state

    The integrator carries the output baseline, so engaging with the current
    output is bumpless. While held, the output and integrator are frozen.
    """
    engaged: bool = False
    held: bool = False
    last_output_v: float = 0.0
    integrator: float = 0.0
    prev_error: Optional[float] = None
    railed: bool = False
    rail_events: int = 0
    error_history: deque = field(default_factory=lambda: deque(maxlen=1024))

    def engage(self, output_v: Optional[float] = None) -> None:
        if output_v is not None:
            self.last_output_v = float(output_v)
        self.integrator = self.last_output_v
        self.prev_error = None
        self.engaged = True
        self.held = False

    def snapshot(self) -> Dict[str, Any]:
        return {
            'engaged': self.engaged,
            'held': self.held,
            'last_output_v': self.last_output_v,
            'integrator': self.integrator,
            'railed': self.railed,
            'rail_events': self.rail_events,
            'error_history': list(self.error_history),
        }


@dataclass(frozen=True)
class LockConfig:
    """Everything the controller needs besides the plant"""
    demod: DemodConfig = field(default_factory=DemodConfig)
    pid: PidConfig = field(default_factory=PidConfig)
    actuator: str = 'pzt'
    sim_mode: str = 'envelope'
    duration_s: float = 0.1
    feedback_enable: GateEnvelope = field(default_factory=GateEnvelope)
    samples_per_period: int = 20
    auto_reference_phase: bool = True
    quadrature_band: float = 0.2
    acquire_threshold_rad: float = 0.1
    lost_threshold_rad: float = 0.5
    lost_interval_s: float = 1e-3
    acquisition_timeout_s: float = 10e-3
    history_len: int = 1024

    def __post_init__(self):
        if self.actuator not in ACTUATORS:
            raise ConfigError(f"actuator must be one of {ACTUATORS}, got '{self.actuator}'")
        if self.sim_mode not in SIM_MODES:
            raise ConfigError(f"sim_mode must be one of {SIM_MODES}, got '{self.sim_mode}'")
        if not self.duration_s > 0:
            raise ConfigError(f"lock duration_s must be positive, got {self.duration_s}")
        if self.samples_per_period < 2 * MIN_SAMPLES_PER_PERIOD:
            raise ConfigError(
                f"field simulation needs >= {2 * MIN_SAMPLES_PER_PERIOD} samples per dither period"
            )
        if not 0 < self.acquire_threshold_rad < self.lost_threshold_rad:
            raise ConfigError("need 0 < acquire_threshold_rad < lost_threshold_rad")


@dataclass
class LockPlant:
    """
    Simulation handle of the running interferometer

    Stateful: a lock run advances t0, the drift model and the actuator bias, so
    consecutive runs continue the same timeline.
    """
    abi: AbiConfig
    drive1: RfDrive
    drive2: RfDrive
    drift: DriftModel
    pzt: PztModel = field(default_factory=PztModel)
    pd: PdModel = field(default_factory=PdModel)
    i_in: float = 1.0
    port: Port = Port.E
    light_gate: GateEnvelope = field(default_factory=GateEnvelope)
    bias_v: float = 0.0
    rng: Optional[np.random.Generator] = None
    t0: float = 0.0

    def __post_init__(self):
        if self.port not in (Port.E, Port.F):
            raise ConfigError(f"lock detector must sit on port e or f, got {self.port.value}")
        if self.i_in < 0:
            raise ConfigError(f"input intensity must be >= 0, got {self.i_in}")


@dataclass(frozen=True, eq=False)
class LockTrace:
    """Per-update record of a lock run (one entry per dither period)"""
    times: np.ndarray
    phase: np.ndarray
    phase_error: np.ndarray
    actuator: np.ndarray
    intensity: np.ndarray
    feedback: np.ndarray

    def decimated(self, step: int) -> 'LockTrace':
        step = max(1, int(step))
        return LockTrace(*(getattr(self, name)[::step] for name in
                           ('times', 'phase', 'phase_error', 'actuator', 'intensity', 'feedback')))


@dataclass
class LockReport:
    acquired: bool
    acquisition_time_s: Optional[float]
    residual_phase_rms_rad: Optional[float]
    rail_events: int
    target_phi_rad: float
    reference_phase_rad: float
    error_channel: str
    acquisition_times_s: List[float] = field(default_factory=list)
    missed_acquisitions: int = 0
    max_acquisition_time_s: Optional[float] = None
    mean_locked_output: Optional[float] = None
    final_output: float = 0.0
    lock_lost: bool = False
    trace: Optional[LockTrace] = field(default=None, repr=False)

    def to_dict(self) -> Dict[str, Any]:
        """JSON-ready summary; per-gate times are aggregated"""
        times = self.acquisition_times_s
        return {
            'acquired': self.acquired,
            'acquisition_time_s': self.acquisition_time_s,
            'residual_phase_rms_rad': self.residual_phase_rms_rad,
            'rail_events': self.rail_events,
            'target_phi_rad': self.target_phi_rad,
            'reference_phase_rad': self.reference_phase_rad,
            'error_channel': self.error_channel,
            'gate_acquisitions': len(times),
            'mean_acquisition_time_s': float(np.mean(times)) if times else None,
            'max_acquisition_time_s': self.max_acquisition_time_s,
            'missed_acquisitions': self.missed_acquisitions,
            'mean_locked_output': self.mean_locked_output,
            'final_output': self.final_output,
            'lock_lost': self.lock_lost,
        }


# ==================================
# SIGNAL PROCESSING
# ==================================

def demodulate(signal: TimeSeries, cfg: DemodConfig) -> TimeSeries:
    """
    Lock-in demodulation of a sampled detector signal

    The signal is mixed with sin(2 pi f_d t + reference_phase), averaged over
    one dither period (which nulls the dither harmonics) and passed through
    the single-pole low-pass filter.

    Args:
        signal: detector record, at least MIN_SAMPLES_PER_PERIOD samples per dither period
        cfg: demodulator settings

    Returns:
        Demodulated error signal on the same time grid

    Raises:
        UndersampledError: the record does not resolve the dither frequency
    """
    per_period = 1.0 / (signal.dt * cfg.dither_hz)
    if per_period < MIN_SAMPLES_PER_PERIOD:
        raise UndersampledError(
            f"{per_period:.1f} samples per dither period, need at least {MIN_SAMPLES_PER_PERIOD}"
        )
    t = signal.times()
    mixed = signal.samples * np.sin(TWO_PI * cfg.dither_hz * t + cfg.reference_phase)

    n = int(round(per_period))
    averaged = lfilter(np.full(n, 1.0 / n), [1.0], mixed)
    alpha = cfg.alpha(signal.dt)
    filtered = lfilter([alpha], [1.0, alpha - 1.0], averaged)
    return TimeSeries(signal.t0, signal.dt, filtered)


def calibrate_reference_phase(series: TimeSeries, dither_hz: float, nominal: float = 0.0,
                              min_relative: float = 1e-3) -> float:
    """
    One-shot I/Q estimate of the demodulation phase

    The dither component of the record is measured in quadrature; of the two
    phases that maximize the demodulated magnitude the one closest to nominal
    is returned. A record without a usable dither component returns nominal.
    """
    psi, usable = _dither_phase(series, dither_hz, min_relative)
    if not usable:
        logger.warning("No dither component for reference calibration; keeping nominal phase")
        return nominal
    candidates = (psi, psi + math.pi)
    best = min(candidates, key=lambda c: abs(math.remainder(c - nominal, TWO_PI)))
    return wrap_phase(best)


def _dither_phase(series: TimeSeries, dither_hz: float, min_relative: float) -> Tuple[float, bool]:
    """Phase psi of the dither component S sin(x + psi), and whether it stands above min_relative * DC"""
    n = int(round(1.0 / (series.dt * dither_hz)))
    if n < MIN_SAMPLES_PER_PERIOD:
        raise UndersampledError(f"{n} samples per dither period, need at least {MIN_SAMPLES_PER_PERIOD}")
    m = (len(series) // n) * n
    if m == 0:
        raise UndersampledError("record shorter than one dither period")

    x = TWO_PI * dither_hz * series.times()[:m]
    s = series.samples[:m]
    dc = float(np.mean(s))
    s = s - dc
    i = float(np.mean(s * np.sin(x)))
    q = float(np.mean(s * np.cos(x)))
    amplitude = 2.0 * math.hypot(i, q)
    return math.atan2(q, i), amplitude > min_relative * max(abs(dc), 1e-300)


def dither_error_gain(eta: float, v: float, i_in: float, depth: float,
                      responsivity: float = 1.0) -> float:
    """Error-signal slope per radian at a fringe extremum, (eta V I / 2) J1(depth)"""
    return 0.5 * eta * v * i_in * float(jv(1, depth)) * responsivity


def diffraction_amplitudes(abi: AbiConfig, drive1: RfDrive, drive2: RfDrive,
                           t) -> Tuple[np.ndarray, np.ndarray]:
    """Diffraction amplitudes (r1, r2) of both AOMs following their RF gate levels"""
    out = []
    for aom, drive in ((abi.aom1, drive1), (abi.aom2, drive2)):
        level = np.asarray(gate_level(drive.gate, t), dtype=float)
        if not aom.rf_on:
            level = np.zeros_like(level)
        out.append(np.sqrt(level * aom.r ** 2 + (1.0 - level) * aom.off_leakage_power))
    return out[0], out[1]


def wrap_phase(phi):
    """Wrap to (-pi, pi]"""
    wrapped = math.pi - np.mod(math.pi - np.asarray(phi, dtype=float), TWO_PI)
    return float(wrapped) if np.ndim(phi) == 0 else wrapped


# ==================================
# PID
# ==================================

def pid_step(error: float, cfg: PidConfig, state: LockState, dt: float) -> float:
    """
    One discrete PID update

    u = I + kp e + kd de/dt with e = error - setpoint; the integrator is
    clamped to the output limits. A held state returns its frozen output and
    leaves the integrator untouched.
    """
    if not dt > 0:
        raise ConfigError(f"PID dt must be positive, got {dt}")
    if state.held:
        return state.last_output_v

    e = error - cfg.setpoint
    de = 0.0 if state.prev_error is None else (e - state.prev_error) / dt
    lo, hi = cfg.output_limits
    integ = min(max(state.integrator + cfg.ki * e * dt, lo), hi)
    u = integ + cfg.kp * e + cfg.kd * de

    railed = u < lo or u > hi
    if railed:
        u = min(max(u, lo), hi)
        if not state.railed:
            state.rail_events += 1
            logger.debug(f"PID output railed at {u:.3f}")
    state.railed = railed
    state.integrator = integ
    state.prev_error = e
    state.last_output_v = u
    state.error_history.append(e)
    return u


# ==================================
# CONTROLLER
# ==================================

class LockController:
    """Runs the dither lock of one plant towards a target overall phase"""

    def __init__(self, plant: LockPlant, cfg: LockConfig, target_phi: float):
        d1 = plant.drive1
        if d1.dither_depth <= 0 or d1.dither_hz <= 0:
            raise ConfigError("dither lock needs a phase dither on RF1")
        if not math.isclose(d1.dither_hz, cfg.demod.dither_hz, rel_tol=1e-9):
            raise ConfigError(
                f"demodulator frequency {cfg.demod.dither_hz} Hz differs from RF1 dither {d1.dither_hz} Hz"
            )
        self.plant = plant
        self.cfg = cfg
        self.target_phi = float(target_phi)
        self.dt = 1.0 / cfg.demod.dither_hz
        self.depth = d1.dither_depth
        self.j0 = float(jv(0, self.depth))
        self.j1 = float(jv(1, self.depth))
        self.port_sign = 1.0 if plant.port == Port.E else -1.0
        self.use_dither = abs(math.cos(self.target_phi)) >= cfg.quadrature_band
        self.state = LockState(error_history=deque(maxlen=cfg.history_len))
        self.pid = cfg.pid
        self.reference_phase = cfg.demod.reference_phase
        self.polarity = 1.0

        lo, hi = cfg.pid.output_limits
        if cfg.actuator == 'pzt':
            r_lo, r_hi = plant.pzt.range_v
            lo, hi = max(lo, r_lo), min(hi, r_hi)
            if not lo < hi:
                raise ConfigError("PID output limits do not overlap the PZT range")
        self.output_limits = (lo, hi)

    # ---------------- plant helpers ----------------

    @property
    def actuator_gain(self) -> float:
        return self.plant.pzt.gain if self.cfg.actuator == 'pzt' else 1.0

    def _actuator_phase(self, u: float) -> Tuple[float, float]:
        """Phase added by the actuator and the walk-off visibility factor"""
        if self.cfg.actuator == 'pzt':
            pzt = self.plant.pzt
            x = u / pzt.walkoff_scale_v
            return pzt.gain * u, math.exp(-x * x)
        return u, 1.0

    def _base_phase(self, t: np.ndarray) -> np.ndarray:
        """Overall phase without the actuator: path, drive phases, detuning and drift"""
        p = self.plant
        detuning = TWO_PI * (p.drive1.carrier_hz - p.drive2.carrier_hz)
        static = p.abi.path_phase - p.drive1.phase0 + p.drive2.phase0
        return static + detuning * t + drift_path(p.drift, self.dt, len(t))

    def _channel(self, phi: float, eta_e: float, v_e: float, light: float) -> Tuple[float, float]:
        """Noise-free (error channel value, optical port intensity) for one dither period"""
        p = self.plant
        half = 0.5 * eta_e * light * p.i_in
        i_e = half * (1.0 + v_e * self.j0 * math.cos(phi))
        port = i_e if self.port_sign > 0 else p.abi.efficiency * light * p.i_in - i_e
        if self.use_dither:
            y = self.port_sign * half * v_e * self.j1 * math.cos(self.reference_phase) * math.sin(phi)
        else:
            y = port
        return y * p.pd.responsivity, port

    # ---------------- engage ----------------

    def _calibrate_reference(self, phi0: float) -> None:
        """Quadrature scan at engage: measure the dither response at phi0, then phi0 + pi/2"""
        p = self.plant
        ns = self.cfg.samples_per_period
        periods = 8
        x = TWO_PI * np.arange(periods * ns) / ns
        nominal = self.cfg.demod.reference_phase
        ref = nominal
        for bias in (phi0, phi0 + 0.5 * math.pi):
            i_e, i_f = abi_intensities(
                0.0, math.sqrt(p.i_in), p.abi.aom1.r, p.abi.aom2.r,
                self.depth * np.sin(x), 0.0, bias,
                visibility=p.abi.visibility, efficiency=p.abi.efficiency,
            )
            samples = (i_e if self.port_sign > 0 else i_f) * p.pd.responsivity
            psi, usable = _dither_phase(TimeSeries(0.0, self.dt / ns, samples), p.drive1.dither_hz, 1e-3)
            if usable:
                best = min((psi, psi + math.pi), key=lambda c: abs(math.remainder(c - nominal, TWO_PI)))
                ref = wrap_phase(best)
                break
        else:
            logger.warning("Reference calibration found no dither response; keeping nominal phase")
        self.reference_phase = ref
        logger.debug(f"Demodulation reference phase calibrated to {ref:.4f} rad")

    def _set_polarity(self, eta_e: float, v_e: float) -> None:
        p = self.plant
        phi = self.target_phi
        amp = 0.5 * eta_e * p.i_in * v_e * p.pd.responsivity
        if self.use_dither:
            slope = self.port_sign * amp * self.j1 * math.cos(self.reference_phase) * math.cos(phi)
        else:
            slope = -self.port_sign * amp * self.j0 * math.sin(phi)
        slope *= self.actuator_gain
        if abs(slope) < 1e-15:
            raise ConfigError("the error signal has no slope at the target phase; check reference_phase")
        self.polarity = -1.0 if slope > 0 else 1.0

        y_target, _ = self._channel(phi, eta_e, v_e, 1.0)
        self.pid = replace(self.cfg.pid, setpoint=self.polarity * y_target,
                           output_limits=self.output_limits)

    # ---------------- run ----------------

    def run(self) -> LockReport:
        cfg, p = self.cfg, self.plant
        T = self.dt
        n = int(round(cfg.duration_s / T))
        if n < 1:
            raise ConfigError("lock duration shorter than one dither period")
        t = p.t0 + np.arange(n) * T

        base = self._base_phase(t)
        r1, r2 = diffraction_amplitudes(p.abi, p.drive1, p.drive2, t)
        eta_e, v_e = fringe_parameters_from(r1, r2, p.abi.efficiency, p.abi.visibility)
        light = np.asarray(gate_level(p.light_gate, t), dtype=float)
        fb = np.asarray(gate_state(cfg.feedback_enable, t), dtype=bool)

        lo, hi = self.output_limits
        u0 = min(max(p.bias_v, lo), hi)
        _, w0 = self._actuator_phase(u0)
        nominal_eta, nominal_v = fringe_parameters_from(
            p.abi.aom1.r, p.abi.aom2.r, p.abi.efficiency, p.abi.visibility
        )
        nominal_eta, nominal_v = float(nominal_eta), float(nominal_v) * w0
        if cfg.auto_reference_phase and self.use_dither:
            self._calibrate_reference(float(base[0]) + self._actuator_phase(u0)[0])
        self._set_polarity(nominal_eta, nominal_v)
        self.state.engage(u0)

        logger.info(
            f"Locking to phi={self.target_phi:.3f} rad via {cfg.actuator} "
            f"({'dither' if self.use_dither else 'side-of-fringe'} error, {cfg.sim_mode} path, {n} updates)"
        )

        if cfg.sim_mode == 'envelope':
            phase, act, inten = self._run_envelope(base, eta_e, v_e, light, fb)
        else:
            phase, act, inten = self._run_field(base, r1, r2, light, fb)

        p.t0 = float(t[-1] + T)
        p.bias_v = self.state.last_output_v

        trace = LockTrace(t, phase, wrap_phase(phase - self.target_phi), act, inten, fb)
        report = self._analyse(trace)
        if not report.acquired:
            logger.warning(f"Lock to {self.target_phi:.3f} rad not acquired within {cfg.acquisition_timeout_s} s")
            raise NoAcquisition(f"no lock acquisition within {cfg.acquisition_timeout_s} s", report)
        if report.lock_lost:
            logger.warning("Lock lost: residual phase exceeded the loss threshold")
            raise LockLost(
                f"residual phase above {cfg.lost_threshold_rad} rad for more than {cfg.lost_interval_s} s",
                report,
            )
        if report.rail_events:
            logger.warning(f"Actuator railed {report.rail_events} time(s) during the lock")
        return report

    def _noise(self, size) -> Optional[np.ndarray]:
        p = self.plant
        if p.pd.noise_sigma == 0.0:
            return None
        if p.rng is None:
            raise ConfigError("a noisy detector needs a random stream")
        samples_per_period = p.pd.sample_hz * self.dt
        if self.cfg.sim_mode == 'field':
            sigma = p.pd.noise_sigma * math.sqrt(samples_per_period / self.cfg.samples_per_period)
        elif self.use_dither:
            sigma = p.pd.noise_sigma * math.sqrt(0.5 / samples_per_period)
        else:
            sigma = p.pd.noise_sigma / math.sqrt(samples_per_period)
        return p.rng.normal(0.0, sigma, size=size)

    def _update(self, y: float, enabled: bool, lp: float, alpha: float) -> float:
        lp += alpha * (y - lp)
        state = self.state
        state.held = not enabled
        if enabled:
            pid_step(self.polarity * lp, self.pid, state, self.dt)
            if self.cfg.actuator == 'rf2':
                self._unwrap()
        return lp

    def _unwrap(self) -> None:
        """Keep the RF2 phase register inside (-pi, pi]; a 2 pi step is invisible to the optics"""
        state = self.state
        if state.integrator > math.pi:
            state.integrator -= TWO_PI
            state.last_output_v -= TWO_PI
        elif state.integrator <= -math.pi:
            state.integrator += TWO_PI
            state.last_output_v += TWO_PI

    def _run_envelope(self, base, eta_e, v_e, light, fb):
        n = len(base)
        alpha = self.cfg.demod.alpha(self.dt)
        noise = self._noise(n)
        noise_l = noise.tolist() if noise is not None else None
        base_l, eta_l, v_l, light_l, fb_l = (a.tolist() for a in (base, eta_e, v_e, light, fb))

        phase = np.empty(n)
        act = np.empty(n)
        inten = np.empty(n)
        lp = 0.0
        for k in range(n):
            u = self.state.last_output_v
            dphi, w = self._actuator_phase(u)
            phi = base_l[k] + dphi
            y, port = self._channel(phi, eta_l[k], v_l[k] * w, light_l[k])
            if noise_l is not None:
                y += noise_l[k]
            lp = self._update(y, fb_l[k], lp, alpha)
            phase[k] = phi
            act[k] = u
            inten[k] = port
        return phase, act, inten

    def _run_field(self, base, r1, r2, light, fb):
        p = self.plant
        n = len(base)
        ns = self.cfg.samples_per_period
        alpha = self.cfg.demod.alpha(self.dt)
        x = TWO_PI * np.arange(ns) / ns
        theta1 = self.depth * np.sin(x)
        reference = np.sin(x + self.reference_phase)
        noise = self._noise((n, ns))
        rf2 = self.cfg.actuator == 'rf2'

        phase = np.empty(n)
        act = np.empty(n)
        inten = np.empty(n)
        lp = 0.0
        for k in range(n):
            u = self.state.last_output_v
            dphi, w = self._actuator_phase(u)
            phi = base[k] + dphi
            path = base[k] if rf2 else phi
            i_e, i_f = abi_intensities(
                0.0, math.sqrt(p.i_in * light[k]), r1[k], r2[k], theta1,
                u if rf2 else 0.0, path,
                visibility=p.abi.visibility * w, efficiency=p.abi.efficiency,
            )
            optical = i_e if self.port_sign > 0 else i_f
            sig = optical * p.pd.responsivity
            if noise is not None:
                sig = sig + noise[k]
            if self.use_dither:
                y = float(np.dot(sig, reference)) / ns
            else:
                y = float(np.mean(sig))
            lp = self._update(y, bool(fb[k]), lp, alpha)
            phase[k] = phi
            act[k] = u
            inten[k] = float(np.mean(optical))
        return phase, act, inten

    # ---------------- analysis ----------------

    def _analyse(self, trace: LockTrace) -> LockReport:
        cfg = self.cfg
        T = self.dt
        bad = np.abs(trace.phase_error) >= cfg.acquire_threshold_rad
        fb = trace.feedback
        n = len(fb)

        edges = np.diff(np.concatenate(([False], fb, [False])).astype(np.int8))
        starts = np.flatnonzero(edges == 1)
        ends = np.flatnonzero(edges == -1)

        acquired_mask = np.zeros(n, dtype=bool)
        times: List[float] = []
        missed = 0
        first_acq: Optional[int] = None
        first_window_ok = False
        for i, (s, e) in enumerate(zip(starts, ends)):
            window_bad = np.flatnonzero(bad[s:e])
            if window_bad.size and window_bad[-1] == e - s - 1:
                missed += 1
                continue
            idx = s + (int(window_bad[-1]) + 1 if window_bad.size else 0)
            acq_time = (idx - s) * T
            times.append(acq_time)
            acquired_mask[idx:e] = True
            if first_acq is None:
                first_acq = idx
            if i == 0 and acq_time <= cfg.acquisition_timeout_s:
                first_window_ok = True

        residual = None
        mean_out = None
        lock_lost = False
        if first_acq is not None:
            after = fb.copy()
            after[:first_acq] = False
            if after.any():
                residual = float(np.sqrt(np.mean(trace.phase_error[after] ** 2)))
            lost = after & (np.abs(trace.phase_error) > cfg.lost_threshold_rad)
            lost_edges = np.diff(np.concatenate(([0], lost.astype(np.int8), [0])))
            runs = np.flatnonzero(lost_edges == -1) - np.flatnonzero(lost_edges == 1)
            lock_lost = bool(runs.size and runs.max() * T >= cfg.lost_interval_s)
        if acquired_mask.any():
            mean_out = float(np.mean(trace.intensity[acquired_mask]))

        return LockReport(
            acquired=first_window_ok,
            acquisition_time_s=times[0] if times and first_window_ok else None,
            residual_phase_rms_rad=residual,
            rail_events=self.state.rail_events,
            target_phi_rad=self.target_phi,
            reference_phase_rad=self.reference_phase,
            error_channel='dither' if self.use_dither else 'dc',
            acquisition_times_s=times,
            missed_acquisitions=missed,
            max_acquisition_time_s=max(times) if times else None,
            mean_locked_output=mean_out,
            final_output=self.state.last_output_v,
            lock_lost=lock_lost,
            trace=trace,
        )


def lock_to_phase(target_phi: float, plant: LockPlant, cfg: LockConfig) -> LockReport:
    """
    Lock the overall phase of a running plant to target_phi

    Extrema (0, pi) lock on the zero of the dither error; intermediate phases
    lock on the computed error value at the target, switching to the
    side-of-fringe intensity near quadrature.

    Raises:
        NoAcquisition: the first feedback window does not acquire within the timeout
        LockLost: the residual exceeds the loss threshold for a sustained interval
    """
    return LockController(plant, cfg, target_phi).run()
