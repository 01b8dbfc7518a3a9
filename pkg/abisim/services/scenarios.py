"""
Scenario engine

Composes optics, drives, noise, detectors, the lock and the fitter into the
five experiments a scenario file can describe:

    beating_pd       two detuned drives, photodiode trace, fringe fit
    beating_spd      slow beat counted by the single-photon detector
    scan_and_lock    PZT scan of the fringe, then locks to maximum and minimum
    chopped_switch   gated RF with synchronized feedback, isolation measurement
    frequency_tuner  alternating locking reference and coherent light
"""

import copy
import logging
import math
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy.special import jv
from tqdm import tqdm

from abisim.config.scenario import (
    ScenarioConfig, build_config, config_to_dict, has_field, parse_scalar, set_path,
)

from .detectors import CountSeries, PdModel, SpdModel, TimeSeries, pd_trace, spd_count_trace
from .drive import (
    GateEnvelope, RfDrive, carrier_theta, detuning_rad_s, beat_hz, gate_level, gate_state,
    make_switch_sequence, make_tuner_sequence,
)
from .errors import AbiSimError, ConfigError, FitError, LockError, ScenarioError
from .fitting import FitMode, FitResult, fit_fringe
from .lock import (
    DemodConfig, LockConfig, LockPlant, LockReport, PidConfig, diffraction_amplitudes,
    lock_to_phase, wrap_phase,
)
from .noise import DriftModel, PztModel, drift_path, walkoff_factor
from .optics import (
    AbiConfig, AomConfig, FrequencyLabel, Port, PortField, abi_intensities, aom_scatter,
    fringe_parameters, fringe_parameters_from, observed_intensity, overall_phase, vacuum,
)
from .streams import RandomStreams, replica_seeds

logger = logging.getLogger(__name__)

LOCK_KINDS = ('scan_and_lock', 'chopped_switch', 'frequency_tuner')


# ==================================
# RESULTS
# ==================================

@dataclass
class ScenarioResult:
    """
    Output of one scenario run

    Attributes:
        kind: scenario kind
        summary: JSON-ready headline metrics and reports
        trace: time_s,value table, if the scenario records one
        counts: window_index,counts table, if the scenario counts photons
        failures: lock or fit failures recorded instead of aborting
    """
    kind: str
    summary: Dict[str, Any]
    trace: Optional[pd.DataFrame] = None
    counts: Optional[pd.DataFrame] = None
    failures: List[str] = field(default_factory=list)


@dataclass(frozen=True)
class Measurement:
    """Counts (or power) collected over an exposure, with a known background to subtract"""
    counts: float
    exposure_s: float = 1.0
    background: float = 0.0

    @property
    def rate(self) -> float:
        return max(self.counts - self.background, 0.0) / self.exposure_s


@dataclass
class IsolationResult:
    on_rate: float
    off_rate: float
    attenuation_db: float
    isolation_db: Optional[float]
    lower_bound_db: Optional[float] = None

    @property
    def is_lower_bound(self) -> bool:
        return self.isolation_db is None

    def to_dict(self) -> Dict[str, Any]:
        return {
            'on_rate': self.on_rate,
            'off_rate': self.off_rate,
            'attenuation_db': self.attenuation_db,
            'isolation_db': self.isolation_db,
            'lower_bound_db': self.lower_bound_db,
        }


# ==================================
# ISOLATION
# ==================================

def isolation_db(on: Measurement, off: Measurement, attenuation_db: float = 0.0) -> IsolationResult:
    """
    Isolation from an RF-on and an RF-off measurement

    The on measurement is taken behind a calibrated attenuator, which is added
    back: isolation = 10 log10(on_rate / off_rate) + attenuation_db. With no
    off counts the result is a lower bound computed for a single count.

    Raises:
        ConfigError: non-positive exposure
        ScenarioError: no on-state signal
    """
    if not on.exposure_s > 0 or not off.exposure_s > 0:
        raise ConfigError("isolation measurements need a positive exposure")
    on_rate, off_rate = on.rate, off.rate
    if on_rate <= 0.0:
        raise ScenarioError("no signal in the RF-on measurement")
    if off_rate > 0.0:
        value = 10.0 * math.log10(on_rate / off_rate) + attenuation_db
        return IsolationResult(on_rate, off_rate, attenuation_db, value)
    bound = 10.0 * math.log10(on_rate * off.exposure_s) + attenuation_db
    logger.info(f"No counts in the RF-off measurement; isolation > {bound:.1f} dB")
    return IsolationResult(on_rate, off_rate, attenuation_db, None, bound)


def leakage_for_isolation(r: float, db: float) -> float:
    """Off-state diffracted power giving `db` of on/off ratio for an AOM with amplitude r"""
    return r * r * 10.0 ** (-db / 10.0)


def composed_leakage_isolation_db(aom1: AomConfig, aom2: AomConfig) -> float:
    """Double-diffraction isolation from per-AOM leakage, 10 log10(r1^2 r2^2 / (L1 L2))"""
    if aom1.off_leakage_power == 0.0 or aom2.off_leakage_power == 0.0:
        return math.inf
    return 10.0 * math.log10((aom1.r * aom2.r) ** 2 / (aom1.off_leakage_power * aom2.off_leakage_power))


def double_diffraction_power(abi: AbiConfig, i_in: float = 1.0, rf_on: bool = True) -> float:
    """
    Power reaching the output through both diffractions, b -> d -> c

    The undiffracted arm is blocked; with the RF off each AOM diffracts only
    its leakage.
    """
    aom1 = replace(abi.aom1, rf_on=rf_on)
    aom2 = replace(abi.aom2, rf_on=rf_on)
    label = FrequencyLabel(0, aom1.rf_frequency)
    arm_c, arm_d = aom_scatter(vacuum(Port.A, label.shifted(1)),
                               PortField(Port.B, label, complex(math.sqrt(i_in))), aom1)
    a2 = PortField(Port.A, arm_d.frequency, arm_d.amplitude)
    out_c, _ = aom_scatter(a2, vacuum(Port.B, arm_c.frequency), aom2)
    return abi.efficiency * out_c.intensity


def direct_pass_isolation_db(eta: float, v: float) -> float:
    """Suppression at the locked fringe minimum, -10 log10(eta (1 - V) / 2)"""
    floor = 0.5 * eta * (1.0 - v)
    if floor <= 0.0:
        return math.inf
    return -10.0 * math.log10(floor)


def measure_isolation(abi: AbiConfig, spd: SpdModel, photon_rate: float, attenuation_db: float,
                      exposure_s: float, rng: np.random.Generator) -> IsolationResult:
    """Count the double-diffracted light with the RF on (attenuated) and off, dark counts subtracted"""
    spd = replace(spd, enable_gate=GateEnvelope())
    n_windows = max(1, int(round(exposure_s / spd.window_s)))
    exposure = n_windows * spd.window_s
    dark = spd.dark_prob * spd.triggers_per_window * n_windows
    slices = n_windows * spd.slices_per_window

    measured = []
    for rf_on, scale in ((True, 10.0 ** (-attenuation_db / 10.0)), (False, 1.0)):
        rate = photon_rate * double_diffraction_power(abi, 1.0, rf_on) * scale
        counts = spd_count_trace(np.full(slices, rate), spd, rng)
        measured.append(Measurement(float(counts.counts.sum()), exposure, dark))
    return isolation_db(measured[0], measured[1], attenuation_db)


# ==================================
# COMPOSITION
# ==================================

@contextmanager
def _section(path: str):
    """Attach a config path to ConfigErrors raised while building one section"""
    try:
        yield
    except ConfigError as e:
        if e.path is None:
            raise ConfigError(str(e), path) from e
        raise


@dataclass
class Prepared:
    """Service objects built from a ScenarioConfig"""
    cfg: ScenarioConfig
    abi: AbiConfig
    drive1: RfDrive
    drive2: RfDrive
    pzt: PztModel
    pd: PdModel
    spd: SpdModel
    pd_port: Port
    spd_port: Port
    lock: Optional[LockConfig] = None


def _gate(section) -> GateEnvelope:
    return GateEnvelope(section.repetition_hz, section.duty, section.phase_offset_s, section.ramp_s)


def prepare(cfg: ScenarioConfig) -> Prepared:
    """
    Build and cross-check every service object a scenario needs

    Raises:
        ConfigError: a section violates its invariants (the message names it)
    """
    if not cfg.scenario.duration_s > 0:
        raise ConfigError("must be positive", 'scenario.duration_s')
    if cfg.source.i_in < 0:
        raise ConfigError("must be >= 0", 'source.i_in')

    with _section('drive1'):
        drive1 = RfDrive(cfg.drive1.carrier_hz, cfg.drive1.phase0, cfg.drive1.dither_hz,
                         cfg.drive1.dither_depth, _gate(cfg.drive1.gate))
    with _section('drive2'):
        drive2 = RfDrive(cfg.drive2.carrier_hz, cfg.drive2.phase0, cfg.drive2.dither_hz,
                         cfg.drive2.dither_depth, _gate(cfg.drive2.gate))

    label_rf = 2.0 * math.pi * drive1.carrier_hz
    aoms = []
    for name in ('aom1', 'aom2'):
        section = getattr(cfg, name)
        with _section(name):
            if not 0.0 <= section.diffraction_efficiency <= 1.0:
                raise ConfigError("diffraction_efficiency must lie in [0, 1]")
            r = math.sqrt(section.diffraction_efficiency)
            aoms.append(AomConfig(r, section.theta, label_rf, True,
                                  leakage_for_isolation(r, section.off_leakage_db)))
    with _section('interferometer'):
        ifm = cfg.interferometer
        abi = AbiConfig(aoms[0], aoms[1], ifm.path_phase, ifm.visibility, ifm.efficiency)
    with _section('pzt'):
        pzt = PztModel(cfg.pzt.gain, tuple(cfg.pzt.range_v), cfg.pzt.walkoff_scale_v, ifm.visibility)
    with _section('pd'):
        pd_model = PdModel(cfg.pd.responsivity, cfg.pd.noise_sigma, cfg.pd.sample_hz)
    with _section('spd'):
        s = cfg.spd
        spd = SpdModel(s.efficiency, s.dark_prob, s.trigger_hz, s.window_s,
                       _gate(s.enable_gate), s.slices_per_window)

    lock_cfg = None
    if cfg.kind in LOCK_KINDS:
        lk = cfg.lock
        if drive1.dither_depth <= 0 or drive1.dither_hz <= 0:
            raise ConfigError("lock scenarios need a phase dither on RF1", 'drive1.dither_hz')
        with _section('lock'):
            lock_cfg = LockConfig(
                demod=DemodConfig(drive1.dither_hz, lk.demod.lowpass_cutoff_hz, lk.demod.reference_phase),
                pid=PidConfig(lk.pid.kp, lk.pid.ki, lk.pid.kd, 0.0, tuple(lk.pid.output_limits)),
                actuator=lk.actuator,
                sim_mode=cfg.scenario.sim_mode,
                duration_s=cfg.scenario.duration_s,
                samples_per_period=lk.samples_per_period,
                auto_reference_phase=lk.auto_reference_phase,
                quadrature_band=lk.quadrature_band,
                acquire_threshold_rad=lk.acquire_threshold_rad,
                lost_threshold_rad=lk.lost_threshold_rad,
                lost_interval_s=lk.lost_interval_s,
                acquisition_timeout_s=lk.acquisition_timeout_s,
            )
        if lk.trace_decimation < 1:
            raise ConfigError("must be >= 1", 'lock.trace_decimation')

    if cfg.kind == 'beating_spd':
        if spd.enable_gate.repetition_hz > 0 or spd.enable_gate.duty == 0:
            raise ConfigError("beating_spd needs a static, enabled detector gate", 'spd.enable_gate')
        if cfg.source.photon_rate <= 0 and cfg.source.peak_counts_per_trigger <= 0:
            raise ConfigError("beating_spd needs photon_rate or peak_counts_per_trigger", 'source.photon_rate')
    if cfg.kind == 'frequency_tuner' and cfg.source.photon_rate <= 0:
        raise ConfigError("the coherent light needs a positive photon rate", 'source.photon_rate')
    if cfg.fit.replicas < 1:
        raise ConfigError("must be >= 1", 'fit.replicas')

    return Prepared(cfg, abi, drive1, drive2, pzt, pd_model, spd,
                    Port(cfg.pd.port), Port(cfg.spd.port), lock_cfg)


def port_intensities(prep: Prepared, t, path_phase, mode: str, i_in: float = 1.0,
                     visibility_factor=1.0, dither_average: bool = False):
    """
    Output intensities (I_e, I_f) for the b input at times t

    Args:
        prep: prepared scenario
        t: sample times
        path_phase: arm phase at each sample (drift and actuator included)
        mode: 'envelope' evaluates the fringe in closed form, 'field' propagates the fields
        i_in: intensity on port b
        visibility_factor: extra visibility factor (PZT walk-off), scalar or per sample
        dither_average: replace the dither by its J0 contrast loss (envelope only)
    """
    d1, d2 = prep.drive1, prep.drive2
    contrast = 1.0
    if dither_average:
        contrast = float(jv(0, d1.dither_depth) * jv(0, d2.dither_depth))
        d1 = replace(d1, dither_depth=0.0)
        d2 = replace(d2, dither_depth=0.0)
    theta1 = carrier_theta(d1, prep.drive1.carrier_hz, t)
    theta2 = carrier_theta(d2, prep.drive1.carrier_hz, t)
    r1, r2 = diffraction_amplitudes(prep.abi, prep.drive1, prep.drive2, t)
    vis = prep.abi.visibility * np.asarray(visibility_factor, dtype=float)
    eff = prep.abi.efficiency

    if mode == 'field':
        if dither_average:
            raise ScenarioError("the field path simulates the dither explicitly")
        return abi_intensities(0.0, math.sqrt(i_in), r1, r2, theta1, theta2, path_phase, vis, eff)
    eta_e, v_e = fringe_parameters_from(r1, r2, eff, vis)
    phi = overall_phase(path_phase, theta1, theta2)
    i_e = observed_intensity(eta_e, v_e * contrast, 0.0, 0.0, phi, i_in)
    return i_e, eff * i_in - i_e


def path_from_overall(prep: Prepared, t, phi):
    """Arm phase that yields the overall phase phi at times t, dither excluded"""
    theta1 = carrier_theta(replace(prep.drive1, dither_depth=0.0), prep.drive1.carrier_hz, t)
    theta2 = carrier_theta(replace(prep.drive2, dither_depth=0.0), prep.drive1.carrier_hz, t)
    return np.asarray(phi) + theta1 - theta2


def energy_audit(prep: Prepared, t, path_phase, visibility_factor=1.0) -> Dict[str, float]:
    """Time-averaged (I_e + I_f) / (eta I_in) from the field path, and its worst sample"""
    eff = prep.abi.efficiency
    if eff == 0.0:
        return {'mean_ratio': None, 'max_deviation': None}
    i_e, i_f = port_intensities(prep, t, path_phase, 'field', 1.0, visibility_factor)
    ratio = (np.asarray(i_e) + np.asarray(i_f)) / eff
    return {'mean_ratio': float(np.mean(ratio)), 'max_deviation': float(np.max(np.abs(ratio - 1.0)))}


def _fringe_reference(prep: Prepared, port: Port) -> Dict[str, float]:
    """Configured (V, eta, phi) of the fringe on one port, for comparison with a fit"""
    eta_e, v_e = fringe_parameters(prep.abi)
    phi = overall_phase(prep.abi.path_phase, prep.drive1.phase0, prep.drive2.phase0)
    if port == Port.E:
        return {'v': v_e, 'eta': eta_e, 'phi': wrap_phase(phi)}
    eta_f = 2.0 * prep.abi.efficiency - eta_e
    v_f = v_e * eta_e / eta_f if eta_f > 0 else 0.0
    return {'v': v_f, 'eta': eta_f, 'phi': wrap_phase(phi + math.pi)}


def _pick(port: Port, i_e, i_f):
    return i_e if port == Port.E else i_f


def _series_frame(times, values) -> pd.DataFrame:
    return pd.DataFrame({'time_s': np.asarray(times, dtype=float), 'value': np.asarray(values, dtype=float)})


def _counts_frame(counts: CountSeries) -> pd.DataFrame:
    return pd.DataFrame({'window_index': np.arange(len(counts), dtype=np.int64), 'counts': counts.counts})


# ==================================
# BEATING
# ==================================

def _beating_pd(prep: Prepared, seed: int) -> Tuple[TimeSeries, FitResult, Dict[str, Any]]:
    cfg = prep.cfg
    streams = RandomStreams.from_seed(seed)
    n = int(round(cfg.scenario.duration_s * prep.pd.sample_hz))
    if n < 4:
        raise ConfigError("shorter than four photodiode samples", 'scenario.duration_s')
    t = np.arange(n) * prep.pd.dt
    drift = DriftModel(cfg.drift.diffusion, rng=streams.drift)
    path = prep.abi.path_phase + drift_path(drift, prep.pd.dt, n)

    i_e, i_f = port_intensities(prep, t, path, cfg.scenario.sim_mode, cfg.source.i_in)
    trace = pd_trace(_pick(prep.pd_port, i_e, i_f), prep.pd, streams.pd)
    # refit on the sample times exactly as a written trace would be read back
    series = TimeSeries.from_times(trace.times(), trace.samples)
    fit = fit_fringe(series, cfg.source.i_in * prep.pd.responsivity, detuning_rad_s(prep.drive1, prep.drive2),
                     FitMode(cfg.fit.mode), max_nfev=cfg.fit.max_nfev, gtol=cfg.fit.gtol)
    extra = {'audit': energy_audit(prep, t, path)}
    return trace, fit, extra


def _photon_rate(prep: Prepared) -> float:
    """Photon rate on port b, from the source or from the requested peak counts per trigger"""
    src = prep.cfg.source
    if src.peak_counts_per_trigger <= 0:
        return src.photon_rate
    eta_e, v_e = fringe_parameters(prep.abi)
    if prep.spd_port == Port.E:
        peak = 0.5 * eta_e * (1.0 + v_e)
    else:
        peak = prep.abi.efficiency - 0.5 * eta_e * (1.0 - v_e)
    if peak <= 0.0:
        raise ConfigError("the fringe never transmits light to the detector", 'source.peak_counts_per_trigger')
    return prep.spd.rate_for_counts_per_trigger(src.peak_counts_per_trigger) / peak


def _beating_spd(prep: Prepared, seed: int) -> Tuple[CountSeries, FitResult, Dict[str, Any]]:
    cfg, spd = prep.cfg, prep.spd
    streams = RandomStreams.from_seed(seed)
    n_windows = int(round(cfg.scenario.duration_s / spd.window_s))
    if n_windows < 4:
        raise ConfigError("shorter than four counting windows", 'scenario.duration_s')
    n = n_windows * spd.slices_per_window
    t = (np.arange(n) + 0.5) * spd.slice_s
    drift = DriftModel(cfg.drift.diffusion, rng=streams.drift)
    path = prep.abi.path_phase + drift_path(drift, spd.slice_s, n)

    rate_in = _photon_rate(prep)
    i_e, i_f = port_intensities(prep, t, path, cfg.scenario.sim_mode, 1.0)
    counts = spd_count_trace(rate_in * _pick(prep.spd_port, i_e, i_f), spd, streams.spd)

    i_counts = rate_in * spd.efficiency * spd.triggers_per_window / spd.trigger_hz
    dark = spd.dark_prob * spd.triggers_per_window
    dw = detuning_rad_s(prep.drive1, prep.drive2)
    mode = FitMode(cfg.fit.mode)
    fit = fit_fringe(counts, i_counts, dw, mode, background=dark,
                     max_nfev=cfg.fit.max_nfev, gtol=cfg.fit.gtol)
    no_dark = fit_fringe(counts, i_counts, dw, mode, background=0.0,
                         max_nfev=cfg.fit.max_nfev, gtol=cfg.fit.gtol)
    extra = {
        'audit': energy_audit(prep, t, path),
        'photon_rate_hz': rate_in,
        'dark_counts_per_window': dark,
        'counts_at_unit_transmission': i_counts,
        'observed_peak_counts_per_trigger': float(counts.counts.max()) / spd.triggers_per_window,
        'dark_contribution_to_v': no_dark.v_hat - fit.v_hat,
    }
    return counts, fit, extra


def _replica_fit(cfg: ScenarioConfig, seed: int) -> Dict[str, Any]:
    prep = prepare(cfg)
    runner = _beating_pd if cfg.kind == 'beating_pd' else _beating_spd
    try:
        _, fit, _ = runner(prep, seed)
    except FitError as e:
        return {'seed': seed, 'error': str(e)}
    return {'seed': seed, **fit.to_dict()}


def monte_carlo_fit(cfg: ScenarioConfig, replicas: int, jobs: int = 1) -> Dict[str, Any]:
    """
    Repeat a beating experiment with independent seeds and aggregate the fits

    Replica k always receives the same child seed of the root seed, so the
    aggregate does not depend on the number of workers.
    """
    if cfg.kind not in ('beating_pd', 'beating_spd'):
        raise ScenarioError(f"Monte-Carlo fits need a beating scenario, got {cfg.kind}")
    seeds = replica_seeds(cfg.scenario.seed, replicas)
    results = Parallel(n_jobs=jobs)(delayed(_replica_fit)(cfg, s) for s in seeds)
    good = [r for r in results if 'error' not in r]
    summary: Dict[str, Any] = {'replicas': replicas, 'failed': replicas - len(good)}
    for name in ('v_hat', 'eta_hat', 'phi_hat'):
        values = np.array([r[name] for r in good])
        summary[f'{name}_mean'] = float(values.mean()) if len(values) else None
        summary[f'{name}_std'] = float(values.std(ddof=1)) if len(values) > 1 else None
    summary['v_hat_values'] = [r['v_hat'] for r in good]
    return summary


def _run_beating(prep: Prepared, jobs: int) -> ScenarioResult:
    cfg = prep.cfg
    if cfg.kind == 'beating_pd':
        trace, fit, extra = _beating_pd(prep, cfg.scenario.seed)
        result = ScenarioResult(cfg.kind, {}, trace=_series_frame(trace.times(), trace.samples))
        port = prep.pd_port
    else:
        counts, fit, extra = _beating_spd(prep, cfg.scenario.seed)
        result = ScenarioResult(cfg.kind, {}, counts=_counts_frame(counts))
        port = prep.spd_port

    summary = {
        'beat_hz': beat_hz(prep.drive1, prep.drive2),
        'delta_omega_rad_s': detuning_rad_s(prep.drive1, prep.drive2),
        'configured': _fringe_reference(prep, port),
        'fit': fit.to_dict(),
        'energy_audit': extra.pop('audit'),
        **extra,
    }
    headline = {'v_hat': fit.v_hat, 'eta_hat': fit.eta_hat, 'phi_hat': fit.phi_hat,
                'residual_rms': fit.residual_rms}
    if cfg.kind == 'beating_spd':
        headline['dark_contribution_to_v'] = extra['dark_contribution_to_v']
    if cfg.fit.replicas > 1:
        mc = monte_carlo_fit(cfg, cfg.fit.replicas, jobs)
        summary['monte_carlo'] = mc
        headline['v_hat_mean'] = mc['v_hat_mean']
    summary['headline'] = headline
    result.summary = summary
    return result


# ==================================
# LOCKED SCENARIOS
# ==================================

def _plant(prep: Prepared, streams: RandomStreams, drift: DriftModel, **kwargs) -> LockPlant:
    cfg = prep.cfg
    opts = dict(abi=prep.abi, drive1=prep.drive1, drive2=prep.drive2, drift=drift, pzt=prep.pzt,
                pd=prep.pd, i_in=cfg.source.i_in, port=prep.pd_port, bias_v=cfg.pzt.bias_v,
                rng=streams.pd)
    opts.update(kwargs)
    return LockPlant(**opts)


def _try_lock(target: float, plant: LockPlant, lock_cfg: LockConfig,
              failures: List[str]) -> Tuple[Optional[LockReport], Optional[str]]:
    """Run one lock; a LockError is recorded and its partial report returned"""
    try:
        return lock_to_phase(target, plant, lock_cfg), None
    except LockError as e:
        failures.append(f"{type(e).__name__}: {e}")
        return e.report, type(e).__name__


def _report_dict(report: Optional[LockReport], error: Optional[str]) -> Dict[str, Any]:
    out = report.to_dict() if report is not None else {}
    out['error'] = error
    return out


def _lock_frame(report: Optional[LockReport], decimation: int, responsivity: float) -> pd.DataFrame:
    if report is None or report.trace is None:
        return _series_frame([], [])
    trace = report.trace.decimated(decimation)
    return _series_frame(trace.times, trace.intensity * responsivity)


def _pzt_scan(prep: Prepared, drift: DriftModel, streams: RandomStreams) -> Tuple[TimeSeries, FitResult]:
    """One triangle period of the PZT scan (up-ramp first) and a fit of the up-ramp"""
    cfg = prep.cfg
    sc = cfg.scan
    field_path = cfg.scenario.sim_mode == 'field'
    rate = prep.pd.sample_hz if field_path else sc.sample_hz
    if not sc.scan_hz > 0 or not rate > 0:
        raise ConfigError("scan rate and sampling rate must be positive", 'scan')
    n = int(round(rate / sc.scan_hz))
    if n < 8:
        raise ConfigError("too few samples per scan period", 'scan.sample_hz')
    dt = 1.0 / rate
    t = np.arange(n) * dt

    tau = np.mod(t * sc.scan_hz, 1.0)
    tri = np.where(tau < 0.5, 4.0 * tau - 1.0, 3.0 - 4.0 * tau)
    requested = cfg.pzt.bias_v + sc.amplitude_v * tri
    lo, hi = prep.pzt.range_v
    volts = np.clip(requested, lo, hi)
    if (volts != requested).any():
        logger.warning("PZT scan exceeds the actuator range; the scan is clipped")

    path = prep.abi.path_phase + drift_path(drift, dt, n) + prep.pzt.gain * volts
    w = walkoff_factor(prep.pzt, volts)
    i_e, i_f = port_intensities(prep, t, path, cfg.scenario.sim_mode, cfg.source.i_in, w,
                                dither_average=not field_path)
    pd_model = prep.pd if field_path else replace(
        prep.pd, sample_hz=rate, noise_sigma=prep.pd.noise_sigma * math.sqrt(rate / prep.pd.sample_hz))
    trace = pd_trace(_pick(prep.pd_port, i_e, i_f), pd_model, streams.pd)

    up = TimeSeries(trace.t0, trace.dt, trace.samples[: n // 2])
    slope = prep.pzt.gain * 4.0 * sc.amplitude_v * sc.scan_hz + detuning_rad_s(prep.drive1, prep.drive2)
    fit = fit_fringe(up, cfg.source.i_in * prep.pd.responsivity, slope, FitMode(cfg.fit.mode),
                     max_nfev=cfg.fit.max_nfev, gtol=cfg.fit.gtol)
    return trace, fit


def _run_scan_and_lock(prep: Prepared) -> ScenarioResult:
    cfg = prep.cfg
    streams = RandomStreams.from_seed(cfg.scenario.seed)
    drift = DriftModel(cfg.drift.diffusion, rng=streams.drift)
    failures: List[str] = []

    scan, scan_fit = _pzt_scan(prep, drift, streams)
    plant = _plant(prep, streams, drift, t0=scan.t0 + scan.duration_s)
    targets = {'max': 0.0, 'min': math.pi} if prep.pd_port == Port.E else {'max': math.pi, 'min': 0.0}

    locks: Dict[str, Any] = {}
    frames = [_series_frame(scan.times(), scan.samples)]
    levels: Dict[str, Optional[float]] = {}
    for name, target in targets.items():
        report, error = _try_lock(target, plant, prep.lock, failures)
        locks[name] = _report_dict(report, error)
        levels[name] = report.mean_locked_output if report is not None and error is None else None
        frames.append(_lock_frame(report, cfg.lock.trace_decimation, prep.pd.responsivity))

    i_in = cfg.source.i_in
    i_max, i_min = levels['max'], levels['min']
    locked: Dict[str, Any] = {'max': i_max, 'min': i_min, 'visibility': None, 'efficiency': None,
                              'switch_efficiency': None, 'direct_pass_isolation_db': None}
    if i_max is not None and i_min is not None and i_max + i_min > 0:
        locked['visibility'] = (i_max - i_min) / (i_max + i_min)
        locked['efficiency'] = (i_max + i_min) / i_in if i_in > 0 else None
        locked['switch_efficiency'] = i_max / i_in if i_in > 0 else None
        locked['direct_pass_isolation_db'] = 10.0 * math.log10(i_in / i_min) if i_min > 0 else None

    summary = {
        'scan_fit': scan_fit.to_dict(),
        'locks': locks,
        'locked': locked,
        'energy_audit': energy_audit(prep, scan.times(), prep.abi.path_phase
                                     + np.linspace(0.0, 2.0 * math.pi, len(scan))),
        'headline': {
            'scan_v_hat': scan_fit.v_hat,
            'scan_eta_hat': scan_fit.eta_hat,
            'lock_visibility': locked['visibility'],
            'switch_efficiency': locked['switch_efficiency'],
            'residual_phase_rms_rad': locks['max'].get('residual_phase_rms_rad'),
        },
    }
    return ScenarioResult(cfg.kind, summary, trace=pd.concat(frames, ignore_index=True), failures=failures)


def _run_chopped_switch(prep: Prepared) -> ScenarioResult:
    cfg = prep.cfg
    tm = cfg.timing
    streams = RandomStreams.from_seed(cfg.scenario.seed)
    failures: List[str] = []

    with _section('timing'):
        seq = make_switch_sequence(tm.repetition_hz, tm.duty, tm.feedback_offset_s, tm.ramp_s)
    gated = replace(prep, drive1=replace(prep.drive1, gate=seq.rf_gate),
                    drive2=replace(prep.drive2, gate=seq.rf_gate),
                    lock=replace(prep.lock, feedback_enable=seq.feedback_enable))
    drift = DriftModel(cfg.drift.diffusion, rng=streams.drift)
    plant = _plant(gated, streams, drift)
    report, error = _try_lock(cfg.lock.target_phi, plant, gated.lock, failures)

    gate_on_mean = gate_off_mean = None
    audit = {'mean_ratio': None, 'max_deviation': None}
    if report is not None and report.trace is not None:
        tr = report.trace
        rf_on = np.asarray(gate_state(seq.rf_gate, tr.times), dtype=bool)
        if rf_on.any():
            gate_on_mean = float(np.mean(tr.intensity[rf_on]))
        if (~rf_on).any():
            gate_off_mean = float(np.mean(tr.intensity[~rf_on]))
        step = max(1, len(tr.times) // 4096)
        t_audit = tr.times[::step]
        audit = energy_audit(gated, t_audit, path_from_overall(gated, t_audit, tr.phase[::step]))

    iso = measure_isolation(prep.abi, prep.spd, cfg.isolation.photon_rate, cfg.isolation.attenuation_db,
                            cfg.isolation.exposure_s, streams.spd)
    composed = composed_leakage_isolation_db(prep.abi.aom1, prep.abi.aom2)
    bias = report.final_output if report is not None and cfg.lock.actuator == 'pzt' else 0.0
    eta_e, v_e = fringe_parameters(prep.abi)
    direct = direct_pass_isolation_db(eta_e, v_e * walkoff_factor(prep.pzt, bias)
                                      if cfg.lock.actuator == 'pzt' else v_e)

    lock = _report_dict(report, error)
    summary = {
        'lock': lock,
        'gate_on_mean_output': gate_on_mean,
        'gate_off_mean_output': gate_off_mean,
        'isolation': iso.to_dict(),
        'composed_leakage_isolation_db': composed,
        'direct_pass_isolation_db': direct,
        'energy_audit': audit,
        'headline': {
            'mean_acquisition_time_s': lock.get('mean_acquisition_time_s'),
            'max_acquisition_time_s': lock.get('max_acquisition_time_s'),
            'missed_acquisitions': lock.get('missed_acquisitions'),
            'residual_phase_rms_rad': lock.get('residual_phase_rms_rad'),
            'gate_on_mean_output': gate_on_mean,
            'gate_off_mean_output': gate_off_mean,
            'isolation_db': iso.isolation_db if iso.isolation_db is not None else iso.lower_bound_db,
            'direct_pass_isolation_db': direct,
        },
    }
    trace = _lock_frame(report, cfg.lock.trace_decimation, prep.pd.responsivity)
    return ScenarioResult(cfg.kind, summary, trace=trace, failures=failures)


def _run_frequency_tuner(prep: Prepared) -> ScenarioResult:
    cfg = prep.cfg
    tm = cfg.timing
    streams = RandomStreams.from_seed(cfg.scenario.seed)
    failures: List[str] = []

    with _section('timing'):
        seq = make_tuner_sequence(tm.lr_duty, tm.lr_hz, tm.spde_duty, tm.feedback_offset_s)
    lock_cfg = replace(prep.lock, feedback_enable=seq.feedback_enable)
    drift = DriftModel(cfg.drift.diffusion, rng=streams.drift)
    plant = _plant(prep, streams, drift, light_gate=seq.lr_gate)
    report, error = _try_lock(cfg.lock.target_phi, plant, lock_cfg, failures)
    if report is None or report.trace is None:
        raise ScenarioError("lock produced no trace")
    tr = report.trace

    spd = replace(prep.spd, enable_gate=seq.spde_gate)
    n_windows = int(round(cfg.scenario.duration_s / spd.window_s))
    if n_windows < 1:
        raise ConfigError("shorter than one counting window", 'scenario.duration_s')
    n = n_windows * spd.slices_per_window
    mids = (np.arange(n) + 0.5) * spd.slice_s
    updates_hz = lock_cfg.demod.dither_hz
    idx = np.clip(((mids - tr.times[0]) * updates_hz).astype(np.int64), 0, len(tr.times) - 1)

    # coherent light follows the locked phase of the locking reference
    w = walkoff_factor(prep.pzt, tr.actuator[idx]) if cfg.lock.actuator == 'pzt' else 1.0
    path = path_from_overall(prep, mids, tr.phase[idx])
    i_e, i_f = port_intensities(prep, mids, path, 'envelope', 1.0, w, dither_average=True)
    coh = np.asarray(gate_level(seq.coh_gate, mids), dtype=float)
    rates = cfg.source.photon_rate * coh * _pick(prep.spd_port, i_e, i_f)
    counts = spd_count_trace(rates, spd, streams.spd)

    enabled = np.asarray(gate_state(seq.spde_gate, mids), dtype=float)
    frac = enabled.reshape(n_windows, spd.slices_per_window).mean(axis=1)
    full, none = counts.counts[frac == 1.0], counts.counts[frac == 0.0]
    on_mean = float(full.mean()) if full.size else None
    on_cv = float(full.std(ddof=1) / full.mean()) if full.size > 1 and full.mean() > 0 else None

    lock = _report_dict(report, error)
    summary = {
        'lock': lock,
        'windows': n_windows,
        'spde_on_windows': int(full.size),
        'spde_off_windows': int(none.size),
        'spde_on_mean_counts': on_mean,
        'spde_off_mean_counts': float(none.mean()) if none.size else None,
        'spde_on_counts_cv': on_cv,
        'window_enable_fraction': frac.tolist(),
        'energy_audit': energy_audit(prep, mids[::spd.slices_per_window], path[::spd.slices_per_window]),
        'headline': {
            'spde_on_mean_counts': on_mean,
            'spde_on_counts_cv': on_cv,
            'residual_phase_rms_rad': lock.get('residual_phase_rms_rad'),
            'mean_acquisition_time_s': lock.get('mean_acquisition_time_s'),
        },
    }
    return ScenarioResult(cfg.kind, summary,
                          trace=_lock_frame(report, cfg.lock.trace_decimation, prep.pd.responsivity),
                          counts=_counts_frame(counts), failures=failures)


# ==================================
# ENTRY POINTS
# ==================================

def run_scenario(cfg: ScenarioConfig, jobs: int = 1) -> ScenarioResult:
    """
    Run one scenario end to end

    Deterministic for a fixed config: every random draw comes from streams
    spawned from scenario.seed.

    Args:
        cfg: validated scenario config
        jobs: workers for Monte-Carlo replicas

    Returns:
        ScenarioResult; lock failures are recorded in summary and failures

    Raises:
        ConfigError: inconsistent configuration
        FitError: the fringe fit of a beating or scan record failed
    """
    prep = prepare(cfg)
    logger.info(f"Running {cfg.kind} (seed {cfg.scenario.seed}, {cfg.scenario.sim_mode} path, "
                f"{cfg.scenario.duration_s} s)")
    if cfg.kind in ('beating_pd', 'beating_spd'):
        result = _run_beating(prep, jobs)
    elif cfg.kind == 'scan_and_lock':
        result = _run_scan_and_lock(prep)
    elif cfg.kind == 'chopped_switch':
        result = _run_chopped_switch(prep)
    elif cfg.kind == 'frequency_tuner':
        result = _run_frequency_tuner(prep)
    else:
        raise ScenarioError(f"unknown scenario kind {cfg.kind}")

    result.summary.update({
        'kind': cfg.kind,
        'seed': cfg.scenario.seed,
        'sim_mode': cfg.scenario.sim_mode,
        'duration_s': cfg.scenario.duration_s,
        'config': config_to_dict(cfg),
        'failures': list(result.failures),
    })
    for message in result.failures:
        logger.warning(f"{cfg.kind}: {message}")
    return result


def parse_values(text: str) -> List[Any]:
    """
    Sweep values from 'a:b:n' (n evenly spaced points) or 'v1,v2,...'

    Raises:
        ConfigError: malformed range
    """
    text = text.strip()
    if ':' in text:
        parts = text.split(':')
        if len(parts) != 3:
            raise ConfigError(f"range must be a:b:n, got '{text}'", 'values')
        try:
            a, b, n = float(parts[0]), float(parts[1]), int(parts[2])
        except ValueError:
            raise ConfigError(f"range must be a:b:n, got '{text}'", 'values')
        if n < 1:
            raise ConfigError("range needs at least one point", 'values')
        return np.linspace(a, b, n).tolist()
    values = [parse_scalar(v.strip()) for v in text.split(',') if v.strip()]
    if not values:
        raise ConfigError("no sweep values given", 'values')
    return values


def _sweep_point(raw: Dict[str, Any], param: str, value: Any, replicas: int) -> Dict[str, Any]:
    row: Dict[str, Any] = {param: value, 'error': ''}
    try:
        point = copy.deepcopy(raw)
        set_path(point, param, value)
        cfg = build_config(point)
        seeds = [cfg.scenario.seed] if replicas == 1 else replica_seeds(cfg.scenario.seed, replicas)
        headlines = []
        failures = []
        for seed in seeds:
            result = run_scenario(replace(cfg, scenario=replace(cfg.scenario, seed=seed)))
            headlines.append(result.summary['headline'])
            failures.extend(result.failures)
        for key in headlines[0]:
            values = [h[key] for h in headlines if isinstance(h.get(key), (int, float))]
            row[key] = float(np.mean(values)) if values else None
        row['error'] = '; '.join(failures)
    except AbiSimError as e:
        row['error'] = f"{type(e).__name__}: {e}"
    return row


def run_sweep(raw: Dict[str, Any], param: str, values: Sequence[Any], jobs: int = 1,
              replicas: int = 1, progress: bool = True) -> pd.DataFrame:
    """
    Run a scenario per parameter value and tabulate the headline metrics

    Points are fully isolated and share the config seed (matched seeds);
    with replicas > 1 each point averages over the same replica seeds.
    Failures are recorded per row.
    """
    if not has_field(param):
        raise ConfigError("sweep parameter names no field", param)
    if replicas < 1:
        raise ConfigError("must be >= 1", 'replicas')
    tasks = (delayed(_sweep_point)(raw, param, v, replicas) for v in values)
    rows = Parallel(n_jobs=jobs, return_as='generator')(tasks)
    rows = list(tqdm(rows, total=len(values), desc=f"sweep {param}", disable=not progress))
    frame = pd.DataFrame(rows)
    cols = [param] + [c for c in frame.columns if c not in (param, 'error')] + ['error']
    return frame[cols]
