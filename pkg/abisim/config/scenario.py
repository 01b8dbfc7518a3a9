#!/usr/bin/env python3
"""
Scenario file schema

Scenario files are TOML with a mandatory schema_version. Every field has a
default and a one-line description; the description feeds `init-config`.
Values come, in increasing precedence, from the field defaults, the per-kind
defaults below, the file, and ABISIM__SECTION__KEY environment variables.
"""

import copy
import logging
import math
import os
import tomllib
from dataclasses import MISSING, dataclass, field, fields, is_dataclass, asdict
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple, get_type_hints

from abisim.services.errors import ConfigError

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
KINDS = ('beating_pd', 'beating_spd', 'scan_and_lock', 'chopped_switch', 'frequency_tuner')


def option(default, doc: str, choices: Optional[Tuple] = None):
    """Dataclass field carrying its description (and allowed values) as metadata"""
    meta = {'doc': doc}
    if choices:
        meta['choices'] = tuple(choices)
    if is_dataclass(default) or isinstance(default, (list, dict)):
        return field(default_factory=lambda: copy.deepcopy(default), metadata=meta)
    return field(default=default, metadata=meta)


# ==================================
# SECTIONS
# ==================================

@dataclass
class GateSection:
    repetition_hz: float = option(0.0, "gate repetition rate (Hz); 0 keeps the gate static")
    duty: float = option(1.0, "on fraction of each period")
    phase_offset_s: float = option(0.0, "time of the rising edge within the period (s)")
    ramp_s: float = option(0.0, "linear ramp of the RF level at each edge (s)")


@dataclass
class ScenarioSection:
    kind: str = option('beating_pd', "experiment to simulate", KINDS)
    seed: int = option(0, "root seed of all random streams")
    duration_s: float = option(200e-6, "simulated time (s); per lock target for scan_and_lock")
    sim_mode: str = option('envelope', "envelope (closed-form intensities) or field (sampled field propagation)",
                           ('envelope', 'field'))


@dataclass
class SourceSection:
    i_in: float = option(1.0, "input intensity on port b in detector units")
    photon_rate: float = option(0.0, "photons/s on port b seen by the single-photon detector")
    peak_counts_per_trigger: float = option(
        0.0, "if > 0, choose photon_rate so the fringe maximum gives this many counts per trigger")


@dataclass
class AomSection:
    diffraction_efficiency: float = option(0.5, "r^2, fraction of power diffracted with the RF on")
    theta: float = option(0.0, "static drive-induced phase (rad)")
    off_leakage_db: float = option(37.0, "residual diffraction with the RF off, in dB below r^2")


@dataclass
class InterferometerSection:
    path_phase: float = option(0.0, "optical path phase between the arms (rad)")
    visibility: float = option(0.995, "mode-matching visibility V")
    efficiency: float = option(0.95, "lumped power transmission eta")


@dataclass
class DriveSection:
    carrier_hz: float = option(80e6, "RF carrier frequency (Hz)")
    phase0: float = option(0.0, "static RF phase (rad)")
    dither_hz: float = option(0.0, "phase dither frequency (Hz)")
    dither_depth: float = option(0.0, "phase dither depth (rad)")
    gate: GateSection = option(GateSection(), "RF gate")


@dataclass
class DriftSection:
    diffusion: float = option(math.pi ** 2 / 4.0, "phase random-walk rate (rad^2/s)")


@dataclass
class PztSection:
    gain: float = option(math.pi, "path phase per volt (rad/V)")
    range_v: List[float] = option([-10.0, 10.0], "actuator voltage limits (V)")
    walkoff_scale_v: float = option(8.0, "voltage scale of the walk-off visibility loss (V)")
    bias_v: float = option(0.0, "PZT operating point when the lock engages (V)")


@dataclass
class PdSection:
    responsivity: float = option(1.0, "volts per intensity unit")
    noise_sigma: float = option(0.005, "white noise std per sample (V)")
    sample_hz: float = option(10e6, "sampling rate (Hz)")
    port: str = option('e', "output port watched by the photodiode", ('e', 'f'))


@dataclass
class SpdSection:
    efficiency: float = option(0.20, "detection efficiency")
    dark_prob: float = option(4e-6, "dark counts per trigger")
    trigger_hz: float = option(50e6, "internal trigger clock (Hz)")
    window_s: float = option(10e-3, "counting window (s)")
    slices_per_window: int = option(100, "rate slices per window")
    port: str = option('e', "output port watched by the detector", ('e', 'f'))
    enable_gate: GateSection = option(GateSection(), "detector enable gate")


@dataclass
class DemodSection:
    lowpass_cutoff_hz: float = option(10e3, "single-pole low-pass cutoff (Hz)")
    reference_phase: float = option(0.0, "nominal demodulation phase (rad)")


@dataclass
class PidSection:
    kp: float = option(2.0, "proportional gain")
    ki: float = option(1.7e5, "integral gain (1/s)")
    kd: float = option(0.0, "derivative gain (s)")
    output_limits: List[float] = option([-10.0, 10.0], "actuator output limits")


@dataclass
class LockSection:
    actuator: str = option('pzt', "feedback actuator", ('pzt', 'rf2'))
    target_phi: float = option(0.0, "overall phase to lock to (rad)")
    auto_reference_phase: bool = option(True, "calibrate the demodulation phase at engage")
    quadrature_band: float = option(0.2, "use the side-of-fringe error when |cos(target)| is below this")
    samples_per_period: int = option(20, "waveform samples per dither period in field mode")
    acquire_threshold_rad: float = option(0.1, "phase error counted as acquired (rad)")
    lost_threshold_rad: float = option(0.5, "phase error counted as lost (rad)")
    lost_interval_s: float = option(1e-3, "time above the loss threshold that declares lock loss (s)")
    acquisition_timeout_s: float = option(10e-3, "time allowed for the first acquisition (s)")
    trace_decimation: int = option(20, "write every n-th lock update to trace.csv")
    demod: DemodSection = option(DemodSection(), "demodulator")
    pid: PidSection = option(PidSection(), "PID controller")


@dataclass
class TimingSection:
    repetition_hz: float = option(100.0, "switch gate repetition rate (Hz)")
    duty: float = option(0.3, "switch gate duty cycle")
    feedback_offset_s: float = option(0.0, "delay of the feedback enable after the gate edge (s)")
    ramp_s: float = option(0.0, "RF gate edge ramp (s)")
    lr_duty: float = option(0.3, "locking-reference on fraction")
    lr_hz: float = option(5.0, "locking-reference repetition rate (Hz)")
    spde_duty: float = option(0.5, "detector enable fraction, centred in the coherent-light window")


@dataclass
class ScanSection:
    scan_hz: float = option(30.0, "PZT triangle scan rate (Hz)")
    amplitude_v: float = option(1.2, "scan amplitude around the bias (V)")
    sample_hz: float = option(100e3, "trace sampling rate of the scan in envelope mode (Hz)")


@dataclass
class FitSection:
    mode: str = option('beating', "beating (delta omega fixed) or scan (delta omega fitted)", ('beating', 'scan'))
    replicas: int = option(1, "Monte-Carlo replicas of the fitted experiment")
    max_nfev: int = option(4000, "function-evaluation limit per start")
    gtol: float = option(1e-6, "gradient-norm convergence tolerance")


@dataclass
class IsolationSection:
    attenuation_db: float = option(60.0, "calibrated attenuation inserted for the RF-on measurement (dB)")
    exposure_s: float = option(1.0, "counting time of each measurement (s)")
    photon_rate: float = option(4e12, "photons/s of the CW input during the isolation measurement")


@dataclass
class ScenarioConfig:
    schema_version: int = option(SCHEMA_VERSION, "scenario file schema version")
    scenario: ScenarioSection = option(ScenarioSection(), "scenario")
    source: SourceSection = option(SourceSection(), "input light")
    aom1: AomSection = option(AomSection(), "first AOM")
    aom2: AomSection = option(AomSection(), "second AOM")
    interferometer: InterferometerSection = option(InterferometerSection(), "interferometer")
    drive1: DriveSection = option(DriveSection(), "RF1 drive")
    drive2: DriveSection = option(DriveSection(), "RF2 drive")
    drift: DriftSection = option(DriftSection(), "free-running phase drift")
    pzt: PztSection = option(PztSection(), "PZT actuator")
    pd: PdSection = option(PdSection(), "photodiode")
    spd: SpdSection = option(SpdSection(), "single-photon detector")
    lock: LockSection = option(LockSection(), "phase lock")
    timing: TimingSection = option(TimingSection(), "chopped timing")
    scan: ScanSection = option(ScanSection(), "PZT scan")
    fit: FitSection = option(FitSection(), "fringe fit")
    isolation: IsolationSection = option(IsolationSection(), "isolation measurement")

    @property
    def kind(self) -> str:
        return self.scenario.kind


# Per-kind defaults, applied beneath the file
KIND_DEFAULTS: Dict[str, Dict[str, Any]] = {
    'beating_pd': {
        'scenario.duration_s': 200e-6,
        'drive2.carrier_hz': 79.9e6,
        'interferometer.path_phase': 1.08,
        'drift.diffusion': 0.0,
    },
    'beating_spd': {
        'scenario.duration_s': 1.0,
        'drive2.carrier_hz': 80e6 - 5.0,
        'interferometer.path_phase': 1.08,
        'interferometer.visibility': 0.992,
        'drift.diffusion': 0.0,
        'source.peak_counts_per_trigger': 0.06,
        'fit.replicas': 10,
    },
    'scan_and_lock': {
        'scenario.duration_s': 0.2,
        'interferometer.path_phase': 1.0,
        'drive1.dither_hz': 200e3,
        'drive1.dither_depth': 0.1,
        'pzt.bias_v': 1.96,
        'fit.mode': 'scan',
    },
    'chopped_switch': {
        'scenario.duration_s': 10.0,
        'interferometer.path_phase': 1.0,
        'drive1.dither_hz': 200e3,
        'drive1.dither_depth': 0.1,
    },
    'frequency_tuner': {
        'scenario.duration_s': 2.0,
        'interferometer.path_phase': 1.0,
        'drive1.dither_hz': 200e3,
        'drive1.dither_depth': 0.1,
        'pd.port': 'f',
        'spd.window_s': 20e-3,
        'source.photon_rate': 5e5,
    },
}


# ==================================
# DOTTED PATHS
# ==================================

def get_path(raw: Mapping[str, Any], path: str) -> Any:
    node: Any = raw
    for part in path.split('.'):
        if not isinstance(node, Mapping) or part not in node:
            raise ConfigError("no such field", path)
        node = node[part]
    return node


def set_path(raw: Dict[str, Any], path: str, value: Any) -> None:
    """Set a dotted key in a raw (dict) config, creating intermediate tables"""
    parts = path.split('.')
    node = raw
    for part in parts[:-1]:
        child = node.setdefault(part, {})
        if not isinstance(child, dict):
            raise ConfigError("is not a table", '.'.join(parts[:parts.index(part) + 1]))
        node = child
    node[parts[-1]] = value


def has_field(path: str) -> bool:
    """Whether a dotted path names a field of the schema"""
    cls: Any = ScenarioConfig
    for part in path.split('.'):
        if not is_dataclass(cls):
            return False
        hints = get_type_hints(cls)
        if part not in hints:
            return False
        cls = hints[part]
    return not is_dataclass(cls)


def parse_scalar(text: str) -> Any:
    """Parse an override value as a TOML scalar; bare words stay strings"""
    try:
        return tomllib.loads(f"v = {text}")['v']
    except tomllib.TOMLDecodeError:
        return text


# ==================================
# BUILDING
# ==================================

def _coerce(value: Any, hint: Any, path: str, choices: Optional[Tuple]) -> Any:
    if hint is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"expected a boolean, got {value!r}", path)
    elif hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"expected an integer, got {value!r}", path)
    elif hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"expected a number, got {value!r}", path)
        value = float(value)
        if not math.isfinite(value):
            raise ConfigError("must be finite", path)
    elif hint is str:
        if not isinstance(value, str):
            raise ConfigError(f"expected a string, got {value!r}", path)
    elif getattr(hint, '__origin__', None) is list:
        if not isinstance(value, list) or len(value) != 2:
            raise ConfigError(f"expected a two-element list, got {value!r}", path)
        value = [_coerce(v, float, path, None) for v in value]
    if choices and value not in choices:
        raise ConfigError(f"must be one of {list(choices)}, got {value!r}", path)
    return value


def _build(cls, raw: Mapping[str, Any], prefix: str = ''):
    if not isinstance(raw, Mapping):
        raise ConfigError("expected a table", prefix.rstrip('.') or None)
    hints = get_type_hints(cls)
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(raw) - set(known))
    if unknown:
        raise ConfigError("unknown key", f"{prefix}{unknown[0]}")

    kwargs = {}
    for name, f in known.items():
        path = f"{prefix}{name}"
        hint = hints[name]
        if name not in raw:
            continue
        if is_dataclass(hint):
            kwargs[name] = _build(hint, raw[name], f"{path}.")
        else:
            kwargs[name] = _coerce(raw[name], hint, path, f.metadata.get('choices'))
    return cls(**kwargs)


def build_config(raw: Mapping[str, Any]) -> ScenarioConfig:
    """
    Build a validated ScenarioConfig from a raw table

    Kind defaults are applied beneath the given values.

    Raises:
        ConfigError: unknown key, wrong type, bad choice or schema version
    """
    version = raw.get('schema_version')
    if version is None:
        raise ConfigError("missing", 'schema_version')
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema version {version!r}, expected {SCHEMA_VERSION}", 'schema_version')

    kind = raw.get('scenario', {}).get('kind', ScenarioSection().kind) if isinstance(raw.get('scenario'), Mapping) \
        else ScenarioSection().kind
    if kind not in KINDS:
        raise ConfigError(f"must be one of {list(KINDS)}, got {kind!r}", 'scenario.kind')

    merged: Dict[str, Any] = {}
    for path, value in KIND_DEFAULTS[kind].items():
        set_path(merged, path, value)
    _deep_merge(merged, raw)
    return _build(ScenarioConfig, merged)


def _deep_merge(base: Dict[str, Any], extra: Mapping[str, Any]) -> None:
    for key, value in extra.items():
        if isinstance(value, Mapping) and isinstance(base.get(key), dict):
            _deep_merge(base[key], value)
        else:
            base[key] = copy.deepcopy(value)


def env_overrides(environ: Mapping[str, str], prefix: str = 'ABISIM__') -> Dict[str, Any]:
    """Collect ABISIM__SECTION__KEY=value overrides as dotted paths"""
    found = {}
    for key, text in environ.items():
        if not key.startswith(prefix):
            continue
        path = '.'.join(part.lower() for part in key[len(prefix):].split('__'))
        found[path] = parse_scalar(text)
    return found


def read_raw(path: Path) -> Dict[str, Any]:
    """
    Read a scenario file

    Raises:
        ConfigError: missing or unparsable file
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"scenario file not found: {path}")
    try:
        with open(path, 'rb') as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"cannot parse {path}: {e}")


def load_config(path: Path, environ: Optional[Mapping[str, str]] = None,
                prefix: str = 'ABISIM__', seed: Optional[int] = None,
                default_sim_mode: Optional[str] = None) -> Tuple[ScenarioConfig, Dict[str, Any]]:
    """
    Load, override and validate a scenario file

    Returns:
        Tuple of (config, raw table with overrides applied); the raw table is
        what sweeps modify
    """
    raw = read_raw(path)
    if default_sim_mode and isinstance(raw.get('scenario', {}), dict):
        raw.setdefault('scenario', {}).setdefault('sim_mode', default_sim_mode)
    overrides = env_overrides(os.environ if environ is None else environ, prefix)
    for key, value in sorted(overrides.items()):
        if not has_field(key):
            raise ConfigError("environment override names no field", key)
        logger.info(f"Override from environment: {key} = {value!r}")
        set_path(raw, key, value)
    if seed is not None:
        set_path(raw, 'scenario.seed', int(seed))
    return build_config(raw), raw


def config_to_dict(cfg: ScenarioConfig) -> Dict[str, Any]:
    return asdict(cfg)


# ==================================
# INIT-CONFIG
# ==================================

def _toml_value(value: Any) -> str:
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, str):
        return f'"{value}"'
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return '[' + ', '.join(_toml_value(v) for v in value) + ']'
    return str(value)


def _render_table(obj, name: str, lines: List[str]) -> None:
    nested = []
    scalars = []
    for f in fields(obj):
        value = getattr(obj, f.name)
        if is_dataclass(value):
            nested.append((f, value))
        else:
            scalars.append((f, value))
    if name:
        lines.append('')
        lines.append(f"[{name}]")
    for f, value in scalars:
        doc = f.metadata.get('doc', '')
        choices = f.metadata.get('choices')
        if choices:
            doc += f" ({' | '.join(str(c) for c in choices)})"
        lines.append(f"# {doc}")
        lines.append(f"{f.name} = {_toml_value(value)}")
    for f, value in nested:
        child = f"{name}.{f.name}" if name else f.name
        if name == '':
            lines.append('')
            lines.append(f"# {f.metadata.get('doc', '')}")
        _render_table(value, child, lines)


def render_init_config(kind: str) -> str:
    """Fully commented default scenario file for one kind"""
    if kind not in KINDS:
        raise ConfigError(f"must be one of {list(KINDS)}, got {kind!r}", 'kind')
    cfg = build_config({'schema_version': SCHEMA_VERSION, 'scenario': {'kind': kind}})
    lines = [f"# abisim scenario: {kind}", "# every field is shown with its default"]
    _render_table(cfg, '', lines)
    return '\n'.join(lines) + '\n'
