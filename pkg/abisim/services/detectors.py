"""
Detector models: an analog photodiode and a gated, triggered single-photon
detector. Both are stateless; the caller injects one numpy Generator per
simulated detector.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .drive import GateEnvelope, gate_state
from .errors import ConfigError

logger = logging.getLogger(__name__)


# ==================================
# MODELS
# ==================================

@dataclass(frozen=True)
class PdModel:
    """
    Photodiode with white Gaussian read noise

    Attributes:
        responsivity: output volts per intensity unit
        noise_sigma: additive noise std per sample (V)
        sample_hz: sampling rate of the digitizer
    """
    responsivity: float = 1.0
    noise_sigma: float = 0.01
    sample_hz: float = 10e6

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise ConfigError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if not self.sample_hz > 0:
            raise ConfigError(f"sample_hz must be positive, got {self.sample_hz}")

    @property
    def dt(self) -> float:
        return 1.0 / self.sample_hz


@dataclass(frozen=True)
class SpdModel:
    """
    Triggered single-photon detector counting over fixed windows

    Each trigger clicks at most once. A window is split into
    slices_per_window slices; a slice is enabled when the enable gate is on
    at its midpoint, and within one slice the photon rate is constant.
    """
    efficiency: float = 0.20
    dark_prob: float = 4e-6
    trigger_hz: float = 50e6
    window_s: float = 10e-3
    enable_gate: GateEnvelope = field(default_factory=GateEnvelope)
    slices_per_window: int = 100

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise ConfigError(f"SPD efficiency must lie in [0, 1], got {self.efficiency}")
        if self.dark_prob < 0:
            raise ConfigError(f"dark_prob must be >= 0, got {self.dark_prob}")
        if not self.trigger_hz > 0:
            raise ConfigError(f"trigger_hz must be positive, got {self.trigger_hz}")
        if not self.window_s > 0:
            raise ConfigError(f"window_s must be positive, got {self.window_s}")
        if self.slices_per_window < 1:
            raise ConfigError(f"slices_per_window must be >= 1, got {self.slices_per_window}")
        if self.triggers_per_window < self.slices_per_window:
            raise ConfigError("counting window holds fewer triggers than slices")

    @property
    def triggers_per_window(self) -> int:
        return int(round(self.window_s * self.trigger_hz))

    @property
    def slice_s(self) -> float:
        return self.window_s / self.slices_per_window

    def triggers_per_slice(self) -> np.ndarray:
        """Integer trigger counts per slice; they sum to triggers_per_window exactly"""
        edges = np.round(np.linspace(0, self.triggers_per_window, self.slices_per_window + 1))
        return np.diff(edges).astype(np.int64)

    def rate_for_counts_per_trigger(self, counts_per_trigger: float) -> float:
        """Photon rate (1/s) giving the requested signal click probability per trigger"""
        if self.efficiency == 0.0:
            raise ConfigError("SPD efficiency is 0; no photon rate reaches the requested counts")
        return counts_per_trigger * self.trigger_hz / self.efficiency


# ==================================
# SERIES
# ==================================

@dataclass(frozen=True, eq=False)
class TimeSeries:
    """Uniformly sampled record: sample k is taken at t0 + k * dt"""
    t0: float
    dt: float
    samples: np.ndarray

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError(f"TimeSeries dt must be positive, got {self.dt}")
        object.__setattr__(self, 'samples', np.asarray(self.samples, dtype=float))

    def __len__(self) -> int:
        return len(self.samples)

    def times(self) -> np.ndarray:
        return self.t0 + np.arange(len(self.samples)) * self.dt

    @property
    def duration_s(self) -> float:
        return len(self.samples) * self.dt

    @classmethod
    def from_times(cls, times, samples, rtol: float = 1e-6) -> 'TimeSeries':
        """
        Rebuild a series from explicit sample times

        Raises:
            ConfigError: fewer than two samples, or non-uniform spacing
        """
        times = np.asarray(times, dtype=float)
        if len(times) < 2:
            raise ConfigError("a time series needs at least two samples")
        dt = (times[-1] - times[0]) / (len(times) - 1)
        if not dt > 0 or not np.allclose(np.diff(times), dt, rtol=rtol, atol=0.0):
            raise ConfigError("sample times are not uniformly increasing")
        return cls(float(times[0]), float(dt), samples)


@dataclass(frozen=True, eq=False)
class CountSeries:
    """Photon counts per counting window; window k spans [t0 + k w, t0 + (k+1) w)"""
    window_s: float
    counts: np.ndarray
    triggers_per_window: int
    t0: float = 0.0

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.size and (counts < 0).any():
            raise ConfigError("counts must be non-negative")
        if not self.window_s > 0:
            raise ConfigError(f"window_s must be positive, got {self.window_s}")
        object.__setattr__(self, 'counts', counts.astype(np.int64))

    def __len__(self) -> int:
        return len(self.counts)

    def window_times(self) -> np.ndarray:
        """Window centres"""
        return self.t0 + (np.arange(len(self.counts)) + 0.5) * self.window_s


# ==================================
# PHOTODIODE
# ==================================

def pd_sample(intensity, m: PdModel, rng: Optional[np.random.Generator] = None):
    """
    Photodiode voltage for one intensity or an array of intensities

    Args:
        intensity: optical intensity (>= 0), scalar or array
        m: photodiode model
        rng: noise stream; only drawn from when noise_sigma > 0

    Returns:
        responsivity * intensity + N(0, noise_sigma)
    """
    clean = m.responsivity * np.asarray(intensity, dtype=float)
    if m.noise_sigma > 0.0:
        if rng is None:
            raise ConfigError("a noisy photodiode needs a random stream")
        clean = clean + rng.normal(0.0, m.noise_sigma, size=clean.shape)
    return float(clean) if clean.ndim == 0 else clean


def pd_trace(intensities, m: PdModel, rng: Optional[np.random.Generator] = None,
             t0: float = 0.0) -> TimeSeries:
    """Sample an intensity record already evaluated on the PD sampling grid"""
    return TimeSeries(t0, m.dt, pd_sample(np.asarray(intensities, dtype=float), m, rng))


# ==================================
# SINGLE-PHOTON DETECTOR
# ==================================

def _click_probability(rates, m: SpdModel):
    p = m.efficiency * np.asarray(rates, dtype=float) / m.trigger_hz + m.dark_prob
    if (p > 1.0).any():
        logger.warning(
            f"SPD saturated: click probability {float(p.max()):.3f} per trigger clipped to 1"
        )
        p = np.minimum(p, 1.0)
    return p


def spd_count_window(mean_photon_rate: float, m: SpdModel, window_start: float,
                     rng: np.random.Generator) -> int:
    """
    Counts registered in one window at a constant photon rate

    Args:
        mean_photon_rate: photons/s reaching the detector
        m: detector model
        window_start: start time of the window (s), used for the enable gate
        rng: click stream

    Returns:
        Binomial count over the enabled triggers of the window
    """
    if mean_photon_rate < 0:
        raise ConfigError(f"mean_photon_rate must be >= 0, got {mean_photon_rate}")
    mids = window_start + (np.arange(m.slices_per_window) + 0.5) * m.slice_s
    enabled = np.asarray(gate_state(m.enable_gate, mids), dtype=bool)
    n = int(m.triggers_per_slice()[enabled].sum())
    p = float(_click_probability(mean_photon_rate, m))
    if n == 0 or p == 0.0:
        return 0
    return int(rng.binomial(n, p))


def spd_count_trace(rates, m: SpdModel, rng: np.random.Generator, t0: float = 0.0) -> CountSeries:
    """
    Window counts from per-slice photon rates

    Args:
        rates: photons/s per slice, laid out contiguously from t0; the length
            must be a multiple of slices_per_window
        m: detector model
        rng: click stream
        t0: start of the first window

    Returns:
        CountSeries with one entry per window
    """
    rates = np.asarray(rates, dtype=float)
    if rates.size % m.slices_per_window:
        raise ConfigError(
            f"{rates.size} slice rates do not fill whole windows of {m.slices_per_window} slices"
        )
    if (rates < 0).any():
        raise ConfigError("photon rates must be >= 0")
    n_windows = rates.size // m.slices_per_window
    mids = t0 + (np.arange(rates.size) + 0.5) * m.slice_s
    enabled = np.asarray(gate_state(m.enable_gate, mids), dtype=bool)

    n = np.tile(m.triggers_per_slice(), n_windows)
    n = np.where(enabled, n, 0)
    p = _click_probability(rates, m)
    clicks = rng.binomial(n, p)
    counts = clicks.reshape(n_windows, m.slices_per_window).sum(axis=1)
    return CountSeries(m.window_s, counts, m.triggers_per_window, t0)
