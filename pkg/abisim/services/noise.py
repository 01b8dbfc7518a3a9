"""
Free-running phase drift and the PZT actuator

The drift is a Wiener process. The PZT shifts the path phase linearly in
voltage and walks the beam off, lowering the visibility with a Gaussian
mode-overlap law V(v) = V0 exp(-(v / v_s)^2).
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .errors import ConfigError

logger = logging.getLogger(__name__)

# +/-1 sigma band spanning pi after one second
DEFAULT_DIFFUSION = math.pi ** 2 / 4.0


@dataclass
class DriftModel:
    """
    Random-walk phase drift of the free-running interferometer

    Stateful and single-owner: one simulation timeline per instance.
    """
    diffusion: float = DEFAULT_DIFFUSION
    seed: int = 0
    current_phase: float = 0.0
    rng: Optional[np.random.Generator] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.diffusion < 0:
            raise ConfigError(f"drift diffusion must be >= 0, got {self.diffusion}")
        if self.rng is None:
            self.rng = np.random.default_rng(self.seed)


def drift_step(m: DriftModel, dt: float) -> float:
    """Advance the drift by dt and return the new phase"""
    if not dt > 0:
        raise ConfigError(f"drift step dt must be positive, got {dt}")
    if m.diffusion > 0.0:
        m.current_phase += float(m.rng.normal(0.0, math.sqrt(m.diffusion * dt)))
    return m.current_phase


def drift_path(m: DriftModel, dt: float, n: int) -> np.ndarray:
    """
    Advance the drift by n steps of dt at once

    Returns:
        Array of the n phases after each step; the model ends at the last one
    """
    if not dt > 0:
        raise ConfigError(f"drift step dt must be positive, got {dt}")
    if m.diffusion == 0.0:
        return np.full(n, m.current_phase)
    steps = m.rng.normal(0.0, math.sqrt(m.diffusion * dt), size=n)
    path = m.current_phase + np.cumsum(steps)
    if n:
        m.current_phase = float(path[-1])
    return path


@dataclass(frozen=True)
class PztResponse:
    phase: float
    visibility_factor: float
    volts: float
    saturated: bool


@dataclass(frozen=True)
class PztModel:
    """
    Piezo actuator on the concave mirror of the shifted arm

    Attributes:
        gain: path phase per volt (rad/V)
        range_v: (low, high) voltage limits
        walkoff_scale_v: voltage over which the mode overlap degrades
        v0_visibility: visibility at zero displacement
    """
    gain: float = math.pi
    range_v: Tuple[float, float] = (-10.0, 10.0)
    walkoff_scale_v: float = 8.0
    v0_visibility: float = 0.995

    def __post_init__(self):
        if not math.isfinite(self.gain) or self.gain == 0.0:
            raise ConfigError(f"PZT gain must be finite and nonzero, got {self.gain}")
        if not self.walkoff_scale_v > 0:
            raise ConfigError(f"walkoff_scale_v must be positive, got {self.walkoff_scale_v}")
        lo, hi = self.range_v
        if not lo < hi:
            raise ConfigError(f"PZT range_v must be increasing, got {self.range_v}")
        if not 0.0 <= self.v0_visibility <= 1.0:
            raise ConfigError(f"v0_visibility must lie in [0, 1], got {self.v0_visibility}")

    def saturate(self, volts: float) -> Tuple[float, bool]:
        lo, hi = self.range_v
        if volts < lo:
            return lo, True
        if volts > hi:
            return hi, True
        return volts, False

    def visibility(self, volts) -> float:
        return self.v0_visibility * walkoff_factor(self, volts)


def walkoff_factor(m: PztModel, volts):
    """Gaussian mode-overlap factor exp(-(v / v_s)^2)"""
    x = np.asarray(volts, dtype=float) / m.walkoff_scale_v
    out = np.exp(-x * x)
    return float(out) if np.ndim(volts) == 0 else out


def pzt_apply(m: PztModel, volts: float) -> PztResponse:
    """
    Apply a voltage to the PZT

    Out-of-range voltages rail at the limit and set the saturated flag.
    """
    applied, saturated = m.saturate(volts)
    if saturated:
        logger.warning(f"PZT railed: requested {volts:.3f} V, limited to {applied:.3f} V")
    return PztResponse(
        phase=m.gain * applied,
        visibility_factor=walkoff_factor(m, applied),
        volts=applied,
        saturated=saturated,
    )


def calibrate_walkoff_scale(v_rms: float, v0: float = 0.995, v_target: float = 0.937) -> float:
    """
    One-point walk-off calibration

    Returns the scale voltage for which an excursion of v_rms lowers the
    visibility from v0 to v_target.
    """
    if not 0 < v_target < v0:
        raise ConfigError(f"need 0 < v_target < v0, got v_target={v_target}, v0={v0}")
    if not v_rms > 0:
        raise ConfigError(f"v_rms must be positive, got {v_rms}")
    return v_rms / math.sqrt(math.log(v0 / v_target))
