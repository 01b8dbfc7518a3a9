"""
Core optics of the AOM bi-frequency interferometer

The AOM is treated as a four-port bi-frequency beam splitter: port a carries
omega+Omega, port b carries omega, output c carries omega and output d carries
omega+Omega. Two AOMs joined by a path-phase arm form the interferometer whose
outputs e (omega+Omega) and f (omega) each carry a single optical frequency.

Frequencies are integer offset labels, never floats, so "same frequency" is an
exact comparison.
"""

import cmath
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Tuple

import numpy as np

from .errors import ConfigError

UNITARITY_TOL = 1e-12


class Port(str, Enum):
    """Spatial ports of the AOM (a, b, c, d) and of the interferometer output (e, f)"""
    A = 'a'
    B = 'b'
    C = 'c'
    D = 'd'
    E = 'e'
    F = 'f'


@dataclass(frozen=True)
class FrequencyLabel:
    """Optical frequency as omega + offset_index * Omega"""
    offset_index: int
    rf_frequency: float

    def __post_init__(self):
        if not isinstance(self.offset_index, (int, np.integer)) or isinstance(self.offset_index, bool):
            raise ConfigError(f"offset_index must be an integer, got {self.offset_index!r}")
        if not self.rf_frequency > 0:
            raise ConfigError(f"rf_frequency must be positive, got {self.rf_frequency}")

    def shifted(self, steps: int) -> 'FrequencyLabel':
        return FrequencyLabel(int(self.offset_index) + steps, self.rf_frequency)


@dataclass(frozen=True)
class PortField:
    """
    Complex field amplitude on one port at one optical frequency

    `amplitude` is normalized so |amplitude|^2 is an intensity. Light that lost
    its spatial overlap with the other arm is carried separately as
    `incoherent_power`; it adds to the intensity but never interferes.
    """
    port: Port
    frequency: FrequencyLabel
    amplitude: complex = 0j
    incoherent_power: float = 0.0

    def __post_init__(self):
        if not cmath.isfinite(complex(self.amplitude)):
            raise ConfigError(f"amplitude on port {self.port.value} must be finite")
        if self.incoherent_power < 0:
            raise ConfigError(f"incoherent_power must be non-negative, got {self.incoherent_power}")

    @property
    def intensity(self) -> float:
        return abs(self.amplitude) ** 2 + self.incoherent_power

    @property
    def is_vacuum(self) -> bool:
        return self.amplitude == 0 and self.incoherent_power == 0


def vacuum(port: Port, frequency: FrequencyLabel) -> PortField:
    return PortField(port, frequency, 0j)


@dataclass(frozen=True)
class AomConfig:
    """
    Splitting parameters of one AOM

    Attributes:
        r: diffraction amplitude, r^2 is the diffraction efficiency
        theta: RF-drive induced phase (rad)
        rf_frequency: label RF frequency Omega (rad/s)
        rf_on: RF drive present; when off r is replaced by sqrt(off_leakage_power)
        off_leakage_power: residual diffracted power fraction with the RF off
    """
    r: float = math.sqrt(0.5)
    theta: float = 0.0
    rf_frequency: float = 2 * math.pi * 80e6
    rf_on: bool = True
    off_leakage_power: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.r <= 1.0:
            raise ConfigError(f"diffraction amplitude r must lie in [0, 1], got {self.r}")
        if not self.rf_frequency > 0:
            raise ConfigError(f"rf_frequency must be positive, got {self.rf_frequency}")
        if not 0.0 <= self.off_leakage_power <= 1.0:
            raise ConfigError(f"off_leakage_power must lie in [0, 1], got {self.off_leakage_power}")

    @property
    def t(self) -> float:
        return math.sqrt(1.0 - self.r * self.r)

    @property
    def effective_r(self) -> float:
        return self.r if self.rf_on else math.sqrt(self.off_leakage_power)

    @property
    def effective_t(self) -> float:
        r = self.effective_r
        return math.sqrt(1.0 - r * r)


@dataclass(frozen=True)
class AbiConfig:
    """Two AOMs, the arm path phase, and the lumped visibility/efficiency"""
    aom1: AomConfig = field(default_factory=AomConfig)
    aom2: AomConfig = field(default_factory=AomConfig)
    path_phase: float = 0.0
    visibility: float = 1.0
    efficiency: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.visibility <= 1.0:
            raise ConfigError(f"visibility must lie in [0, 1], got {self.visibility}")
        if not 0.0 <= self.efficiency <= 1.0:
            raise ConfigError(f"efficiency must lie in [0, 1], got {self.efficiency}")
        if not math.isclose(self.aom1.rf_frequency, self.aom2.rf_frequency, rel_tol=1e-12):
            raise ConfigError(
                "both AOMs must share the label RF frequency; drive detuning enters through theta"
            )

    @property
    def overall_phase(self) -> float:
        return overall_phase(self.path_phase, self.aom1.theta, self.aom2.theta)


@dataclass(frozen=True)
class EffectiveCoeffs:
    """Effective transmission/reflection coefficients t1', r1', t2', r2' of the interferometer"""
    t1p: complex
    r1p: complex
    t2p: complex
    r2p: complex


def overall_phase(path_phase, theta1, theta2):
    """phi = phi_path - theta1 + theta2"""
    return path_phase - theta1 + theta2


# ==================================
# AOM SCATTERING
# ==================================

def _check_label(pf: PortField, cfg: AomConfig) -> None:
    if pf.is_vacuum:
        return
    if not math.isclose(pf.frequency.rf_frequency, cfg.rf_frequency, rel_tol=1e-12):
        raise ConfigError(
            f"port {pf.port.value} label RF frequency {pf.frequency.rf_frequency} "
            f"does not match AOM RF frequency {cfg.rf_frequency}"
        )


def aom_scatter(in_a: PortField, in_b: PortField, cfg: AomConfig) -> Tuple[PortField, PortField]:
    """
    Scatter two input fields through one AOM

        c = t b + e^{i theta} r a     (frequency of a minus one step)
        d = t a - e^{-i theta} r b    (frequency of b plus one step)

    Args:
        in_a: field on port a (omega+Omega), may be vacuum
        in_b: field on port b (omega), may be vacuum
        cfg: AOM parameters; with rf_on false r is sqrt(off_leakage_power)

    Returns:
        Tuple of (out_c, out_d)

    Raises:
        ConfigError: wrong ports, mismatched frequency labels or RF frequency
    """
    if in_a.port != Port.A or in_b.port != Port.B:
        raise ConfigError(f"aom_scatter expects ports (a, b), got ({in_a.port.value}, {in_b.port.value})")
    _check_label(in_a, cfg)
    _check_label(in_b, cfg)

    if in_a.is_vacuum:
        base = in_b.frequency
    elif in_b.is_vacuum:
        base = in_a.frequency.shifted(-1)
    else:
        if in_a.frequency.offset_index != in_b.frequency.offset_index + 1:
            raise ConfigError(
                f"port a must carry one RF step above port b, got offsets "
                f"{in_a.frequency.offset_index} and {in_b.frequency.offset_index}"
            )
        base = in_b.frequency

    r = cfg.effective_r
    t = cfg.effective_t
    a = complex(in_a.amplitude)
    b = complex(in_b.amplitude)

    c = t * b + cmath.exp(1j * cfg.theta) * r * a
    d = t * a - cmath.exp(-1j * cfg.theta) * r * b

    # mismatched power stays in its own orthogonal mode through each splitter
    c_inc = t * t * in_b.incoherent_power + r * r * in_a.incoherent_power
    d_inc = t * t * in_a.incoherent_power + r * r * in_b.incoherent_power

    return (
        PortField(Port.C, base, c, c_inc),
        PortField(Port.D, base.shifted(1), d, d_inc),
    )


# ==================================
# INTERFEROMETER COMPOSITION
# ==================================

def _coefficients(t1, r1, t2, r2, theta1, theta2, phi_path):
    """Array-capable effective coefficients"""
    t1p = t1 * t2 * np.exp(1j * phi_path) - r1 * r2 * np.exp(1j * (theta1 - theta2))
    r1p = r1 * t2 * np.exp(1j * (phi_path - theta1)) + t1 * r2 * np.exp(-1j * theta2)
    t2p = t1 * t2 - r1 * r2 * np.exp(1j * (theta2 - theta1 + phi_path))
    r2p = r1 * t2 * np.exp(1j * theta1) + t1 * r2 * np.exp(1j * (theta2 + phi_path))
    return t1p, r1p, t2p, r2p


def effective_coeffs(cfg: AbiConfig) -> EffectiveCoeffs:
    """Effective coefficients of the two-AOM interferometer for its current phases"""
    a1, a2 = cfg.aom1, cfg.aom2
    t1p, r1p, t2p, r2p = _coefficients(
        a1.effective_t, a1.effective_r, a2.effective_t, a2.effective_r,
        a1.theta, a2.theta, cfg.path_phase,
    )
    return EffectiveCoeffs(complex(t1p), complex(r1p), complex(t2p), complex(r2p))


def abi_transfer(in_a: PortField, in_b: PortField, cfg: AbiConfig) -> Tuple[PortField, PortField]:
    """
    Propagate two input fields through the interferometer

    The coherent output amplitudes are e = t1' a - r1' b and f = r2' a + t2' b.
    Each arm contributes a matched part (amplitude weight sqrt(V)) and a
    mismatched part (power 1 - V) that reaches the port incoherently, so the
    interference term is weighted by V. The lumped efficiency scales both.

    Args:
        in_a: field on port a (omega+Omega)
        in_b: field on port b (omega)
        cfg: interferometer parameters

    Returns:
        Tuple of (out_e at omega+Omega, out_f at omega)
    """
    if in_a.incoherent_power or in_b.incoherent_power:
        raise ConfigError("interferometer inputs must be fully coherent fields")

    # first stage gives the arm fields; it also validates ports and labels
    arm_c, arm_d = aom_scatter(in_a, in_b, cfg.aom1)
    coeffs = effective_coeffs(cfg)

    a = complex(in_a.amplitude)
    b = complex(in_b.amplitude)
    e_ideal = coeffs.t1p * a - coeffs.r1p * b
    f_ideal = coeffs.r2p * a + coeffs.t2p * b

    t2 = cfg.aom2.effective_t
    r2 = cfg.aom2.effective_r
    pc = abs(arm_c.amplitude) ** 2
    pd = abs(arm_d.amplitude) ** 2
    v = cfg.visibility
    eta = cfg.efficiency

    e_inc = (1.0 - v) * (t2 * t2 * pd + r2 * r2 * pc)
    f_inc = (1.0 - v) * (t2 * t2 * pc + r2 * r2 * pd)
    scale = math.sqrt(eta * v)

    # e keeps the label of a, f keeps the label of b
    freq_e = arm_d.frequency
    freq_f = arm_c.frequency
    return (
        PortField(Port.E, freq_e, scale * e_ideal, eta * e_inc),
        PortField(Port.F, freq_f, scale * f_ideal, eta * f_inc),
    )


def cascade_transfer(in_a: PortField, in_b: PortField, cfg: AbiConfig) -> Tuple[PortField, PortField]:
    """
    Ideal interferometer output built from two explicit AOM stages

    The omega+Omega arm (output d of the first AOM) picks up the path phase and
    enters the second AOM on port a; the omega arm enters on port b. Used to
    cross-check the closed-form coefficients.
    """
    arm_c, arm_d = aom_scatter(in_a, in_b, cfg.aom1)
    a2 = PortField(Port.A, arm_d.frequency, arm_d.amplitude * cmath.exp(1j * cfg.path_phase))
    b2 = PortField(Port.B, arm_c.frequency, arm_c.amplitude)
    out_c, out_d = aom_scatter(a2, b2, cfg.aom2)
    return (
        PortField(Port.E, out_d.frequency, out_d.amplitude),
        PortField(Port.F, out_c.frequency, out_c.amplitude),
    )


def abi_intensities(alpha_a, alpha_b, r1, r2, theta1, theta2, path_phase,
                    visibility: float = 1.0, efficiency: float = 1.0):
    """
    Vectorized output intensities (I_e, I_f) for arrays of phases and splitting amplitudes

    Follows exactly the model of abi_transfer; any argument may be a numpy array.
    """
    r1 = np.asarray(r1, dtype=float)
    r2 = np.asarray(r2, dtype=float)
    t1 = np.sqrt(1.0 - r1 * r1)
    t2 = np.sqrt(1.0 - r2 * r2)
    t1p, r1p, t2p, r2p = _coefficients(t1, r1, t2, r2, theta1, theta2, path_phase)

    e_ideal = t1p * alpha_a - r1p * alpha_b
    f_ideal = r2p * alpha_a + t2p * alpha_b

    # arm powers after the first AOM
    pc = np.abs(t1 * alpha_b + np.exp(1j * theta1) * r1 * alpha_a) ** 2
    pd = np.abs(t1 * alpha_a - np.exp(-1j * theta1) * r1 * alpha_b) ** 2

    v = visibility
    i_e = efficiency * (v * np.abs(e_ideal) ** 2 + (1.0 - v) * (t2 * t2 * pd + r2 * r2 * pc))
    i_f = efficiency * (v * np.abs(f_ideal) ** 2 + (1.0 - v) * (t2 * t2 * pc + r2 * r2 * pd))
    return i_e, i_f


def fringe_parameters(cfg: AbiConfig) -> Tuple[float, float]:
    """
    Effective (eta, V) of the b -> e fringe

    Reduces to (efficiency, visibility) for balanced AOMs; for unbalanced or
    RF-off AOMs the fringe is I_e = (eta_e/2)[1 + V_e cos(phi)] I_in.
    """
    eta_e, v_e = fringe_parameters_from(
        cfg.aom1.effective_r, cfg.aom2.effective_r, cfg.efficiency, cfg.visibility
    )
    return float(eta_e), float(v_e)


def fringe_parameters_from(r1, r2, efficiency: float, visibility: float):
    """Array form of fringe_parameters over diffraction amplitudes r1, r2"""
    r1 = np.asarray(r1, dtype=float)
    r2 = np.asarray(r2, dtype=float)
    t1_sq = 1.0 - r1 * r1
    t2_sq = 1.0 - r2 * r2
    arm_sum = r1 * r1 * t2_sq + t1_sq * r2 * r2
    cross = 2.0 * r1 * r2 * np.sqrt(t1_sq * t2_sq)
    safe = np.where(arm_sum > 0.0, arm_sum, 1.0)
    eta_e = 2.0 * efficiency * arm_sum
    v_e = np.where(arm_sum > 0.0, visibility * cross / safe, 0.0)
    return eta_e, v_e


# ==================================
# INTENSITY RELATIONS
# ==================================

def ideal_intensity(phi, i_in):
    """Output intensity at e for balanced, ideal AOMs: (1/2)[1 + cos(phi)] I_in"""
    return 0.5 * (1.0 + np.cos(phi)) * i_in


def observed_intensity(eta, v, delta_omega, t, phi, i_in):
    """Output intensity with losses, mode mismatch and RF detuning: (eta/2)[1 + V cos(dw t + phi)] I_in"""
    return 0.5 * eta * (1.0 + v * np.cos(delta_omega * t + phi)) * i_in


def switch_efficiency(eta: float, v: float) -> float:
    """Transmission of the switch locked to the fringe maximum"""
    return 0.5 * eta * (1.0 + v)


def splitting_phase(target_t1_sq: float) -> float:
    """
    Overall phase giving |t1'|^2 = target with balanced 50 % AOMs

    With t = r = 1/sqrt(2), |t1'|^2 = (1 - cos(phi)) / 2.
    """
    if not 0.0 <= target_t1_sq <= 1.0:
        raise ConfigError(f"splitting ratio must lie in [0, 1], got {target_t1_sq}")
    return math.acos(1.0 - 2.0 * target_t1_sq)
