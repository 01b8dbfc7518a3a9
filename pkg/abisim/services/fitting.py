"""
Fringe fitting

Recovers (V, eta, phi), and optionally the beat frequency, from a photodiode
trace or a photon-count record by nonlinear least squares of

    y(t) = b + (eta / 2) [1 + V s cos(dw t + phi)] I_in

where s = sinc(dw w / 2) accounts for integration over counting windows of
width w (s = 1 for instantaneous samples) and b is a known background.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
from lmfit import Parameters, minimize

from .detectors import CountSeries, TimeSeries
from .errors import ConfigError, IllConditioned, NonConvergence

logger = logging.getLogger(__name__)

PHI_GRID_POINTS = 8


class FitMode(str, Enum):
    """BEATING keeps delta_omega fixed; SCAN fits it"""
    BEATING = 'beating'
    SCAN = 'scan'


@dataclass
class FitResult:
    v_hat: float
    eta_hat: float
    phi_hat: float
    delta_omega_hat: float
    residual_rms: float
    converged: bool
    mode: str = FitMode.BEATING.value
    weighted: bool = False
    n_points: int = 0
    nfev: int = 0
    gradient_ratio: float = 0.0
    stderr: Dict[str, Optional[float]] = field(default_factory=dict)
    covar: Optional[List[List[float]]] = None
    covar_names: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'v_hat': self.v_hat,
            'eta_hat': self.eta_hat,
            'phi_hat': self.phi_hat,
            'delta_omega_hat': self.delta_omega_hat,
            'residual_rms': self.residual_rms,
            'converged': self.converged,
            'mode': self.mode,
            'weighted': self.weighted,
            'n_points': self.n_points,
            'nfev': self.nfev,
            'gradient_ratio': self.gradient_ratio,
            'stderr': dict(self.stderr),
            'covar': self.covar,
            'covar_names': list(self.covar_names),
        }


# ==================================
# MODEL
# ==================================

def window_factor(delta_omega: float, window_s: float) -> float:
    """Fringe contrast surviving integration over a window: sinc(dw w / 2)"""
    x = 0.5 * delta_omega * window_s
    return float(np.sinc(x / math.pi))


def fringe_model(t, v: float, eta: float, phi: float, delta_omega: float, i_in: float,
                 window_s: float = 0.0, background: float = 0.0):
    s = window_factor(delta_omega, window_s) if window_s else 1.0
    return background + 0.5 * eta * i_in * (1.0 + v * s * np.cos(delta_omega * t + phi))


def _jacobian(t, v, eta, phi, dw, i_in, window_s, fit_dw: bool) -> np.ndarray:
    s = window_factor(dw, window_s) if window_s else 1.0
    c = np.cos(dw * t + phi)
    sn = np.sin(dw * t + phi)
    half = 0.5 * i_in
    cols = [half * eta * s * c, half * (1.0 + v * s * c), -half * eta * v * s * sn]
    if fit_dw:
        cols.append(-half * eta * v * s * t * sn)
    return np.column_stack(cols)


def _estimate_delta_omega(t: np.ndarray, y: np.ndarray) -> float:
    """Dominant angular frequency of a uniformly sampled record (zero-padded FFT peak)"""
    dt = t[1] - t[0]
    n = len(y)
    pad = 1 << int(math.ceil(math.log2(16 * n)))
    spectrum = np.abs(np.fft.rfft(y - y.mean(), pad))
    spectrum[0] = 0.0
    k = int(np.argmax(spectrum))
    return 2.0 * math.pi * k / (pad * dt)


# ==================================
# FIT
# ==================================

def _series_arrays(series: Union[TimeSeries, CountSeries]) -> Tuple[np.ndarray, np.ndarray, float, bool]:
    if isinstance(series, CountSeries):
        return series.window_times(), series.counts.astype(float), series.window_s, True
    if isinstance(series, TimeSeries):
        return series.times(), series.samples, 0.0, False
    raise ConfigError(f"cannot fit a {type(series).__name__}")


def _residual(params, t, y, weights, i_in, window_s, background):
    p = params.valuesdict()
    model = fringe_model(t, p['v'], p['eta'], p['phi'], p['delta_omega'],
                         i_in, window_s, background)
    return (model - y) * weights


def _run(t, y, weights, i_in, window_s, background, start: Dict[str, float],
         fit_dw: bool, max_nfev: int):
    params = Parameters()
    params.add('v', value=start['v'], min=0.0, max=1.0)
    params.add('eta', value=start['eta'], min=0.0)
    params.add('phi', value=start['phi'])
    params.add('delta_omega', value=start['delta_omega'], vary=fit_dw)
    return minimize(
        _residual, params, method='leastsq',
        args=(t, y, weights, i_in, window_s, background),
        max_nfev=max_nfev, xtol=1e-13, ftol=1e-13,
    )


def fit_fringe(series: Union[TimeSeries, CountSeries], i_in: float, delta_omega: float,
               fit_mode: FitMode = FitMode.BEATING, background: float = 0.0,
               max_nfev: int = 4000, gtol: float = 1e-6) -> FitResult:
    """
    Fit the fringe model to a detector record

    Count records are fitted with Poisson (Pearson) weights taken from a first
    unweighted pass; photodiode records use plain least squares.

    Args:
        series: TimeSeries (photodiode) or CountSeries (photon counts)
        i_in: input intensity in the units of the record (counts per window
            at unit transmission for count data)
        delta_omega: beat angular frequency (rad/s); the starting value in SCAN mode
        fit_mode: BEATING (delta_omega fixed) or SCAN (delta_omega fitted)
        background: known additive offset (dark counts per window)
        max_nfev: function-evaluation limit per start
        gtol: gradient-norm convergence tolerance

    Returns:
        FitResult with phi_hat wrapped to (-pi, pi]

    Raises:
        IllConditioned: the record spans less than half a fringe
        NonConvergence: the refinement hit the evaluation limit
    """
    fit_mode = FitMode(fit_mode)
    if not i_in > 0:
        raise ConfigError(f"i_in must be positive, got {i_in}")
    t_abs, y, window_s, counts = _series_arrays(series)
    if len(y) < 4:
        raise IllConditioned("need at least four samples to fit a fringe", {'n_points': len(y)})

    fit_dw = fit_mode == FitMode.SCAN
    span = float(t_abs[-1] - t_abs[0]) + (window_s if counts else float(t_abs[1] - t_abs[0]))
    dw0 = _estimate_delta_omega(t_abs, y) if fit_dw else float(delta_omega)
    if fit_dw and delta_omega:
        dw0 = math.copysign(dw0, delta_omega)
    if abs(dw0) * span < math.pi:
        raise IllConditioned(
            f"record spans {abs(dw0) * span / (2 * math.pi):.3f} fringes, need at least half a fringe",
            {'delta_omega': dw0, 'span_s': span},
        )

    # fit on a centred time axis; phi is moved back to t = 0 at the end
    t_c = 0.5 * (t_abs[0] + t_abs[-1])
    t = t_abs - t_c
    s0 = window_factor(dw0, window_s) if window_s else 1.0
    y_hi, y_lo = float(np.max(y)) - background, float(np.min(y)) - background
    total = max(y_hi + y_lo, 1e-300)
    v0 = min(max((y_hi - y_lo) / total / s0, 0.01), 0.999)
    eta0 = max(total / i_in, 1e-6)

    weights = np.ones_like(y)
    best = None
    for k in range(PHI_GRID_POINTS):
        start = {'v': v0, 'eta': eta0, 'phi': 2.0 * math.pi * k / PHI_GRID_POINTS, 'delta_omega': dw0}
        out = _run(t, y, weights, i_in, window_s, background, start, fit_dw, max_nfev)
        if best is None or out.chisqr < best.chisqr:
            best = out

    weighted = False
    if counts:
        p = best.params.valuesdict()
        model = fringe_model(t, p['v'], p['eta'], p['phi'], p['delta_omega'], i_in, window_s, background)
        weights = 1.0 / np.sqrt(np.maximum(model, 1.0))
        best = _run(t, y, weights, i_in, window_s, background, p, fit_dw, max_nfev)
        weighted = True

    p = best.params.valuesdict()
    diagnostics = {'nfev': best.nfev, 'message': str(best.message), 'params': dict(p)}
    if best.nfev >= max_nfev or not best.success:
        logger.warning(f"Fringe fit did not converge: {best.message}")
        raise NonConvergence(f"fringe fit did not converge after {best.nfev} evaluations", diagnostics)

    model = fringe_model(t, p['v'], p['eta'], p['phi'], p['delta_omega'], i_in, window_s, background)
    raw = model - y
    r = raw * weights
    jac = _jacobian(t, p['v'], p['eta'], p['phi'], p['delta_omega'], i_in, window_s, fit_dw) * weights[:, None]
    grad = np.linalg.norm(jac.T @ r)
    scale = np.linalg.norm(jac) * np.linalg.norm(r)
    floor = 1e-12 * np.linalg.norm(jac) * max(np.linalg.norm(y * weights), 1e-300)
    ratio = float(grad / scale) if scale > 0 else 0.0
    converged = bool(grad <= gtol * scale + floor)
    if not converged:
        logger.warning(f"Fringe fit gradient criterion not met (ratio {ratio:.2e})")

    phi = p['phi'] - p['delta_omega'] * t_c
    phi = math.pi - (math.pi - phi) % (2.0 * math.pi)
    stderr = {name: (float(best.params[name].stderr) if best.params[name].stderr is not None else None)
              for name in ('v', 'eta', 'phi', 'delta_omega') if best.params[name].vary}
    # rows and columns follow best.var_names; phi is the centred-axis phase
    covar = best.covar.tolist() if best.covar is not None else None

    return FitResult(
        v_hat=float(p['v']),
        eta_hat=float(p['eta']),
        phi_hat=float(phi),
        delta_omega_hat=float(p['delta_omega']),
        residual_rms=float(np.sqrt(np.mean(raw * raw))),
        converged=converged,
        mode=fit_mode.value,
        weighted=weighted,
        n_points=int(len(y)),
        nfev=int(best.nfev),
        gradient_ratio=ratio,
        stderr=stderr,
        covar=covar,
        covar_names=list(best.var_names) if covar is not None else [],
    )
