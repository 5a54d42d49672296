"""Cross-Kerr spectroscopy of the coupled modes through the bifurcating mode."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .analysis import FitResult, lorentzian_fit
from .circuit import ModeSpectrum, loading_from_frequency
from .dynamics import SwitchingModel, ThermalEnvironment
from .errors import BiasDrift, LinearityViolated, NotConverged, UncoupledMode
from .measurement import PulseSpec, switching_probability
from .noise import NoiseSpec

BIAS_TARGET = 0.10
BIAS_TOL = 0.02
DRIFT_TOL = 0.05
LINEARITY = 0.1


def peak_occupation(spectrum: ModeSpectrum, n: int, probe_power: float,
                    ext_fraction: float = 0.5) -> float:
    """On-resonance photon number of a linear mode, 4 gamma_ext flux / gamma^2."""
    g = spectrum.gamma(n)
    return 4 * ext_fraction * g * probe_power / g ** 2


def coupled_mode_occupation(spectrum: ModeSpectrum, n: int, nu_probe, probe_power: float,
                            ext_fraction: float = 0.5, check: bool = True):
    """Lorentzian photon number of mode ``n`` under a weak CW probe."""
    g = spectrum.gamma(n)
    peak = peak_occupation(spectrum, n, probe_power, ext_fraction)
    if check and abs(spectrum.kerr(n)) * peak > LINEARITY * g:
        raise LinearityViolated(
            f"K_{n} n = {abs(spectrum.kerr(n)) * peak:.3g} Hz exceeds {LINEARITY} gamma_{n}"
        )
    hw2 = (0.5 * g) ** 2
    nu = np.asarray(nu_probe, dtype=float)
    out = peak * hw2 / ((nu - spectrum.nu(n)) ** 2 + hw2)
    return float(out) if out.ndim == 0 else out


def _coupling(spectrum: ModeSpectrum, n: int, target: int) -> float:
    lam = spectrum.cross(target, n) if n != target else 0.0
    if n % 2 == 0 or lam == 0:
        raise UncoupledMode(f"mode {n} has no cross-Kerr coupling to mode {target}")
    return lam


def cross_kerr_shift(spectrum: ModeSpectrum, n: int, n_bar, target: int = 3):
    """Shift of the target mode, lambda_{target,n} * n_bar (Hz)."""
    return _coupling(spectrum, n, target) * n_bar


def photon_sensitivity(spectrum: ModeSpectrum, width: float, n: int, target: int = 3) -> float:
    """Photons in mode ``n`` that shift the target mode by one S-curve width."""
    return width / _coupling(spectrum, n, target)


@dataclass
class SpectroscopyScan:
    target_mode: int
    probe_grid: np.ndarray
    probe_power: float
    trace: List[tuple] = field(default_factory=list)
    fitted_center: float = math.nan
    fitted_width: float = math.nan
    fit: Optional[FitResult] = None
    bias_pre: float = math.nan
    bias_post: float = math.nan

    @property
    def p(self) -> np.ndarray:
        return np.array([t[1] for t in self.trace])


def bias_frequency(model: SwitchingModel, target: float = BIAS_TARGET) -> float:
    """Drive frequency where the activation model gives P_s = ``target``."""
    return model.nu_at(target)


def probe_power_for(spectrum: ModeSpectrum, model: SwitchingModel, n: int, nu_bias: float,
                    delta_p: float = 0.5, ext_fraction: float = 0.5, target: int = 3) -> float:
    """Probe flux whose on-resonance shift raises P_s at the bias point by ``delta_p``."""
    lam = _coupling(spectrum, n, target)
    p0 = float(model.p(nu_bias))
    goal = min(p0 + delta_p, 0.999)
    # A positive lambda moves nu_3 up; pick the shift direction that raises P_s.
    s_dir = math.copysign(1.0, model.sign)
    f = lambda s: float(model.p(nu_bias, shift=s_dir * s)) - goal
    hi = model.w
    while f(hi) < 0:
        hi *= 2
    shift = brentq(f, 0.0, hi, xtol=1e-9)
    n_bar = shift / abs(lam)
    g = spectrum.gamma(n)
    return n_bar * g ** 2 / (4 * ext_fraction * g)


def run_scan(scan: SpectroscopyScan, bias: PulseSpec, spectrum: ModeSpectrum,
             env: ThermalEnvironment, noise: Optional[NoiseSpec], model: SwitchingModel,
             n_pulses: int, master_seed: int, *, bias_pulses: int = 4000,
             scan_index: int = 0, ext_fraction: float = 0.5, fit: bool = True,
             check_bias: bool = True) -> SpectroscopyScan:
    """Sweep a CW probe across ``scan.target_mode`` and record the bias-point P_s.

    The bias pulse must sit at P_s = 0.10 +- 0.02 (checked before the sweep
    with ``bias_pulses`` pulses) and must not move by more than 0.05 across
    the sweep.  Switching is drawn from the activation model.
    """
    n = scan.target_mode
    coupled = n % 2 == 1 and spectrum.cross(3, n) != 0 if n != 3 else False
    lam = spectrum.cross(3, n) if coupled else 0.0
    # Evaluate the linearity guard once at the peak.
    coupled_mode_occupation(spectrum, n, spectrum.nu(n), scan.probe_power, ext_fraction)
    base = (scan_index,)

    def measure(shift, key, pulses):
        return switching_probability(bias, pulses, spectrum, env, noise, master_seed,
                                     engine="analytic", model=model, key=key, curve_key=base,
                                     extra_shift=shift)

    pre = measure(0.0, (0, 0), bias_pulses)
    scan.bias_pre = pre.p_s
    if check_bias and abs(pre.p_s - BIAS_TARGET) > BIAS_TOL:
        raise BiasDrift(f"bias point at P_s = {pre.p_s:.3f}, outside {BIAS_TARGET} +- {BIAS_TOL}")
    trace = []
    for i, nu_p in enumerate(np.asarray(scan.probe_grid, dtype=float)):
        nbar = coupled_mode_occupation(spectrum, n, nu_p, scan.probe_power, ext_fraction,
                                       check=False)
        est = measure(lam * nbar, (1, i), n_pulses)
        trace.append((float(nu_p), est.p_s, est.ci_low, est.ci_high))
    post = measure(0.0, (2, 0), bias_pulses)
    scan.bias_post = post.p_s
    if check_bias and abs(post.p_s - pre.p_s) > DRIFT_TOL:
        raise BiasDrift(f"bias drifted from {pre.p_s:.3f} to {post.p_s:.3f} during the scan")
    scan.trace = trace
    if fit and coupled:
        arr = np.array([(t[0], t[1]) for t in trace])
        # Binomial standard errors, floored at half a count so empty bins keep finite weight.
        q = np.clip(arr[:, 1], 0.5 / n_pulses, 1 - 0.5 / n_pulses)
        try:
            res = lorentzian_fit(arr, sigma=np.sqrt(q * (1 - q) / n_pulses))
        except NotConverged as exc:
            res = exc.best
        scan.fit = res
        scan.fitted_center = res.params["center"]
        scan.fitted_width = res.params["width"]
    return scan


def beta_from_mode_centers(centers: Dict[int, float], nu1_bare: float,
                           sigmas: Optional[Dict[int, float]] = None):
    """Participation ratio from odd-mode frequencies: a = cot(x)/x, beta = a/(1+a).

    Returns (beta, sigma_beta, per-mode betas).  With ``sigmas`` the per-mode
    values are combined with inverse-variance weights, else averaged.
    """
    per = {}
    errs = {}
    for n, nu in centers.items():
        a = loading_from_frequency(nu, nu1_bare, n)
        per[n] = a / (1 + a)
        if sigmas is not None:
            eps = max(1.0, 1e-9 * nu)
            a2 = loading_from_frequency(nu + eps, nu1_bare, n)
            errs[n] = abs((a2 / (1 + a2) - per[n]) / eps) * sigmas[n]
    vals = np.array(list(per.values()))
    if sigmas is not None and all(e > 0 for e in errs.values()):
        w = np.array([1 / errs[n] ** 2 for n in per])
        b = float(np.sum(w * vals) / np.sum(w))
        return b, float(1 / math.sqrt(np.sum(w))), per
    sem = float(np.std(vals, ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else math.nan
    return float(np.mean(vals)), sem, per
