"""Phenomenological noise: quasi-static flux noise, drive jitter, excess frequency noise.

All noise enters the bifurcating mode as Gaussian offsets that are constant
during one pulse.  Offsets are expressed as shifts of the mode frequency (a
drive-frequency jitter ``j`` is the mode shift ``-j``) plus a multiplicative
factor on the drive amplitude.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import parallel
from .circuit import CircuitParams, ModeSpectrum, kerr_coefficients, mode_frequency_derivatives
from .constants import GAUSS_10_90
from .errors import ConfigError, DegenerateData

POLICIES = ("per_pulse", "per_curve")


@dataclass(frozen=True)
class NoiseSpec:
    """RMS noise amplitudes.

    sigma_flux is in flux quanta, drive_amp_jitter is relative (amplitude),
    drive_freq_jitter and excess_freq_noise are in Hz.  ``resample_policy``
    controls how often the flux offset is redrawn; the other terms are always
    drawn per pulse.
    """

    sigma_flux: float = 0.0
    drive_amp_jitter: float = 0.0
    drive_freq_jitter: float = 0.0
    excess_freq_noise: float = 0.0
    resample_policy: str = "per_curve"

    def __post_init__(self):
        for name in ("sigma_flux", "drive_amp_jitter", "drive_freq_jitter", "excess_freq_noise"):
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                raise ConfigError(f"{name} must be a finite value >= 0, got {v!r}")
        if self.resample_policy not in POLICIES:
            raise ConfigError(f"resample_policy must be one of {POLICIES}")

    @property
    def silent(self) -> bool:
        return (self.sigma_flux == 0 and self.drive_amp_jitter == 0
                and self.drive_freq_jitter == 0 and self.excess_freq_noise == 0)


def sample_quasistatic_flux(noise: NoiseSpec, seed: int, n: int = 1,
                            curve_key: Sequence[int] = (), point_key: Sequence[int] = ()) -> np.ndarray:
    """Flux offsets (flux quanta) for ``n`` pulses.

    Under ``per_curve`` one draw keyed by ``curve_key`` is shared by every
    pulse of the curve; under ``per_pulse`` each pulse gets its own draw.
    """
    if noise.sigma_flux == 0:
        return np.zeros(n)
    if noise.resample_policy == "per_curve":
        x = parallel.rng_for(seed, parallel.S_OFFSETS, *curve_key, 0).standard_normal()
        return np.full(n, noise.sigma_flux * x)
    rng = parallel.rng_for(seed, parallel.S_OFFSETS, *curve_key, *point_key, 1)
    return noise.sigma_flux * rng.standard_normal(n)


def flux_to_shift(spectrum: ModeSpectrum, dphi, mode: int = 3):
    """Mode-frequency shift for flux offsets, to second order in the offset."""
    d1, d2 = spectrum.dnu_dphi(mode), spectrum.d2nu_dphi2(mode)
    dphi = np.asarray(dphi, dtype=float)
    return d1 * dphi + 0.5 * d2 * dphi ** 2


def trajectory_offsets(noise: Optional[NoiseSpec], spectrum: ModeSpectrum, n: int, seed: int,
                       *, curve_key: Sequence[int] = (), point_key: Sequence[int] = (),
                       mode: int = 3):
    """Per-pulse (mode-frequency shift in Hz, drive-amplitude factor)."""
    shift = np.zeros(n)
    amp = np.ones(n)
    if noise is None or noise.silent:
        return shift, amp
    if noise.sigma_flux > 0:
        shift += flux_to_shift(spectrum, sample_quasistatic_flux(noise, seed, n, curve_key,
                                                                 point_key), mode)
    base = (seed, parallel.S_OFFSETS, *curve_key, *point_key)
    if noise.excess_freq_noise > 0:
        shift += noise.excess_freq_noise * parallel.rng_for(*base, 2).standard_normal(n)
    if noise.drive_freq_jitter > 0:
        shift -= noise.drive_freq_jitter * parallel.rng_for(*base, 3).standard_normal(n)
    if noise.drive_amp_jitter > 0:
        amp += noise.drive_amp_jitter * parallel.rng_for(*base, 4).standard_normal(n)
    return shift, amp


# ---------------------------------------------------------------- widths

def flux_broadening(params: CircuitParams, sigma_flux: float, flux: float,
                    mode: int = 3) -> float:
    """First-order 10-90 width contribution c_g |d nu/d phi| sigma."""
    d1, _ = mode_frequency_derivatives(params, mode, flux)
    return GAUSS_10_90 * abs(d1) * sigma_flux


def second_order_broadening(params: CircuitParams, sigma_flux: float, flux: float = 0.0,
                            mode: int = 3) -> float:
    """10-90 width from the quadratic term: std of nu'' dphi^2 / 2 is |nu''| sigma^2 / sqrt 2."""
    _, d2 = mode_frequency_derivatives(params, mode, flux)
    return GAUSS_10_90 * abs(d2) * sigma_flux ** 2 / math.sqrt(2)


def broadened_width(params: CircuitParams, env, noise: NoiseSpec, flux: float,
                    delta_nu: float, width0: Optional[float] = None, mode: int = 3) -> float:
    """Delta S(phi) = Delta S_0 + c_g |d nu/d phi| sigma_phi (Hz).

    Delta S_0 is ``width0`` if given, else the activation-law width at zero
    flux and detuning ``delta_nu``.
    """
    if width0 is None:
        from .dynamics import dykman_width
        spec0 = kerr_coefficients(params, 0.0, (mode,), with_slopes=False)
        width0 = dykman_width(spec0, env, delta_nu, mode) * spec0.nu(mode)
    return width0 + flux_broadening(params, noise.sigma_flux, flux, mode)


def drive_jitter_sigma(noise: NoiseSpec, photon_flux: Optional[float] = None,
                       region=None) -> float:
    """Equivalent Gaussian RMS of nu_d - nu_sw caused by drive jitter (Hz)."""
    s2 = noise.drive_freq_jitter ** 2
    if noise.drive_amp_jitter > 0:
        if region is None or photon_flux is None:
            raise ValueError("amplitude jitter needs the drive flux and bistability region")
        eps = 1e-4
        d0 = region.switching_detuning(photon_flux)
        slope = (region.switching_detuning(photon_flux * (1 + eps)) - d0) / eps
        # Power fluctuates by 2x the relative amplitude jitter.
        s2 += (slope * 2 * noise.drive_amp_jitter) ** 2
    return math.sqrt(s2)


def drive_jitter_contribution(spectrum: ModeSpectrum, noise: NoiseSpec,
                              photon_flux: Optional[float] = None, mode: int = 3) -> float:
    """10-90 width of the drive-jitter smear alone, c_g sigma_eq (Hz)."""
    region = None
    if noise.drive_amp_jitter > 0:
        from .dynamics import bistability_region
        region = bistability_region(spectrum, mode)
    return GAUSS_10_90 * drive_jitter_sigma(noise, photon_flux, region)


def combine_quadrature(*widths: float) -> float:
    return math.sqrt(sum(w * w for w in widths))


def gauss_hermite_smear(p_func, nu, sigma: float, order: int = 60) -> np.ndarray:
    """E[p_func(nu, shift)] over a Gaussian shift of RMS ``sigma``."""
    nu = np.asarray(nu, dtype=float)
    if sigma == 0:
        return np.asarray(p_func(nu, 0.0), dtype=float)
    x, w = np.polynomial.hermite.hermgauss(order)
    out = np.zeros_like(nu)
    for xi, wi in zip(x, w):
        out += wi * np.asarray(p_func(nu, math.sqrt(2) * sigma * xi), dtype=float)
    return out / math.sqrt(math.pi)


# ---------------------------------------------------------------- fitting

def fit_flux_noise(params: CircuitParams, flux, widths, mode: int = 3, weights=None):
    """Fit Delta S(phi) = Delta S_0 + c_g |nu'(phi)| sigma for (Delta S_0, sigma).

    The model is linear in both unknowns, so this is weighted linear least
    squares; uncertainties are residual-scaled.
    """
    from .analysis import FitResult
    flux = np.asarray(flux, dtype=float)
    widths = np.asarray(widths, dtype=float)
    if flux.shape != widths.shape or flux.size < 3:
        raise ValueError("need at least 3 (flux, width) pairs")
    g = np.array([GAUSS_10_90 * abs(mode_frequency_derivatives(params, mode, f)[0]) for f in flux])
    if np.ptp(g) == 0:
        raise DegenerateData("all points have the same flux slope; sigma is not identifiable")
    w = np.ones_like(widths) if weights is None else np.asarray(weights, dtype=float)
    sw = np.sqrt(w)
    A = np.column_stack([np.ones_like(g), g]) * sw[:, None]
    b = widths * sw
    coef, *_ = np.linalg.lstsq(A, b, rcond=None)
    resid = b - A @ coef
    dof = max(1, len(b) - 2)
    s2 = float(resid @ resid) / dof
    cov = s2 * np.linalg.inv(A.T @ A)
    sig = np.sqrt(np.diag(cov))
    return FitResult(params={"delta_s0": float(coef[0]), "sigma_flux": float(coef[1])},
                     sigmas={"delta_s0": float(sig[0]), "sigma_flux": float(sig[1])},
                     residual_rms=float(np.sqrt(np.mean((widths - (coef[0] + coef[1] * g)) ** 2))),
                     converged=True, covariance=cov)


def synthetic_flux_widths(params: CircuitParams, flux, sigma_flux: float, width0: float,
                          rel_noise: float = 0.0, seed: int = 0, mode: int = 3) -> np.ndarray:
    """Delta S(phi) from the additive model with optional relative Gaussian scatter."""
    flux = np.asarray(flux, dtype=float)
    w = np.array([width0 + flux_broadening(params, sigma_flux, f, mode) for f in flux])
    if rel_noise > 0:
        w = w * (1 + rel_noise * parallel.rng_for(seed, parallel.S_SYNTH, 8).standard_normal(w.size))
    return w
