"""Least-squares fits: Lorentzian resonances, flux-tuning curves and S-curves.

All nonlinear fits run scipy's Levenberg-Marquardt (MINPACK) on rescaled
parameters; uncertainties come from the Jacobian at the optimum, scaled by
the reduced residual.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Sequence

import numpy as np
from scipy.optimize import least_squares

from .circuit import CircuitParams, mode_frequency, reduce_flux
from .constants import PHI0
from .errors import DegenerateData, InsufficientSpan, NotConverged, RangeNotSpanned

FTOL = 1e-12
XTOL = 1e-12


@dataclass
class FitResult:
    params: Dict[str, float]
    sigmas: Dict[str, float]
    residual_rms: float
    converged: bool
    covariance: Optional[np.ndarray] = None
    derived: Dict[str, float] = field(default_factory=dict)
    message: str = ""

    def __getitem__(self, name):
        if name in self.params:
            return self.params[name]
        return self.derived[name]

    def sigma(self, name) -> float:
        return self.sigmas[name]

    def rows(self):
        """(name, value, sigma) for params then derived quantities."""
        out = [(k, v, self.sigmas.get(k, math.nan)) for k, v in self.params.items()]
        out += [(k, v, self.sigmas.get(k, math.nan)) for k, v in self.derived.items()]
        return out


def _covariance(res, scale: np.ndarray, weighted: bool = False):
    J = res.jac
    m, p = J.shape
    try:
        jtj_inv = np.linalg.inv(J.T @ J)
    except np.linalg.LinAlgError:
        jtj_inv = np.linalg.pinv(J.T @ J)
    s2 = 1.0 if weighted else float(res.fun @ res.fun) / max(1, m - p)
    cov = jtj_inv * s2
    return cov * np.outer(scale, scale)


def _run(fun, x0, **kw):
    return least_squares(fun, x0, method="lm", ftol=FTOL, xtol=XTOL, gtol=1e-15,
                         max_nfev=kw.pop("max_nfev", 4000), **kw)


# ---------------------------------------------------------------- Lorentzian

def s21_model(nu, center: float, gamma_fwhm: float, amplitude: float, offset: float):
    """offset + amplitude (gamma/2)^2 / ((nu - center)^2 + (gamma/2)^2)."""
    if not gamma_fwhm > 0:
        raise ValueError("gamma_fwhm must be positive")
    hw2 = (0.5 * gamma_fwhm) ** 2
    nu = np.asarray(nu, dtype=float)
    return offset + amplitude * hw2 / ((nu - center) ** 2 + hw2)


def _as_trace(trace, y=None):
    if y is None:
        arr = np.asarray(trace, dtype=float)
        return arr[:, 0], arr[:, 1]
    return np.asarray(trace, dtype=float), np.asarray(y, dtype=float)


def lorentzian_guess(nu, y):
    i = int(np.argmax(y))
    offset = float(np.min(y))
    amp = float(y[i] - offset)
    half = offset + 0.5 * amp
    above = np.nonzero(y >= half)[0]
    width = float(nu[above.max()] - nu[above.min()]) if above.size > 1 else 0.0
    if width <= 0:
        width = float(np.min(np.diff(np.sort(nu)))) * 2
    return float(nu[i]), width, amp, offset


def lorentzian_fit(trace, y=None, *, sigma=None, min_points: int = 8,
                   min_span: float = 2.0) -> FitResult:
    """Fit :func:`s21_model` to (nu, magnitude) samples.

    Accepts either an (N, 2) array or separate ``nu`` and ``y`` arrays.  With
    per-point standard errors ``sigma`` the fit is chi-square weighted and the
    covariance is not rescaled by the residuals.
    """
    nu, y = _as_trace(trace, y)
    order = np.argsort(nu)
    nu, y = nu[order], y[order]
    sw = None if sigma is None else np.asarray(sigma, dtype=float)[order]
    if nu.size < min_points:
        raise InsufficientSpan(f"need at least {min_points} points, got {nu.size}")
    c0, g0, a0, b0 = lorentzian_guess(nu, y)
    if np.ptp(nu) < min_span * g0:
        raise InsufficientSpan(
            f"trace spans {np.ptp(nu):g} Hz, less than {min_span} linewidths ({g0:g} Hz)"
        )
    ys = a0 if a0 != 0 else 1.0
    # Scaled unknowns: centre and width in units of the width guess, levels in units of ys.
    div = 1.0 if sw is None else sw / abs(ys)
    fun = lambda q: ((b0 / ys + q[3] + q[2] * 0.25 * q[1] ** 2
                      / (((nu - c0) / g0 - q[0]) ** 2 + 0.25 * q[1] ** 2)) - y / ys) / div
    res = _run(fun, np.array([0.0, 1.0, 1.0, 0.0]))
    q = res.x
    center, width = c0 + q[0] * g0, abs(q[1]) * g0
    amp, off = q[2] * ys, b0 + q[3] * ys
    scale = np.array([g0, g0, ys, ys])
    cov = _covariance(res, scale, weighted=sw is not None)
    sig = np.sqrt(np.clip(np.diag(cov), 0, None))
    resid = y - s21_model(nu, center, width, amp, off) if width > 0 else y
    out = FitResult(
        params={"center": center, "width": width, "amplitude": amp, "offset": off},
        sigmas={"center": sig[0], "width": sig[1], "amplitude": sig[2], "offset": sig[3]},
        residual_rms=float(np.sqrt(np.mean(resid ** 2))),
        converged=bool(res.success) and width > 0,
        covariance=cov, message=res.message)
    if not out.converged:
        raise NotConverged(f"Lorentzian fit did not converge: {res.message}", best=out)
    return out


# ---------------------------------------------------------------- tuning curve

def _tuning_points(points):
    arr = np.asarray(points, dtype=float)
    if arr.ndim != 2 or arr.shape[1] not in (2, 3):
        raise ValueError("points must be (flux, frequency) or (flux, mode, frequency) rows")
    if arr.shape[1] == 2:
        return arr[:, 0], np.full(arr.shape[0], 3, dtype=int), arr[:, 1]
    return arr[:, 0], arr[:, 1].astype(int), arr[:, 2]


def tuning_curve_fit(points, initial: CircuitParams, min_points: int = 5) -> FitResult:
    """Fit (i_c, nu1_bare) to measured mode frequencies versus flux.

    ``points`` rows are (flux, frequency) for mode 3 or (flux, mode, frequency).
    The data constrain nu1_bare and the loading L_array / L_wg; with z0 held at
    its initial value this fixes i_c.  L_wg and L_array(0) are reported as
    derived quantities.
    """
    flux, modes, freq = _tuning_points(points)
    if flux.size < min_points:
        raise DegenerateData(f"need at least {min_points} points")
    folded = np.array([reduce_flux(f) for f in flux])
    if np.ptp(folded) == 0:
        raise DegenerateData("all points sit at one flux value")
    if not np.any(folded < 0.05):
        raise DegenerateData("need at least one point near zero flux")
    ic0, nu0 = initial.i_c, initial.nu_fundamental_bare
    fscale = float(np.median(freq))

    def model(q):
        p = replace(initial, i_c=ic0 * q[0], nu_fundamental_bare=nu0 * q[1])
        return np.array([mode_frequency(p, int(n), f) for f, n in zip(flux, modes)])

    def fun(q):
        if q[0] <= 0 or q[1] <= 0:
            return np.full(freq.size, 1e6)
        return (model(q) - freq) / fscale

    res = _run(fun, np.array([1.0, 1.0]), diff_step=1e-9)
    cov = _covariance(res, np.array([ic0, nu0]))
    ic, nu1 = res.x[0] * ic0, res.x[1] * nu0
    s_ic, s_nu = np.sqrt(np.clip(np.diag(cov), 0, None))
    fitted = replace(initial, i_c=ic, nu_fundamental_bare=nu1)
    l_arr = fitted.l_array0
    resid = model(res.x) - freq
    out = FitResult(
        params={"i_c": ic, "nu1_bare": nu1},
        sigmas={"i_c": s_ic, "nu1_bare": s_nu, "l_array": l_arr * s_ic / ic,
                "l_wg": fitted.l_wg * s_nu / nu1},
        residual_rms=float(np.sqrt(np.mean(resid ** 2))),
        converged=bool(res.success), covariance=cov,
        derived={"l_array": l_arr, "l_wg": fitted.l_wg, "z0": fitted.z0},
        message=res.message)
    if not out.converged:
        raise NotConverged(f"tuning fit did not converge: {res.message}", best=out)
    return out


# ---------------------------------------------------------------- S-curve

Q10 = -math.log(0.9)
Q90 = -math.log(0.1)


def activation_curve(nu, nu_sw: float, w: float, attempts: float, exponent: float = 1.5,
                     sign: float = 1.0):
    """1 - exp(-A exp(-(d/w)^q)) with d = sign (nu - nu_sw); 1 for d <= 0."""
    d = sign * (np.asarray(nu, dtype=float) - nu_sw)
    x = np.clip(d, 0.0, None) / abs(w)
    return np.where(d <= 0, 1.0, -np.expm1(-attempts * np.exp(-x ** exponent)))


def activation_width(w: float, attempts: float, exponent: float = 1.5) -> float:
    return abs(w) * (math.log(attempts / Q10) ** (1 / exponent)
                     - math.log(attempts / Q90) ** (1 / exponent))


def _xlogy(x, y):
    return np.where(x > 0, x * np.log(np.where(x > 0, x, 1.0) / y), 0.0)


def deviance_residuals(p_obs, mu, n):
    """Signed square-root binomial deviance of observed fractions against ``mu``."""
    mu = np.clip(mu, 1e-15, 1 - 1e-15)
    dev = 2 * n * (_xlogy(p_obs, mu) + _xlogy(1 - p_obs, 1 - mu))
    return np.sign(p_obs - mu) * np.sqrt(np.clip(dev, 0.0, None))


def s_curve_fit(curve, attempts: float = 20.0, fit_exponent: bool = False) -> FitResult:
    """Binomial maximum-likelihood fit of the activation form to an S-curve.

    The sweep direction is inferred from the data.  Residuals are signed
    binomial deviance residuals, so least squares maximises the likelihood
    and the Jacobian covariance is the inverse Fisher information.
    """
    from .measurement import crossing, width_10_90

    nu, p, n = curve.nu, curve.p, curve.n
    if not (p.min() <= 0.05 and p.max() >= 0.95):
        raise RangeNotSpanned("S-curve fit needs the curve to span [0.05, 0.95]")
    sign = 1.0 if np.sum((nu - nu.mean()) * (p - p.mean())) < 0 else -1.0
    nu50 = crossing(nu, p, 0.5, n)
    wid = width_10_90(curve)
    if wid <= 0:
        raise DegenerateData("the S-curve transition falls inside one grid interval")
    q0 = 1.5
    w0 = wid / (activation_width(1.0, attempts, q0))
    sw0 = nu50 - sign * w0 * math.log(attempts / math.log(2)) ** (1 / q0)
    def unpack(x):
        return sw0 + x[0] * w0, w0 * x[1], (x[2] if fit_exponent else q0)

    def fun(x):
        sw, w, q = unpack(x)
        if w <= 0 or q <= 0:
            return np.full(nu.size, 1e6)
        return deviance_residuals(p, activation_curve(nu, sw, w, attempts, q, sign), n)

    x0 = np.array([0.0, 1.0, q0]) if fit_exponent else np.array([0.0, 1.0])
    res = _run(fun, x0)
    sw, w, q = unpack(res.x)
    scale = np.array([w0, w0, 1.0])[: x0.size]
    cov = _covariance(res, scale, weighted=True)
    sig = np.sqrt(np.clip(np.diag(cov), 0, None))
    # Width is linear in w for fixed exponent; include the exponent term if fitted.
    fw = activation_width(1.0, attempts, q)
    grad = [0.0, fw]
    if fit_exponent:
        eps = 1e-6
        grad.append((activation_width(w, attempts, q + eps) - activation_width(w, attempts, q - eps))
                    / (2 * eps))
    grad = np.array(grad)
    s_width = float(np.sqrt(grad @ cov @ grad))
    resid = activation_curve(nu, sw, w, attempts, q, sign) - p
    params = {"nu_sw": sw, "w": w}
    sigmas = {"nu_sw": sig[0], "w": sig[1], "width_10_90": s_width}
    if fit_exponent:
        params["exponent"] = q
        sigmas["exponent"] = sig[2]
    out = FitResult(params=params, sigmas=sigmas,
                    residual_rms=float(np.sqrt(np.mean(resid ** 2))),
                    converged=bool(res.success) and w > 0, covariance=cov,
                    derived={"width_10_90": fw * w, "sign": sign, "attempts": attempts},
                    message=res.message)
    if not out.converged:
        raise NotConverged(f"S-curve fit did not converge: {res.message}", best=out)
    return out
