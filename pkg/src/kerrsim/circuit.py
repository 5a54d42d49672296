"""Circuit model of the SQUID-loaded half-wave resonator.

The line (bare fundamental ``nu1_bare``, impedance ``z0``) carries an array of
``n_squids`` identical symmetric SQUIDs at its midpoint.  Even modes have a
current node there and are untouched; odd modes see the array as a series
inductance and obey::

    cot(k l / 2) = omega * L_array / (2 * Z0),   omega = k v,  nu1_bare = v / (2 l)

Writing ``x = k l / 2 = pi nu / (2 nu1_bare)`` this becomes ``cot x = a x`` with
the loading ``a = 2 nu1_bare L_array / Z0 = L_array / L_wg``.  The waveguide
inductance is tied to the line by ``L_wg = Z0 / (2 nu1_bare)``, so the
participation ratio is ``beta = a / (1 + a)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .constants import PHI0, R_K, h
from .errors import (
    ConfigError,
    DivergentInductance,
    KerrBoundViolation,
    NonpositiveKerr,
    RootBracketingFailure,
)

EPS_DIV = 1e-6

# Values quoted for the measured device at zero flux.
DEVICE_N_SQUIDS = 7
DEVICE_I_C = 6.72e-6
DEVICE_BETA = 0.0254
DEVICE_NU3 = 5.32e9
DEVICE_GAMMA3 = 212e3
DEVICE_K3 = 940.0
DEVICE_C_END = 7e-12
DEVICE_AREAL_DISPERSION = 0.04
DEVICE_DELTA_S = 4.5e3


@dataclass(frozen=True)
class CircuitParams:
    """Static device description.

    ``linewidths`` maps mode index to FWHM linewidth in Hz; modes missing from
    it get a constant-Q extrapolation from the lowest configured mode.
    """

    n_squids: int
    i_c: float
    nu_fundamental_bare: float
    z0: float
    c_end: float = DEVICE_C_END
    areal_dispersion: float = DEVICE_AREAL_DISPERSION
    linewidths: Mapping[int, float] = field(default_factory=lambda: {3: DEVICE_GAMMA3})

    def __post_init__(self):
        if int(self.n_squids) != self.n_squids or self.n_squids < 1:
            raise ConfigError(f"n_squids must be a positive integer, got {self.n_squids!r}")
        for name in ("i_c", "nu_fundamental_bare", "z0"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)!r}")
        if not 0 <= self.areal_dispersion < 1:
            raise ConfigError("areal_dispersion must lie in [0, 1)")
        if not self.linewidths or any(g <= 0 for g in self.linewidths.values()):
            raise ConfigError("linewidths must be a non-empty mapping of positive FWHM values")
        b0 = beta(self, 0.0)
        if b0 >= 0.1:
            raise ConfigError(
                f"beta(0) = {b0:.4f} >= 0.1: outside the weak-participation regime"
            )

    @property
    def l_wg(self) -> float:
        """Total waveguide inductance, Z0 / (2 nu1_bare)."""
        return self.z0 / (2.0 * self.nu_fundamental_bare)

    @property
    def l_array0(self) -> float:
        return self.n_squids * PHI0 / (2 * math.pi * self.i_c)

    def linewidth(self, n: int, nu_n: float, nu_ref_of) -> float:
        if n in self.linewidths:
            return float(self.linewidths[n])
        ref = min(self.linewidths)
        return float(self.linewidths[ref]) * nu_n / nu_ref_of(ref)


def reduce_flux(phi: float) -> float:
    """Fold a reduced flux onto [0, 0.5] using period 1 and the phi -> -phi symmetry."""
    r = math.fmod(float(phi), 1.0)
    if r < 0:
        r += 1.0
    return 1.0 - r if r > 0.5 else r


def _abs_cos(phi, eps_div):
    c = abs(math.cos(math.pi * reduce_flux(phi)))
    if c <= eps_div:
        raise DivergentInductance(
            f"|cos(pi*phi)| = {c:.3g} <= {eps_div:g} at phi = {phi}: junction inductance diverges"
        )
    return c


def josephson_inductance(i_c: float, flux: float, eps_div: float = EPS_DIV) -> float:
    """Inductance of one symmetric SQUID, Phi0 / (2 pi I_c |cos(pi Phi/Phi0)|)."""
    if not i_c > 0:
        raise ValueError("i_c must be positive")
    return PHI0 / (2 * math.pi * i_c * _abs_cos(flux, eps_div))


def array_inductance(params: CircuitParams, flux: float, ic_spread=None,
                     eps_div: float = EPS_DIV) -> float:
    """Series inductance of the SQUID array.

    ``ic_spread`` (optional, length ``n_squids``) gives relative per-SQUID
    critical-current deviations for sensitivity studies.
    """
    if ic_spread is None:
        return params.n_squids * josephson_inductance(params.i_c, flux, eps_div)
    spread = np.asarray(ic_spread, dtype=float)
    if spread.shape != (params.n_squids,):
        raise ValueError("ic_spread must have one entry per SQUID")
    return float(sum(josephson_inductance(params.i_c * (1 + s), flux, eps_div) for s in spread))


def sample_ic_spread(params: CircuitParams, rng) -> np.ndarray:
    """Gaussian per-SQUID I_c deviations with RMS ``areal_dispersion``."""
    return params.areal_dispersion * rng.standard_normal(params.n_squids)


def loading(params: CircuitParams, flux: float, ic_spread=None) -> float:
    return array_inductance(params, flux, ic_spread) / params.l_wg


def beta(params: CircuitParams, flux: float, ic_spread=None) -> float:
    l_arr = array_inductance(params, flux, ic_spread)
    return l_arr / (params.l_wg + l_arr)


def _odd_root(a: float, n: int) -> float:
    """Root of cos x - a x sin x on the branch of the n-th (odd) bare mode."""
    m = (n - 1) // 2
    lo, hi = m * math.pi, m * math.pi + math.pi / 2
    f = lambda x: math.cos(x) - a * x * math.sin(x)
    flo, fhi = f(lo), f(hi)
    if not (math.isfinite(flo) and math.isfinite(fhi)) or flo * fhi > 0:
        raise RootBracketingFailure(f"cannot bracket mode {n} with loading a = {a!r}")
    if fhi == 0.0:
        return hi
    return brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)


def mode_frequency(params: CircuitParams, n: int, flux: float, ic_spread=None) -> float:
    """Resonant frequency (Hz) of mode ``n`` at reduced flux ``flux``."""
    if int(n) != n or n < 1:
        raise ValueError(f"mode index must be a positive integer, got {n!r}")
    nu1 = params.nu_fundamental_bare
    if n % 2 == 0:
        return n * nu1
    x = _odd_root(loading(params, flux, ic_spread), n)
    return 2 * nu1 * x / math.pi


def mode_frequency_derivatives(params: CircuitParams, n: int, flux: float, ic_spread=None,
                               step1: float = 1e-4, step2: float = 1e-3):
    """(d nu/d phi, d^2 nu/d phi^2) by central differences; nan where a stencil diverges."""
    f = lambda x: mode_frequency(params, n, x, ic_spread)
    try:
        d1 = (f(flux + step1) - f(flux - step1)) / (2 * step1)
    except DivergentInductance:
        d1 = math.nan
    try:
        d2 = (f(flux + step2) - 2 * f(flux) + f(flux - step2)) / step2 ** 2
    except DivergentInductance:
        d2 = math.nan
    return d1, d2


def loading_from_frequency(nu_n: float, nu1_bare: float, n: int) -> float:
    """Invert the odd-mode condition: the loading ``a`` that puts mode ``n`` at ``nu_n``."""
    if n % 2 == 0:
        raise ValueError("only odd modes are loaded by the array")
    x = math.pi * nu_n / (2 * nu1_bare)
    m = (n - 1) // 2
    if not m * math.pi < x <= m * math.pi + math.pi / 2:
        raise RootBracketingFailure(f"nu_{n} = {nu_n:g} Hz is off the branch of mode {n}")
    return math.cos(x) / (x * math.sin(x))


def josephson_energy(i_c: float, flux: float = 0.0, eps_div: float = EPS_DIV) -> float:
    return PHI0 * i_c * _abs_cos(flux, eps_div) / (2 * math.pi)


@dataclass(frozen=True)
class ModeSpectrum:
    """Mode frequencies, linewidths and Kerr tensor at one flux point.

    Arrays are aligned with ``modes``; use the accessors for lookups by index.
    """

    modes: tuple
    frequencies: np.ndarray
    linewidths: np.ndarray
    self_kerr: np.ndarray
    cross_kerr: np.ndarray
    beta: float
    e_j: float
    n_squids: int
    flux: float = 0.0
    flux_slopes: Optional[np.ndarray] = None

    def _i(self, n):
        try:
            return self.modes.index(n)
        except ValueError:
            raise KeyError(f"mode {n} not in spectrum (modes={self.modes})") from None

    def nu(self, n: int) -> float:
        return float(self.frequencies[self._i(n)])

    def gamma(self, n: int) -> float:
        return float(self.linewidths[self._i(n)])

    def kerr(self, n: int) -> float:
        return float(self.self_kerr[self._i(n)])

    def cross(self, n: int, m: int) -> float:
        return float(self.cross_kerr[self._i(n), self._i(m)])

    def dnu_dphi(self, n: int) -> float:
        """First flux derivative of nu_n (Hz per flux quantum)."""
        return float(self._slopes()[self._i(n), 0])

    def d2nu_dphi2(self, n: int) -> float:
        return float(self._slopes()[self._i(n), 1])

    def _slopes(self):
        if self.flux_slopes is None:
            raise ValueError("spectrum was built without flux derivatives")
        return self.flux_slopes

    def with_overrides(self, n: int, *, nu=None, gamma=None, kerr=None) -> "ModeSpectrum":
        """Copy with one mode's frequency, linewidth or self-Kerr replaced."""
        i = self._i(n)
        freqs, gams, ks = self.frequencies.copy(), self.linewidths.copy(), self.self_kerr.copy()
        if nu is not None:
            freqs[i] = nu
        if gamma is not None:
            gams[i] = gamma
        if kerr is not None:
            ks[i] = kerr
        return replace(self, frequencies=freqs, linewidths=gams, self_kerr=ks)


def kerr_ratio(b: float, n_squids: int, nu: float, e_j: float) -> float:
    """(beta^2 / N) (h nu / E_j): the common K_n / nu_n ratio."""
    return b * b / n_squids * h * nu / e_j


def kerr_coefficients(params: CircuitParams, flux: float,
                      modes: Sequence[int] = (1, 2, 3, 4, 5, 6, 7, 8, 9),
                      ic_spread=None, with_slopes: bool = True) -> ModeSpectrum:
    """Mode spectrum with self- and cross-Kerr coefficients.

    For odd modes ``K_n = r nu_n^2`` and ``lambda_nm = r nu_n nu_m`` with
    ``r = (beta^2/N) h / E_j``, so that ``K_3/nu_3 = lambda_n3/nu_n`` holds by
    construction.  Even-mode entries are zero.
    """
    modes = tuple(int(m) for m in modes)
    if not modes:
        raise ValueError("modes must be non-empty")
    if len(set(modes)) != len(modes):
        raise ValueError("duplicate mode indices")
    b = beta(params, flux, ic_spread)
    e_j = josephson_energy(params.i_c, flux)
    nus = np.array([mode_frequency(params, n, flux, ic_spread) for n in modes])
    # The K/nu ceiling is stated for the bifurcating third mode.
    nu3 = nus[modes.index(3)] if 3 in modes else mode_frequency(params, 3, flux, ic_spread)
    ratio3 = kerr_ratio(b, params.n_squids, nu3, e_j)
    ceiling = 2 * math.pi * params.z0 / R_K
    if ratio3 > ceiling:
        raise KerrBoundViolation(
            f"K3/nu3 = {ratio3:.3g} exceeds 2*pi*Z0/R_K = {ceiling:.3g}; "
            "the configuration is outside the model's validity"
        )
    r = b * b / params.n_squids * h / e_j
    odd = np.array([n % 2 == 1 for n in modes])
    coupled = np.where(odd, nus, 0.0)
    cross = r * np.outer(coupled, coupled)
    self_kerr = np.diag(cross).copy()
    np.fill_diagonal(cross, 0.0)

    nu_of = lambda m: nus[modes.index(m)] if m in modes else mode_frequency(params, m, flux, ic_spread)
    gams = np.array([params.linewidth(n, nus[i], nu_of) for i, n in enumerate(modes)])
    slopes = None
    if with_slopes:
        slopes = np.array([mode_frequency_derivatives(params, n, flux, ic_spread) for n in modes])
    return ModeSpectrum(modes=modes, frequencies=nus, linewidths=gams, self_kerr=self_kerr,
                        cross_kerr=cross, beta=b, e_j=e_j, n_squids=params.n_squids,
                        flux=float(flux), flux_slopes=slopes)


def critical_photon_number(gamma: float, k_self: float) -> float:
    """Photon number at the onset of bistability, 2 gamma / (sqrt(3) K)."""
    if not k_self > 0:
        raise NonpositiveKerr(f"self-Kerr must be positive for bifurcation, got {k_self!r}")
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    return 2 * gamma / (math.sqrt(3) * k_self)


def calibrate(n_squids: int = DEVICE_N_SQUIDS, i_c: float = DEVICE_I_C,
              nu3: float = DEVICE_NU3, beta0: float = DEVICE_BETA, **kw) -> CircuitParams:
    """Fix (nu1_bare, L_wg) so that nu_3(0) = ``nu3`` and beta(0) = ``beta0``.

    ``L_wg`` is carried by ``z0 = 2 nu1_bare L_wg``.  Extra keywords are passed
    to :class:`CircuitParams`.
    """
    if not 0 < beta0 < 0.1:
        raise ConfigError("beta0 must lie in (0, 0.1)")
    l_arr = n_squids * PHI0 / (2 * math.pi * i_c)
    l_wg = l_arr * (1 - beta0) / beta0
    a = l_arr / l_wg
    x3 = _odd_root(a, 3)
    nu1 = math.pi * nu3 / (2 * x3)
    return CircuitParams(n_squids=n_squids, i_c=i_c, nu_fundamental_bare=nu1,
                         z0=2 * nu1 * l_wg, **kw)


def reference_params(**kw) -> CircuitParams:
    """Device calibrated to the reported zero-flux nu_3 and beta."""
    return calibrate(**kw)
