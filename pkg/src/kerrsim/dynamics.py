"""Driven Kerr-oscillator dynamics for the bifurcating mode.

Conventions (all frequencies in Hz, gamma is the FWHM linewidth):

* rotating-frame amplitude ``alpha`` with ``|alpha|^2`` the photon number;
* steady states solve ``n [(2 pi (dnu - 2 K n))^2 + (pi gamma)^2] = F``;
* drive strength ``F = (2 pi)^2 gamma_ext photon_flux`` with ``gamma_ext``
  a fraction (default 1/2) of gamma;
* dimensionless form ``u = 4|K| n / gamma``, ``D = 2 sgn(K) dnu / gamma``,
  ``P = 4|K| F / (gamma (pi gamma)^2)``, giving ``u ((D - u)^2 + 1) = P``.
  For gamma_ext = gamma/2 this is ``P = 8 |K| photon_flux / gamma^2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from . import parallel
from ._kernels import evolve_block
from .circuit import ModeSpectrum, critical_photon_number
from .constants import GAUSS_10_90, h, k_B
from .errors import (
    BelowBifurcation,
    NonconvergentBranches,
    NonpositiveDetuning,
    NonpositiveKerr,
    StepSizeTooLarge,
)

SQRT3 = math.sqrt(3.0)
DT_MAX = 0.02  # in units of 1/gamma
PHASE_PER_SUBSTEP = 0.25
DWELL = 5.0  # in units of 1/gamma
CHUNK = 256  # coarse steps per noise draw
Q10 = -math.log(0.9)
Q90 = -math.log(0.1)


@dataclass(frozen=True)
class DriveSpec:
    nu_d: float
    photon_flux: float
    duration: float = 1.0
    ext_fraction: float = 0.5

    def __post_init__(self):
        if self.photon_flux < 0:
            raise ValueError("photon_flux must be >= 0")
        if not self.duration > 0:
            raise ValueError("duration must be > 0")
        if not 0 < self.ext_fraction <= 1:
            raise ValueError("ext_fraction must lie in (0, 1]")

    def strength(self, gamma: float) -> float:
        """F in rad^2/s^2 units, (2 pi)^2 gamma_ext photon_flux."""
        return (2 * math.pi) ** 2 * self.ext_fraction * gamma * self.photon_flux


@dataclass(frozen=True)
class Branch:
    n: float
    stable: bool
    alpha: complex


@dataclass(frozen=True)
class SteadyState:
    branches: tuple
    degenerate: bool = False

    @property
    def bistable(self) -> bool:
        return sum(b.stable for b in self.branches) == 2

    @property
    def low(self) -> Branch:
        return self.branches[0]

    @property
    def high(self) -> Branch:
        return self.branches[-1]

    @property
    def unstable(self) -> Optional[Branch]:
        for b in self.branches:
            if not b.stable:
                return b
        return None


def effective_temperature(T: float, nu: float) -> float:
    """(h nu / 2 k_B) coth(h nu / 2 k_B T), with the T = 0 limit h nu / 2 k_B."""
    if T < 0 or not nu > 0:
        raise ValueError("need T >= 0 and nu > 0")
    t0 = h * nu / (2 * k_B)
    if T == 0:
        return t0
    return t0 / math.tanh(t0 / T)


def crossover_temperature(nu: float) -> float:
    return h * nu / (4 * k_B)


@dataclass(frozen=True)
class ThermalEnvironment:
    """Bath at ``temperature`` seen by a mode at ``nu``.

    ``quiet=True`` switches the dynamical noise off (n_eff = 0) while keeping
    t_eff for the width law; it is meant for deterministic checks.
    """

    temperature: float
    nu: float
    quiet: bool = False

    @property
    def t_eff(self) -> float:
        return effective_temperature(self.temperature, self.nu)

    @property
    def n_eff(self) -> float:
        if self.quiet:
            return 0.0
        return k_B * self.t_eff / (h * self.nu)

    @classmethod
    def from_n_eff(cls, n_eff: float, nu: float) -> "ThermalEnvironment":
        """Environment whose noise strength k_B T_eff / h nu equals ``n_eff`` (>= 1/2)."""
        if n_eff < 0.5:
            raise ValueError("n_eff cannot be below the zero-point value 1/2")
        if n_eff == 0.5:
            return cls(0.0, nu)
        x = math.atanh(1.0 / (2.0 * n_eff))
        return cls(h * nu / (2 * k_B * x), nu)


# ---------------------------------------------------------------- steady state

def _cubic(u, D, P):
    return u * ((D - u) ** 2 + 1.0) - P


def spinodal_u(D: float):
    """(u_minus, u_plus): turning points of P(u), real only for D > sqrt 3."""
    r = math.sqrt(max(D * D - 3.0, 0.0))
    return (2 * D - r) / 3.0, (2 * D + r) / 3.0


def spinodal_P(D: float):
    """(P_lower, P_upper) bounding the bistable band at dimensionless detuning D."""
    um, up = spinodal_u(D)
    return _cubic(up, D, 0.0), _cubic(um, D, 0.0)


def _stable(u, D):
    return 3 * u * u - 4 * D * u + D * D + 1 > 0


def _root(D, P, lo, hi):
    if _cubic(lo, D, P) == 0:
        return lo
    if _cubic(hi, D, P) == 0:
        return hi
    u = brentq(_cubic, lo, hi, args=(D, P), xtol=1e-300, rtol=4 * np.finfo(float).eps,
               maxiter=500)
    # Newton polish: brentq's absolute tolerance is coarse for roots near underflow.
    for _ in range(3):
        d = 3 * u * u - 4 * D * u + D * D + 1
        if d == 0:
            break
        v = u - _cubic(u, D, P) / d
        if not lo <= v <= hi or abs(_cubic(v, D, P)) >= abs(_cubic(u, D, P)):
            break
        u = v
    return u


def dimensionless_roots(D: float, P: float):
    """Real non-negative roots of u((D-u)^2+1) = P, sorted, with a degeneracy flag."""
    if P <= 0:
        return [0.0], False
    if D > SQRT3:
        um, up = spinodal_u(D)
        Pl, Pu = _cubic(up, D, 0.0), _cubic(um, D, 0.0)
        tol = 1e-12 * max(1.0, P)
        if abs(P - Pu) <= tol:
            return [_root(D, P, up, up + P), um], True
        if abs(P - Pl) <= tol:
            return [_root(D, P, 0.0, um), up], True
        if Pl < P < Pu:
            return [_root(D, P, 0.0, um), _root(D, P, um, up), _root(D, P, up, up + P)], False
        if P <= Pl:
            return [_root(D, P, 0.0, um)], False
        return [_root(D, P, up, up + P)], False
    return [_root(D, P, 0.0, P)], False


def _mode_params(spectrum: ModeSpectrum, mode: int):
    return spectrum.nu(mode), spectrum.gamma(mode), spectrum.kerr(mode)


def steady_state(spectrum: ModeSpectrum, drive: DriveSpec, mode: int = 3,
                 nu_mode: Optional[float] = None) -> SteadyState:
    """All physical stationary photon numbers of the driven mode, low to high."""
    nu, gam, K = _mode_params(spectrum, mode)
    if nu_mode is not None:
        nu = nu_mode
    if not gam > 0:
        raise ValueError("mode linewidth must be positive")
    dnu = drive.nu_d - nu
    F = drive.strength(gam)
    tw = 2 * math.pi

    def amp(n):
        lam = complex(-math.pi * gam, tw * (dnu - 2 * K * n))
        return 1j * math.sqrt(F) / lam

    if K == 0:
        n = F / ((tw * dnu) ** 2 + (math.pi * gam) ** 2)
        return SteadyState((Branch(n, True, amp(n)),))
    s = math.copysign(1.0, K)
    D = 2 * s * dnu / gam
    P = 4 * abs(K) * F / (gam * (math.pi * gam) ** 2)
    roots, degenerate = dimensionless_roots(D, P)
    roots = sorted(roots)
    scale = gam / (4 * abs(K))
    out = []
    for u in roots:
        # Deep in the linear regime u underflows before n does; the Kerr term is O(P) there.
        n = F / ((tw * dnu) ** 2 + (math.pi * gam) ** 2) if P < 1e-100 else u * scale
        stable = bool(_stable(u, D)) and not (degenerate and _is_turning(u, D))
        out.append(Branch(n, stable, amp(n)))
    return SteadyState(tuple(out), degenerate)


def _is_turning(u, D):
    if D <= SQRT3:
        return False
    um, up = spinodal_u(D)
    return min(abs(u - um), abs(u - up)) <= 1e-9 * max(1.0, u)


def cubic_residual(spectrum: ModeSpectrum, drive: DriveSpec, n: float, mode: int = 3,
                   nu_mode: Optional[float] = None) -> float:
    """Relative residual of the dimensional steady-state cubic at photon number n."""
    nu, gam, K = _mode_params(spectrum, mode)
    if nu_mode is not None:
        nu = nu_mode
    dnu = drive.nu_d - nu
    F = drive.strength(gam)
    tw = 2 * math.pi
    lhs = n * ((tw * (dnu - 2 * K * n)) ** 2 + (math.pi * gam) ** 2)
    return abs(lhs - F) / max(F, lhs, 1e-300)


# ---------------------------------------------------------------- bistability

@dataclass(frozen=True)
class BistabilityRegion:
    gamma: float
    kerr: float
    ext_fraction: float = 0.5

    @property
    def critical_detuning(self) -> float:
        return SQRT3 / 2 * self.gamma * math.copysign(1.0, self.kerr)

    @property
    def onset_photon_number(self) -> float:
        """Photon number at the onset of bistability (u = 2 / sqrt 3)."""
        return self.gamma / (2 * SQRT3 * abs(self.kerr))

    @property
    def onset_photon_flux(self) -> float:
        return self.flux_from_P(8 / (3 * SQRT3))

    @property
    def c_conv(self) -> float:
        """Ratio of 2 gamma / (sqrt 3 K) to the cubic's onset photon number (exactly 4)."""
        return critical_photon_number(self.gamma, abs(self.kerr)) / self.onset_photon_number

    def flux_from_P(self, P: float) -> float:
        g = self.gamma
        F = P * g * (math.pi * g) ** 2 / (4 * abs(self.kerr))
        return F / ((2 * math.pi) ** 2 * self.ext_fraction * g)

    def P_from_flux(self, flux: float) -> float:
        g = self.gamma
        F = (2 * math.pi) ** 2 * self.ext_fraction * g * flux
        return 4 * abs(self.kerr) * F / (g * (math.pi * g) ** 2)

    def D(self, delta_nu: float) -> float:
        return 2 * math.copysign(1.0, self.kerr) * delta_nu / self.gamma

    def spinodal_fluxes(self, delta_nu: float):
        """(lower, upper) photon-flux limits of the bistable band at this detuning."""
        D = self.D(delta_nu)
        if D <= SQRT3:
            raise BelowBifurcation(f"detuning {delta_nu:g} Hz is inside the critical detuning")
        Pl, Pu = spinodal_P(D)
        return self.flux_from_P(Pl), self.flux_from_P(Pu)

    def switching_detuning(self, photon_flux: float) -> float:
        """Detuning nu_d - nu at which the low branch ends for this drive flux."""
        P = self.P_from_flux(photon_flux)
        Pc = 8 / (3 * SQRT3)
        if P <= Pc * (1 + 1e-12):
            raise BelowBifurcation(
                f"drive flux {photon_flux:g}/s is below the bifurcation onset "
                f"{self.onset_photon_flux:g}/s"
            )
        g = lambda D: spinodal_P(D)[1] - P
        hi = 2 * SQRT3
        while g(hi) < 0:
            hi *= 2
        D = brentq(g, SQRT3, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps)
        return math.copysign(1.0, self.kerr) * D * self.gamma / 2


def bistability_region(spectrum: ModeSpectrum, mode: int = 3,
                       ext_fraction: float = 0.5) -> BistabilityRegion:
    K = spectrum.kerr(mode)
    if not K > 0:
        raise NonpositiveKerr(f"mode {mode} has K = {K!r}; no bifurcation")
    return BistabilityRegion(spectrum.gamma(mode), K, ext_fraction)


def drive_for_spinodal(spectrum: ModeSpectrum, delta_nu: float, mode: int = 3,
                       ext_fraction: float = 0.5) -> float:
    """Photon flux whose upper spinodal (end of the low branch) sits at ``delta_nu``."""
    return bistability_region(spectrum, mode, ext_fraction).spinodal_fluxes(delta_nu)[1]


# ---------------------------------------------------------------- width law

def _width_prefactor(spectrum: ModeSpectrum, env: ThermalEnvironment, mode: int) -> float:
    b, N, ej = spectrum.beta, spectrum.n_squids, spectrum.e_j
    return 3 ** (2 / 3) / 4 * (b * b / N) ** (2 / 3) * (k_B * env.t_eff / ej) ** (2 / 3)


def dykman_width(spectrum: ModeSpectrum, env: ThermalEnvironment, delta_nu: float,
                 mode: int = 3) -> float:
    """Relative S-curve width Delta S / nu for the activation law at detuning ``delta_nu``."""
    if not delta_nu > 0:
        raise NonpositiveDetuning(f"detuning must be positive, got {delta_nu!r}")
    nu = spectrum.nu(mode)
    return _width_prefactor(spectrum, env, mode) * (delta_nu / nu) ** (1 / 3)


def reference_detuning(spectrum: ModeSpectrum, env: ThermalEnvironment,
                       target: float = 0.5e-6, mode: int = 3) -> float:
    """Detuning at which :func:`dykman_width` equals ``target``."""
    if not target > 0:
        raise ValueError("target width must be positive")
    return spectrum.nu(mode) * (target / _width_prefactor(spectrum, env, mode)) ** 3


# ---------------------------------------------------------------- activation law

def activation_width_factor(attempts: float) -> float:
    """10-90 width of the activation curve in units of w, for A = attempt_rate * t."""
    if not attempts > Q90:
        raise ValueError(f"attempt number {attempts:g} too small for a 10-90 width")
    return math.log(attempts / Q10) ** (2 / 3) - math.log(attempts / Q90) ** (2 / 3)


@dataclass(frozen=True)
class SwitchingModel:
    """P_s = 1 - exp(-A exp(-b (d / w)^{3/2})), d the distance to the spinodal.

    ``d = sgn(K) (nu_d - nu_sw)``: the low branch survives for d > 0, so switching
    is certain for d <= 0.
    """

    nu_sw: float
    w: float
    attempts: float
    b: float = 1.0
    sign: float = 1.0

    def distance(self, nu_d):
        return self.sign * (np.asarray(nu_d, dtype=float) - self.nu_sw)

    def p(self, nu_d, shift=0.0):
        """Switching probability; ``shift`` moves the mode frequency (and nu_sw) by that amount."""
        d = self.distance(np.asarray(nu_d, dtype=float) - shift)
        x = np.clip(d, 0.0, None) / self.w
        out = -np.expm1(-self.attempts * np.exp(-self.b * x ** 1.5))
        return np.where(d <= 0, 1.0, out)

    def nu_at(self, p: float) -> float:
        """Drive frequency where P_s = p (0 < p < 1 - exp(-A))."""
        q = -math.log1p(-p)
        x = (math.log(self.attempts / q) / self.b) ** (2 / 3)
        return self.nu_sw + self.sign * x * self.w

    @property
    def width_10_90(self) -> float:
        return self.w * activation_width_factor(self.attempts) / self.b ** (2 / 3)

    @classmethod
    def calibrated(cls, spectrum: ModeSpectrum, env: ThermalEnvironment, photon_flux: float,
                   t_pulse: float, target_width: Optional[float] = None,
                   attempt_rate: Optional[float] = None, mode: int = 3,
                   ext_fraction: float = 0.5, nu_mode: Optional[float] = None) -> "SwitchingModel":
        """Place nu_sw from the drive flux and fix w so the 10-90 width hits the target.

        The default target is :func:`dykman_width` times nu at the switching detuning.
        """
        region = bistability_region(spectrum, mode, ext_fraction)
        nu = spectrum.nu(mode) if nu_mode is None else nu_mode
        dsw = region.switching_detuning(photon_flux)
        rate = spectrum.gamma(mode) if attempt_rate is None else attempt_rate
        A = rate * t_pulse
        if target_width is None:
            target_width = dykman_width(spectrum, env, abs(dsw), mode) * spectrum.nu(mode)
        w = target_width / activation_width_factor(A)
        return cls(nu_sw=nu + dsw, w=w, attempts=A, sign=math.copysign(1.0, region.kerr))


def switching_probability_analytic(spectrum: ModeSpectrum, env: ThermalEnvironment,
                                   drive: DriveSpec, pulse_duration: float,
                                   target_width: Optional[float] = None, mode: int = 3) -> float:
    model = SwitchingModel.calibrated(spectrum, env, drive.photon_flux, pulse_duration,
                                      target_width, mode=mode, ext_fraction=drive.ext_fraction)
    return float(model.p(drive.nu_d))


# ---------------------------------------------------------------- stochastic integration

@dataclass
class EnsembleResult:
    switched: np.ndarray
    switch_time: np.ndarray
    alpha: np.ndarray
    record: Optional[np.ndarray]
    dt: float
    substeps: int

    @property
    def p_switch(self) -> float:
        return float(np.mean(self.switched))


@dataclass(frozen=True)
class Thresholds:
    n_unstable: float
    n_mid: float


def switch_thresholds(spectrum: ModeSpectrum, drive: DriveSpec, mode: int = 3,
                      nu_mode: Optional[float] = None) -> Thresholds:
    """Photon-number thresholds for declaring a switch.

    Bistable: the unstable branch and the midpoint of the stable ones.  Beyond
    the spinodal (only a high branch is left) the vanished low branch's
    turning point stands in for both the low and unstable photon numbers.
    """
    ss = steady_state(spectrum, drive, mode, nu_mode)
    if ss.bistable:
        lo, hi = ss.low.n, ss.high.n
        return Thresholds(ss.unstable.n, 0.5 * (lo + hi))
    nu, gam, K = _mode_params(spectrum, mode)
    if nu_mode is not None:
        nu = nu_mode
    D = 2 * math.copysign(1.0, K) * (drive.nu_d - nu) / gam if K != 0 else 0.0
    only = ss.branches[-1].n
    if D > SQRT3 and K != 0:
        um, up = spinodal_u(D)
        scale = gam / (4 * abs(K))
        if only * (4 * abs(K) / gam) >= up * (1 - 1e-9):
            ghost = um * scale
            return Thresholds(ghost, 0.5 * (ghost + only))
    raise NonconvergentBranches(
        "only the low-amplitude branch exists at this drive: nothing to switch to"
    )


def _past_spinodal(spectrum, drive, mode):
    nu, gam, K = _mode_params(spectrum, mode)
    if K == 0:
        return False
    s = math.copysign(1.0, K)
    D = 2 * s * (drive.nu_d - nu) / gam
    if D <= SQRT3:
        return False
    P = 4 * abs(K) * drive.strength(gam) / (gam * (math.pi * gam) ** 2)
    return P >= spinodal_P(D)[1]


def _block_worker(args):
    (seed_key, n, alpha0_lo, dnu, ascale, K, gam, amp_env, m, h_sub, sig, n_eff,
     rec_every, nrec, thr, dwell_steps, start_thermal) = args
    rng = parallel.rng_for(*seed_key)
    alpha = np.full(n, alpha0_lo, dtype=np.complex128)
    if start_thermal and n_eff > 0:
        z = rng.standard_normal((n, 2))
        alpha += math.sqrt(n_eff / 2) * (z[:, 0] + 1j * z[:, 1])
    rec = np.zeros((n, max(nrec, 1)), dtype=np.complex128)
    crossed = np.zeros(n, dtype=np.bool_)
    dwell = np.zeros(n, dtype=np.int64)
    cross_step = np.full(n, -1, dtype=np.int64)
    switch_step = np.full(n, -1, dtype=np.int64)
    nsteps = amp_env.shape[0]
    for s0 in range(0, nsteps, CHUNK):
        seg = amp_env[s0:s0 + CHUNK]
        noise = rng.standard_normal((n, seg.shape[0] * m, 2))
        evolve_block(alpha, dnu, ascale, K, gam, seg, m, h_sub, sig, noise, s0, rec,
                     rec_every, thr[0], thr[1], dwell_steps, crossed, dwell, cross_step,
                     switch_step)
    return alpha, (rec if nrec > 0 else None), switch_step


def substeps_for(dt: float, dnu_max: float) -> int:
    return max(1, math.ceil(dt * 2 * math.pi * abs(dnu_max) / PHASE_PER_SUBSTEP))


def simulate_ensemble(spectrum: ModeSpectrum, env: ThermalEnvironment, drive: DriveSpec,
                      n_traj: int, seed: int, *, key: Sequence[int] = (),
                      dt: Optional[float] = None, t_max: Optional[float] = None,
                      envelope: Optional[np.ndarray] = None, t_rise: float = 0.0,
                      start: str = "low", dnu_offsets=None, amp_factors=None,
                      record_every: int = 0, detect: bool = True,
                      dwell_time: Optional[float] = None, thresholds: Optional[Thresholds] = None,
                      mode: int = 3, jobs: int = 1) -> EnsembleResult:
    """Integrate ``n_traj`` independent trajectories of the noisy Kerr oscillator.

    ``envelope`` (one amplitude factor per coarse step) overrides the default
    linear amplitude ramp over ``t_rise`` followed by a flat plateau up to
    ``t_max``.  ``start`` is ``"low"`` (low branch plus thermal spread) or
    ``"vacuum"`` (thermal spread about zero).  ``dnu_offsets``/``amp_factors``
    are per-trajectory shifts of the mode frequency and drive amplitude.
    Random numbers come in blocks of :data:`parallel.BLOCK` trajectories keyed
    by ``(seed, S_DYNAMICS, *key, block)``, so results do not depend on ``jobs``.
    """
    nu, gam, K = _mode_params(spectrum, mode)
    dt = DT_MAX / gam if dt is None else dt
    if dt > DT_MAX / gam * (1 + 1e-12):
        raise StepSizeTooLarge(f"dt = {dt:g} s exceeds {DT_MAX}/gamma = {DT_MAX / gam:g} s")
    if not dt > 0:
        raise ValueError("dt must be positive")
    if envelope is None:
        t_max = drive.duration if t_max is None else t_max
        if t_max < drive.duration * (1 - 1e-12):
            raise ValueError("t_max must cover the drive duration")
        nsteps = max(1, int(round(t_max / dt)))
        tk = (np.arange(nsteps) + 0.5) * dt
        envelope = np.minimum(1.0, tk / t_rise) if t_rise > 0 else np.ones(nsteps)
    envelope = np.ascontiguousarray(envelope, dtype=float)
    nsteps = envelope.shape[0]
    dnu0 = drive.nu_d - nu
    offs = np.zeros(n_traj) if dnu_offsets is None else np.asarray(dnu_offsets, float)
    afac = np.ones(n_traj) if amp_factors is None else np.asarray(amp_factors, float)
    if offs.shape != (n_traj,) or afac.shape != (n_traj,):
        raise ValueError("per-trajectory offsets must have length n_traj")
    dnu = dnu0 - offs
    m = substeps_for(dt, np.max(np.abs(dnu)))
    h_sub = dt / m
    n_eff = env.n_eff
    sig = math.sqrt(n_eff / 2 * -math.expm1(-2 * math.pi * gam * h_sub))
    sF = math.sqrt(drive.strength(gam))

    if start == "low":
        ss = steady_state(spectrum, drive, mode)
        # Past the spinodal the only branch is the high one; start from vacuum.
        alpha0 = ss.low.alpha if ss.bistable or not _past_spinodal(spectrum, drive, mode) else 0j
    elif start == "vacuum":
        alpha0 = 0j
    else:
        raise ValueError("start must be 'low' or 'vacuum'")

    if detect:
        thr = thresholds or switch_thresholds(spectrum, drive, mode)
        dwell_time = DWELL / gam if dwell_time is None else dwell_time
        dwell_steps = max(1, math.ceil(dwell_time / dt - 1e-9))
        thr_t = (thr.n_unstable, thr.n_mid)
    else:
        dwell_steps, thr_t = 0, (np.inf, np.inf)
    nrec = -(-nsteps // record_every) if record_every > 0 else 0

    tasks = []
    for b, lo, hi in parallel.blocks(n_traj):
        tasks.append(((seed, parallel.S_DYNAMICS, *key, b), hi - lo, alpha0,
                      np.ascontiguousarray(dnu[lo:hi]), np.ascontiguousarray(afac[lo:hi]),
                      float(K), float(gam), envelope * sF, m, h_sub, sig, n_eff,
                      int(record_every), nrec, thr_t, int(dwell_steps), True))
    results = parallel.run_ordered(_block_worker, tasks, jobs)
    alpha = np.concatenate([r[0] for r in results])
    record = np.concatenate([r[1] for r in results]) if nrec > 0 else None
    sstep = np.concatenate([r[2] for r in results])
    switched = sstep >= 0
    stime = np.where(switched, (sstep + 1) * dt, np.nan)
    return EnsembleResult(switched, stime, alpha, record, dt, m)


@dataclass
class Trajectory:
    t: np.ndarray
    alpha: np.ndarray

    @property
    def n_photons(self) -> np.ndarray:
        return np.abs(self.alpha) ** 2

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("t_s,re_alpha,im_alpha,n_photons\n")
            for t, a in zip(self.t, self.alpha):
                fh.write(f"{t:.10g},{a.real:.10g},{a.imag:.10g},{abs(a) ** 2:.10g}\n")


def simulate_trajectory(spectrum: ModeSpectrum, env: ThermalEnvironment, drive: DriveSpec,
                        noise=None, seed: int = 0, dt: Optional[float] = None,
                        t_max: Optional[float] = None, *, start: str = "low",
                        t_rise: float = 0.0, mode: int = 3):
    """One trajectory: returns (Trajectory, switched, switch_time).

    The stored trajectory holds the mean amplitude over each coarse step.
    ``noise`` (a NoiseSpec) adds a frequency offset drawn from ``seed``.
    """
    offs = amp = None
    if noise is not None:
        from .noise import trajectory_offsets
        o, a = trajectory_offsets(noise, spectrum, 1, seed, mode=mode)
        offs, amp = o, a
    res = simulate_ensemble(spectrum, env, drive, 1, seed, dt=dt, t_max=t_max, start=start,
                            t_rise=t_rise, dnu_offsets=offs, amp_factors=amp,
                            record_every=1, mode=mode)
    n = res.record.shape[1]
    t = (np.arange(n) + 1) * res.dt
    return Trajectory(t, res.record[0]), bool(res.switched[0]), float(res.switch_time[0])


def implied_gaussian_sigma(width_10_90: float) -> float:
    return width_10_90 / GAUSS_10_90
