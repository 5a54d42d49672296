"""Pulsed bifurcation-amplifier readout: pulses, switching statistics and S-curves."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence

import numpy as np
from scipy import stats
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

from . import parallel
from .circuit import ModeSpectrum
from .dynamics import (
    DWELL,
    DriveSpec,
    SwitchingModel,
    ThermalEnvironment,
    Thresholds,
    bistability_region,
    simulate_ensemble,
    steady_state,
    switch_thresholds,
)
from .errors import ConfigError, GridTooNarrow, RangeNotSpanned
from .noise import NoiseSpec, trajectory_offsets

CI_LEVEL = 0.95


@dataclass(frozen=True)
class PulseSpec:
    """Measurement pulse: linear rise, plateau at ``plateau_power``, then a latch hold.

    Powers are photon fluxes (photons/s); ``latch_power_fraction`` scales the
    power, so the latch amplitude is its square root.  Times are in seconds.
    """

    nu_d: float
    plateau_power: float
    t_measure: float
    t_latch: float
    t_rise: float
    sample_interval: float
    latch_power_fraction: float = 0.8
    repetition_rate: float = 1e3
    detection_noise_photons: float = 20.0

    @classmethod
    def for_linewidth(cls, gamma: float, nu_d: float, plateau_power: float, *,
                      t_measure: float = 20.0, t_latch: float = 100.0, t_rise: float = 5.0,
                      sample_interval: float = 1.0, **kw) -> "PulseSpec":
        """Build a pulse with times given in units of 1/gamma."""
        return cls(nu_d=nu_d, plateau_power=plateau_power, t_measure=t_measure / gamma,
                   t_latch=t_latch / gamma, t_rise=t_rise / gamma,
                   sample_interval=sample_interval / gamma, **kw)

    def __post_init__(self):
        if self.plateau_power < 0:
            raise ConfigError("plateau_power must be >= 0")
        if not 0 <= self.latch_power_fraction <= 1:
            raise ConfigError("latch_power_fraction must lie in [0, 1]")
        if not self.t_measure > 0 or self.t_latch < 0 or self.t_rise < 0:
            raise ConfigError("pulse durations must be non-negative (t_measure > 0)")
        if not self.sample_interval > 0 or not self.repetition_rate > 0:
            raise ConfigError("sample_interval and repetition_rate must be positive")
        if self.detection_noise_photons < 0:
            raise ConfigError("detection_noise_photons must be >= 0")

    @property
    def t_total(self) -> float:
        return self.t_rise + self.t_measure + self.t_latch

    def validate(self, gamma: float) -> None:
        period = 1.0 / self.repetition_rate
        if period < 10.0 / gamma:
            raise ConfigError(
                f"repetition period {period:g} s is shorter than 10/gamma = {10 / gamma:g} s"
            )
        if period < self.t_total:
            raise ConfigError("pulse is longer than the repetition period")

    def at(self, nu_d: float) -> "PulseSpec":
        return replace(self, nu_d=float(nu_d))

    def drive(self) -> DriveSpec:
        return DriveSpec(self.nu_d, self.plateau_power, self.t_rise + self.t_measure)

    def envelope(self, dt: float, t_stop: Optional[float] = None) -> np.ndarray:
        """Amplitude factor at the centre of each step of length ``dt``."""
        t_stop = self.t_total if t_stop is None else t_stop
        n = max(1, int(round(t_stop / dt)))
        t = (np.arange(n) + 0.5) * dt
        env = np.ones(n)
        if self.t_rise > 0:
            env = np.minimum(1.0, t / self.t_rise)
        env[t >= self.t_rise + self.t_measure] = math.sqrt(self.latch_power_fraction)
        return env


def reset_residual(pulse: PulseSpec, spectrum: ModeSpectrum, mode: int = 3) -> float:
    """Coherent photon number left at the next pulse, relative to the low branch.

    Uses the high branch as the worst case and free ring-down at rate 2 pi gamma
    during the off time between pulses.
    """
    gam = spectrum.gamma(mode)
    pulse.validate(gam)
    ss = steady_state(spectrum, pulse.drive(), mode)
    t_off = 1.0 / pulse.repetition_rate - pulse.t_total
    return ss.high.n * math.exp(-2 * math.pi * gam * t_off) / max(ss.low.n, 1e-300)


# ---------------------------------------------------------------- discrimination

@dataclass(frozen=True)
class Discriminator:
    """Threshold on the magnitude of the trace averaged over the latch window."""

    amp_low: float
    amp_high: float
    window: slice
    sigma: float

    @property
    def threshold(self) -> float:
        return 0.5 * (self.amp_low + self.amp_high)

    def statistic(self, traces: np.ndarray) -> np.ndarray:
        return np.abs(np.mean(traces[..., self.window], axis=-1))

    def fidelity(self) -> float:
        return analytic_fidelity(self.amp_high - self.amp_low, self.sigma)


def analytic_fidelity(separation: float, sigma: float) -> float:
    """Probability of correct assignment for two Gaussians ``separation`` apart."""
    if sigma <= 0:
        return 1.0
    return float(stats.norm.cdf(abs(separation) / (2 * sigma)))


def _branch_refs(pulse: PulseSpec, spectrum: ModeSpectrum, mode: int):
    latch = DriveSpec(pulse.nu_d, pulse.plateau_power * pulse.latch_power_fraction)
    for drv in (latch, pulse.drive()):
        ss = steady_state(spectrum, drv, mode)
        if ss.bistable:
            return abs(ss.low.alpha), abs(ss.high.alpha)
    # No bistability: take the high reference on the Kerr backbone u = D.
    gam, K = spectrum.gamma(mode), spectrum.kerr(mode)
    ss = steady_state(spectrum, latch if pulse.t_latch > 0 else pulse.drive(), mode)
    D = 2 * (pulse.nu_d - spectrum.nu(mode)) / gam * (1 if K >= 0 else -1)
    u_hi = max(D, 2 / math.sqrt(3))
    n_hi = u_hi * gam / (4 * abs(K)) if K != 0 else 4 * ss.low.n + 1.0
    return abs(ss.low.alpha), max(math.sqrt(n_hi), abs(ss.low.alpha))


def discriminator(pulse: PulseSpec, spectrum: ModeSpectrum, mode: int = 3) -> Discriminator:
    n_samples = max(1, int(round(pulse.t_total / pulse.sample_interval)))
    if pulse.t_latch > 0:
        n_win = max(1, int(round(pulse.t_latch / pulse.sample_interval)))
    else:
        n_win = max(1, int(round(DWELL / spectrum.gamma(mode) / pulse.sample_interval)))
    n_win = min(n_win, n_samples)
    lo, hi = _branch_refs(pulse, spectrum, mode)
    sigma = math.sqrt(pulse.detection_noise_photons / (2 * n_win))
    return Discriminator(lo, hi, slice(n_samples - n_win, n_samples), sigma)


# ---------------------------------------------------------------- pulses

@dataclass
class PulseResult:
    switched: bool
    trace: np.ndarray
    statistic: float
    threshold: float
    t: np.ndarray


@dataclass
class PulseBatch:
    switched: np.ndarray
    statistic: np.ndarray
    traces: Optional[np.ndarray]
    discriminator: Optional[Discriminator]


def _step_for(pulse: PulseSpec, gam: float, dt: Optional[float]):
    dt = 0.02 / gam if dt is None else dt
    every = max(1, int(round(pulse.sample_interval / dt)))
    return pulse.sample_interval / every, every


def run_pulses(pulse: PulseSpec, spectrum: ModeSpectrum, env: ThermalEnvironment,
               noise: Optional[NoiseSpec], n: int, seed: int, *, key: Sequence[int] = (),
               curve_key: Sequence[int] = (), detection: str = "trace",
               dt: Optional[float] = None, keep_traces: bool = False, mode: int = 3,
               extra_shift: float = 0.0, jobs: int = 1) -> PulseBatch:
    """Simulate ``n`` pulses through the stochastic dynamics.

    ``detection="trace"`` runs the full pulse and thresholds the noisy
    homodyne record over the latch window.  ``detection="dwell"`` stops
    ``DWELL/gamma`` into the latch and uses the photon-number dwell criterion.
    ``extra_shift`` is a deterministic mode-frequency shift (Hz) added to
    every pulse.
    """
    gam = spectrum.gamma(mode)
    pulse.validate(gam)
    dt, every = _step_for(pulse, gam, dt)
    offs, afac = trajectory_offsets(noise, spectrum, n, seed, curve_key=curve_key,
                                    point_key=key, mode=mode)
    offs = offs + extra_shift
    drv = pulse.drive()
    if detection == "dwell":
        env_arr = pulse.envelope(dt, pulse.t_rise + pulse.t_measure + DWELL / gam)
        thr = _dwell_thresholds(spectrum, drv, mode)
        res = simulate_ensemble(spectrum, env, drv, n, seed, key=(*curve_key, *key), dt=dt,
                                envelope=env_arr, start="vacuum", dnu_offsets=offs,
                                amp_factors=afac, thresholds=thr, mode=mode, jobs=jobs)
        return PulseBatch(res.switched, res.switched.astype(float), None, None)
    if detection != "trace":
        raise ValueError("detection must be 'trace' or 'dwell'")
    disc = discriminator(pulse, spectrum, mode)
    res = simulate_ensemble(spectrum, env, drv, n, seed, key=(*curve_key, *key), dt=dt,
                            envelope=pulse.envelope(dt), start="vacuum", dnu_offsets=offs,
                            amp_factors=afac, record_every=every, detect=False, mode=mode,
                            jobs=jobs)
    rec = res.record
    if pulse.detection_noise_photons > 0:
        rng = parallel.rng_for(seed, parallel.S_DETECTION, *curve_key, *key)
        z = rng.standard_normal(rec.shape + (2,))
        rec = rec + math.sqrt(pulse.detection_noise_photons / 2) * (z[..., 0] + 1j * z[..., 1])
    stat = disc.statistic(rec)
    return PulseBatch(stat > disc.threshold, stat, rec if keep_traces else None, disc)


def _dwell_thresholds(spectrum, drv, mode) -> Thresholds:
    try:
        return switch_thresholds(spectrum, drv, mode)
    except Exception:
        # Below the band: nothing can switch, so the thresholds are never reached.
        return Thresholds(math.inf, math.inf)


def run_pulse(pulse: PulseSpec, spectrum: ModeSpectrum, env: ThermalEnvironment,
              noise: Optional[NoiseSpec], seed: int, *, dt: Optional[float] = None,
              mode: int = 3) -> PulseResult:
    """One pulse with its homodyne trace (complex samples, photon-amplitude units)."""
    b = run_pulses(pulse, spectrum, env, noise, 1, seed, dt=dt, keep_traces=True, mode=mode)
    trace = b.traces[0]
    t = (np.arange(trace.shape[0]) + 1) * pulse.sample_interval
    return PulseResult(bool(b.switched[0]), trace, float(b.statistic[0]),
                       b.discriminator.threshold, t)


# ---------------------------------------------------------------- statistics

def clopper_pearson(k: int, n: int, level: float = CI_LEVEL):
    """Exact binomial confidence interval."""
    a = 1 - level
    lo = 0.0 if k == 0 else float(stats.beta.ppf(a / 2, k, n - k + 1))
    hi = 1.0 if k == n else float(stats.beta.ppf(1 - a / 2, k + 1, n - k))
    return lo, hi


@dataclass(frozen=True)
class SwitchEstimate:
    p_s: float
    ci_low: float
    ci_high: float
    n_pulses: int
    n_switched: int


def _estimate(k: int, n: int) -> SwitchEstimate:
    lo, hi = clopper_pearson(k, n)
    return SwitchEstimate(k / n, lo, hi, n, k)


def analytic_pulse_probabilities(pulse: PulseSpec, model: SwitchingModel,
                                 spectrum: ModeSpectrum, noise: Optional[NoiseSpec], n: int,
                                 seed: int, *, key=(), curve_key=(), mode: int = 3,
                                 extra_shift: float = 0.0) -> np.ndarray:
    """Per-pulse switching probabilities of the activation model under the noise offsets."""
    offs, afac = trajectory_offsets(noise, spectrum, n, seed, curve_key=curve_key,
                                    point_key=key, mode=mode)
    shift = offs + extra_shift
    if np.any(afac != 1.0):
        region = bistability_region(spectrum, mode)
        f0 = pulse.plateau_power
        d0 = region.switching_detuning(f0)
        eps = 1e-4
        slope = (region.switching_detuning(f0 * (1 + eps)) - d0) / eps
        shift = shift + slope * (afac ** 2 - 1.0)
    return model.p(pulse.nu_d, shift=shift)


def switching_probability(pulse: PulseSpec, n_pulses: int, spectrum: ModeSpectrum,
                          env: ThermalEnvironment, noise: Optional[NoiseSpec],
                          master_seed: int, *, engine: str = "analytic",
                          model: Optional[SwitchingModel] = None, key: Sequence[int] = (),
                          curve_key: Sequence[int] = (), detection: str = "trace",
                          dt: Optional[float] = None, mode: int = 3,
                          extra_shift: float = 0.0, jobs: int = 1) -> SwitchEstimate:
    """Monte Carlo switching probability with an exact 95% binomial interval.

    ``engine="analytic"`` draws Bernoulli outcomes from the activation model
    (``model`` required); ``engine="sde"`` integrates the stochastic dynamics.
    """
    if n_pulses < 1:
        raise ValueError("n_pulses must be >= 1")
    if engine == "analytic":
        if model is None:
            raise ValueError("the analytic engine needs a SwitchingModel")
        p = analytic_pulse_probabilities(pulse, model, spectrum, noise, n_pulses, master_seed,
                                         key=key, curve_key=curve_key, mode=mode,
                                         extra_shift=extra_shift)
        u = parallel.rng_for(master_seed, parallel.S_BERNOULLI, *curve_key, *key).random(n_pulses)
        k = int(np.count_nonzero(u < p))
    elif engine == "sde":
        b = run_pulses(pulse, spectrum, env, noise, n_pulses, master_seed, key=key,
                       curve_key=curve_key, detection=detection, dt=dt, mode=mode,
                       extra_shift=extra_shift, jobs=jobs)
        k = int(np.count_nonzero(b.switched))
    else:
        raise ValueError("engine must be 'analytic' or 'sde'")
    return _estimate(k, n_pulses)


# ---------------------------------------------------------------- S-curves

@dataclass(frozen=True)
class SCurvePoint:
    nu_d: float
    p_s: float
    n_pulses: int
    ci_low: float
    ci_high: float


@dataclass
class SCurve:
    points: List[SCurvePoint]
    curve_index: int = 0

    @property
    def nu(self) -> np.ndarray:
        return np.array([p.nu_d for p in self.points])

    @property
    def p(self) -> np.ndarray:
        return np.array([p.p_s for p in self.points])

    @property
    def n(self) -> np.ndarray:
        return np.array([p.n_pulses for p in self.points])

    @property
    def width_10_90(self) -> float:
        return width_10_90(self)

    @property
    def nu_50(self) -> float:
        return crossing(self.nu, self.p, 0.5)

    @classmethod
    def from_arrays(cls, nu, p, n, curve_index: int = 0) -> "SCurve":
        pts = []
        for x, q, m in zip(nu, p, n):
            m = int(m)
            k = int(round(q * m))
            lo, hi = clopper_pearson(k, m) if m > 0 else (0.0, 1.0)
            pts.append(SCurvePoint(float(x), float(q), m, lo, hi))
        return cls(pts, curve_index)


def isotonic(y, w=None, increasing: bool = True) -> np.ndarray:
    """Weighted pool-adjacent-violators fit."""
    y = np.asarray(y, dtype=float)
    w = np.ones_like(y) if w is None else np.asarray(w, dtype=float)
    if not increasing:
        return -isotonic(-y, w, True)
    vals, wts, sizes = [], [], []
    for yi, wi in zip(y, w):
        vals.append(yi)
        wts.append(wi)
        sizes.append(1)
        while len(vals) > 1 and vals[-2] > vals[-1]:
            wsum = wts[-2] + wts[-1]
            v = (vals[-2] * wts[-2] + vals[-1] * wts[-1]) / wsum
            vals[-2:] = [v]
            wts[-2:] = [wsum]
            sizes[-2:] = [sizes[-2] + sizes[-1]]
    return np.repeat(vals, sizes)


def _direction(nu, p) -> bool:
    """True if P_s increases with frequency."""
    return np.sum((nu - nu.mean()) * (p - p.mean())) >= 0


def crossing(nu, p, level: float, w=None) -> float:
    """Frequency where a monotone (PAV + PCHIP) smoothing of p crosses ``level``."""
    nu = np.asarray(nu, dtype=float)
    p = np.asarray(p, dtype=float)
    order = np.argsort(nu)
    nu, p = nu[order], p[order]
    w = None if w is None else np.asarray(w, dtype=float)[order]
    inc = _direction(nu, p)
    q = isotonic(p, w, inc)
    if not (q.min() <= level <= q.max()) or q.min() == q.max():
        raise RangeNotSpanned(f"curve does not cross P_s = {level}")
    if not inc:
        nu, q = nu[::-1], q[::-1]
        f = PchipInterpolator(-nu, q)
        g = lambda x: f(-x) - level
    else:
        f = PchipInterpolator(nu, q)
        g = lambda x: f(x) - level
    # First sample at or above the level along the rising direction.
    k = int(np.argmax(q >= level))
    if q[k] == level:
        j = k
        while j + 1 < len(q) and q[j + 1] == level:
            j += 1
        return float(0.5 * (nu[k] + nu[j]))
    a, b = sorted((nu[k - 1], nu[k]))
    return float(brentq(g, a, b, xtol=max(1e-13 * (b - a), 1e-300),
                        rtol=4 * np.finfo(float).eps))


def width_10_90(curve) -> float:
    """|nu(0.9) - nu(0.1)| of the monotone-smoothed curve.

    A transition that jumps from <= 0.1 to >= 0.9 between two adjacent grid
    points is unresolved and reported as width 0.
    """
    if isinstance(curve, SCurve):
        nu, p, w = curve.nu, curve.p, curve.n
    else:
        nu, p = curve
        w = None
    a, b = crossing(nu, p, 0.9, w), crossing(nu, p, 0.1, w)
    nu_s = np.sort(np.asarray(nu, dtype=float))
    order = np.argsort(np.asarray(nu, dtype=float))
    q = np.asarray(p, dtype=float)[order]
    q = isotonic(q, None if w is None else np.asarray(w, float)[order], _direction(nu_s, q))
    for i in range(len(q) - 1):
        if min(q[i], q[i + 1]) <= 0.1 and max(q[i], q[i + 1]) >= 0.9:
            return 0.0
    return abs(a - b)


def s_curve(grid: Sequence[float], pulse: PulseSpec, spectrum: ModeSpectrum,
            env: ThermalEnvironment, noise: Optional[NoiseSpec], n_pulses: int,
            master_seed: int, *, curve_index: int = 0, engine: str = "analytic",
            model: Optional[SwitchingModel] = None, detection: str = "trace",
            dt: Optional[float] = None, mode: int = 3, jobs: int = 1,
            check_span: bool = True) -> SCurve:
    """Switching probability at each grid frequency.

    All points of one curve share the per-curve noise draw.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing with at least 2 points")
    ck = (curve_index,)
    pts = []
    for i, nu_d in enumerate(grid):
        est = switching_probability(pulse.at(nu_d), n_pulses, spectrum, env, noise, master_seed,
                                    engine=engine, model=model, key=(i,), curve_key=ck,
                                    detection=detection, dt=dt, mode=mode, jobs=jobs)
        pts.append(SCurvePoint(float(nu_d), est.p_s, est.n_pulses, est.ci_low, est.ci_high))
    curve = SCurve(pts, curve_index)
    if check_span:
        p = curve.p
        if not (p.min() < 0.05 and p.max() > 0.95):
            raise GridTooNarrow(
                f"grid spans P_s in [{p.min():.3f}, {p.max():.3f}]; need < 0.05 and > 0.95"
            )
    return curve


def average_curves(curves: Sequence[SCurve]) -> SCurve:
    """Pointwise mean of curves measured on a common grid."""
    if not curves:
        raise ValueError("no curves to average")
    nu = curves[0].nu
    for c in curves[1:]:
        if c.nu.shape != nu.shape or np.any(c.nu != nu):
            raise ValueError("curves must share a grid")
    n = np.sum([c.n for c in curves], axis=0)
    p = np.sum([c.p * c.n for c in curves], axis=0) / n
    return SCurve.from_arrays(nu, p, n, curve_index=-1)


def mean_single_width(curves: Sequence[SCurve]) -> float:
    """Mean of the individual 10-90 widths (the alternative to the averaged-curve width)."""
    return float(np.mean([c.width_10_90 for c in curves]))


def analytic_grid(model: SwitchingModel, n_points: int = 21, lo: float = 0.995,
                  hi: float = 0.002) -> np.ndarray:
    """Grid covering the activation curve from P_s ~ ``lo`` down to ``hi``."""
    a = model.nu_at(min(lo, 0.999 * -math.expm1(-model.attempts)))
    b = model.nu_at(hi)
    pad = 0.1 * abs(b - a)
    lo_nu, hi_nu = sorted((a - model.sign * pad, b + model.sign * pad))
    return np.linspace(lo_nu, hi_nu, n_points)


def locate_grid(pulse: PulseSpec, spectrum: ModeSpectrum, env: ThermalEnvironment,
                noise: Optional[NoiseSpec], seed: int, *, guess_center: float,
                guess_width: float, n_points: int = 15, pilot_pulses: int = 400,
                span: float = 3.0, detection: str = "trace", dt=None, mode: int = 3,
                jobs: int = 1, max_expand: int = 6) -> np.ndarray:
    """Pilot scan of the stochastic dynamics to place an S-curve grid.

    Starts from a window ``guess_center +- 3 guess_width`` and widens it until
    the pilot crosses both 10% and 90%, then returns ``n_points`` spanning
    ``span`` pilot widths on each side of the pilot midpoint.
    """
    lo, hi = guess_center - 3 * guess_width, guess_center + 3 * guess_width
    for attempt in range(max_expand):
        grid = np.linspace(lo, hi, 13)
        c = s_curve(grid, pulse, spectrum, env, noise, pilot_pulses, seed,
                    curve_index=10_000 + attempt, engine="sde", detection=detection, dt=dt,
                    mode=mode, jobs=jobs, check_span=False)
        p = c.p
        if p.min() < 0.1 and p.max() > 0.9:
            try:
                a, b = crossing(c.nu, p, 0.1), crossing(c.nu, p, 0.9)
                mid, wid = 0.5 * (a + b), max(abs(b - a), (hi - lo) / 12)
                return np.linspace(mid - span * wid, mid + span * wid, n_points)
            except RangeNotSpanned:
                pass
        inc = _direction(c.nu, p) if p.max() > p.min() else True
        width = hi - lo
        if p.max() <= 0.9:
            # Need the high side: below nu_sw for K > 0 (decreasing curve).
            if inc:
                hi += width
            else:
                lo -= width
        if p.min() >= 0.1:
            if inc:
                lo -= width
            else:
                hi += width
    raise GridTooNarrow("pilot scan could not bracket the S-curve")


def nu50_scatter_test(curves: Sequence[SCurve], seed: int, n_boot: int = 2000):
    """Chi-square test of curve-to-curve nu_50 scatter against pure binomial noise.

    The binomial expectation is a parametric bootstrap: counts are redrawn
    from the averaged curve and the spread of the resulting nu_50 values sets
    the reference variance.  Returns (chi2, dof, p_value, sigma_binomial).
    """
    avg = average_curves(curves)
    nu, pbar = avg.nu, avg.p
    n = curves[0].n
    rng = parallel.rng_for(seed, parallel.S_SYNTH, 50)
    boots = []
    for _ in range(n_boot):
        k = rng.binomial(n, pbar)
        try:
            boots.append(crossing(nu, k / n, 0.5, n))
        except RangeNotSpanned:
            continue
    sigma_b = float(np.std(boots, ddof=1))
    vals = np.array([c.nu_50 for c in curves])
    chi2 = float(np.sum((vals - vals.mean()) ** 2) / sigma_b ** 2)
    dof = len(vals) - 1
    return chi2, dof, float(stats.chi2.sf(chi2, dof)), sigma_b
