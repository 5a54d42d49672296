"""Command-line experiments: ``kerrsim <command> [--config FILE] [--seed N] ...``.

Every command writes CSV files into ``--out``.  Exit codes: 0 success,
2 configuration or I/O error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import math
import os
import sys
from typing import Iterable, List, Optional, Sequence

import numpy as np

from . import __version__
from .analysis import lorentzian_fit, s_curve_fit, tuning_curve_fit
from .circuit import (
    critical_photon_number,
    josephson_inductance,
    mode_frequency,
)
from .config import Experiment, load
from .dynamics import (
    SwitchingModel,
    bistability_region,
    drive_for_spinodal,
    dykman_width,
)
from .errors import ConfigError, KerrsimError, NumericalError, RangeNotSpanned
from .measurement import (
    SCurve,
    analytic_grid,
    average_curves,
    crossing,
    locate_grid,
    nu50_scatter_test,
    s_curve,
)
from .noise import broadened_width, flux_broadening, gauss_hermite_smear
from .spectroscopy import (
    SpectroscopyScan,
    beta_from_mode_centers,
    bias_frequency,
    photon_sensitivity,
    probe_power_for,
    run_scan,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.10g}"
    return str(x)


class Writer:
    def __init__(self, out_dir: str, command: str, seed: int, timestamp: bool):
        self.out_dir = out_dir
        self.command = command
        self.seed = seed
        self.timestamp = timestamp
        self.written: List[str] = []

    def write(self, name: str, header: Sequence[str], rows: Iterable[Sequence]) -> str:
        os.makedirs(self.out_dir, exist_ok=True)
        path = os.path.join(self.out_dir, name)
        with open(path, "w", newline="") as fh:
            if self.timestamp:
                now = _dt.datetime.now(_dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
                fh.write(f"# kerrsim {__version__} {self.command} seed={self.seed} {now}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([fmt(v) for v in r])
        self.written.append(path)
        return path


# ---------------------------------------------------------------- helpers

def _noise_sigma(exp: Experiment, spectrum) -> float:
    """Combined RMS of the Gaussian mode-frequency offsets (first order in flux)."""
    nz = exp.noise
    s_flux = abs(spectrum.dnu_dphi(exp.mode)) * nz.sigma_flux
    return math.sqrt(s_flux ** 2 + nz.excess_freq_noise ** 2 + nz.drive_freq_jitter ** 2)


def _analytic_width(model: SwitchingModel, sigma: float) -> float:
    """10-90 width of the activation curve averaged over a Gaussian frequency offset."""
    grid = analytic_grid(model, 4001)
    pad = 6 * sigma
    grid = np.linspace(grid[0] - pad, grid[-1] + pad, 4001)
    p = gauss_hermite_smear(model.p, grid, sigma)
    return abs(crossing(grid, p, 0.9) - crossing(grid, p, 0.1))


def _grid(exp: Experiment, model, spectrum, env, seed, n_points, engine, pilot_pulses):
    sc = exp.cfg["scurve"]
    nu = spectrum.nu(exp.mode)
    if sc["grid_min_kHz"] is not None and sc["grid_max_kHz"] is not None:
        return np.linspace(nu + sc["grid_min_kHz"] * 1e3, nu + sc["grid_max_kHz"] * 1e3, n_points)
    if engine == "analytic":
        base = analytic_grid(model, n_points)
        pad = 4 * _noise_sigma(exp, spectrum)
        return np.linspace(base[0] - pad, base[-1] + pad, n_points)
    pulse = exp.pulse_for(model.nu_at(0.5), exp.photon_flux(spectrum), spectrum)
    return locate_grid(pulse, spectrum, env, exp.noise, seed, guess_center=model.nu_at(0.5),
                       guess_width=model.width_10_90 + _noise_sigma(exp, spectrum),
                       n_points=n_points, pilot_pulses=pilot_pulses,
                       detection=exp.cfg["dynamics"]["detection"], dt=exp.dt, mode=exp.mode,
                       jobs=exp.jobs)


def _curves(exp, spectrum, env, model, grid, n_curves, n_pulses, seed, engine, photon_flux):
    pulse = exp.pulse_for(grid[0], photon_flux, spectrum)
    det = exp.cfg["dynamics"]["detection"]
    return [s_curve(grid, pulse, spectrum, env, exp.noise, n_pulses, seed, curve_index=i,
                    engine=engine, model=model, detection=det, dt=exp.dt, mode=exp.mode,
                    jobs=exp.jobs, check_span=False)
            for i in range(n_curves)]


def _safe(fn, *a):
    try:
        return fn(*a)
    except (RangeNotSpanned, ValueError):
        return math.nan


# ---------------------------------------------------------------- commands

def cmd_tune(exp: Experiment, w: Writer, args) -> None:
    t = exp.cfg["tune"]
    grid = np.linspace(t["flux_min"], t["flux_max"], t["n_flux"])
    rows = []
    for phi in grid:
        for n in t["modes"]:
            rows.append((float(phi), int(n), mode_frequency(exp.params, int(n), float(phi))))
    w.write("tune.csv", ["phi_reduced", "mode", "frequency_Hz"], rows)


def cmd_scurve(exp: Experiment, w: Writer, args) -> None:
    sc = exp.cfg["scurve"]
    engine = exp.cfg["run"]["engine"]
    spec = exp.spectrum()
    env = exp.env()
    model = exp.model(spec, env)
    flux = exp.photon_flux(spec)
    grid = _grid(exp, model, spec, env, w.seed, sc["n_points"], engine, sc["pilot_pulses"])
    curves = _curves(exp, spec, env, model, grid, sc["n_curves"], sc["n_pulses"], w.seed,
                     engine, flux)
    avg = average_curves(curves)
    rows = []
    for c in curves + [avg]:
        for p in c.points:
            rows.append((p.nu_d, p.p_s, p.ci_low, p.ci_high, p.n_pulses, c.curve_index))
    w.write("scurve.csv", ["nu_d_Hz", "p_s", "ci_low", "ci_high", "n_pulses", "curve_index"], rows)
    width_avg = avg.width_10_90
    singles = [_safe(lambda c: c.width_10_90, c) for c in curves]
    nu50 = [_safe(lambda c: c.nu_50, c) for c in curves]
    summary = [
        ("width_averaged_Hz", width_avg),
        ("width_mean_single_Hz", float(np.nanmean(singles))),
        ("nu50_scatter_Hz", float(np.nanstd(nu50, ddof=1)) if len(curves) > 1 else math.nan),
        ("model_width_Hz", model.width_10_90),
        ("dykman_width_Hz", dykman_width(spec, env, abs(model.nu_sw - spec.nu(exp.mode)),
                                         exp.mode) * spec.nu(exp.mode)),
        ("nu_sw_Hz", model.nu_sw),
        ("detuning_Hz", model.nu_sw - spec.nu(exp.mode)),
        ("photon_flux", flux),
    ]
    if len(curves) > 1 and all(np.isfinite(nu50)):
        chi2, dof, pval, sig_b = nu50_scatter_test(curves, w.seed)
        summary += [("nu50_binomial_sigma_Hz", sig_b), ("nu50_chi2", chi2),
                    ("nu50_dof", dof), ("nu50_p_value", pval)]
    w.write("scurve_summary.csv", ["quantity", "value"], summary)


def cmd_spectroscopy(exp: Experiment, w: Writer, args) -> None:
    sp = exp.cfg["spectroscopy"]
    spec = exp.spectrum()
    env = exp.env()
    model = exp.model(spec, env)
    flux = exp.photon_flux(spec)
    nu_b = bias_frequency(model)
    bias = exp.pulse_for(nu_b, flux, spec)
    rows, fits = [], []
    coupled_powers = {}
    for n in sp["modes"]:
        if n % 2 == 1 and n != exp.mode:
            coupled_powers[n] = (sp["probe_power"] if sp["probe_power"] is not None else
                                 probe_power_for(spec, model, n, nu_b, sp["probe_delta_p"],
                                                 exp.op["ext_fraction"], exp.mode))
    fallback = min(coupled_powers.values()) if coupled_powers else 1e6
    centers, sigmas = {}, {}
    for idx, n in enumerate(sp["modes"]):
        n = int(n)
        if n == exp.mode:
            raise ConfigError("the bifurcating mode cannot be its own probe target")
        power = coupled_powers.get(n, sp["probe_power"] if sp["probe_power"] is not None else fallback)
        g = spec.gamma(n)
        grid = np.linspace(spec.nu(n) - sp["span_linewidths"] * g,
                           spec.nu(n) + sp["span_linewidths"] * g, sp["n_points"])
        scan = run_scan(SpectroscopyScan(n, grid, power), bias, spec, env, exp.noise, model,
                        sp["n_pulses"], w.seed, bias_pulses=sp["bias_pulses"], scan_index=idx,
                        ext_fraction=exp.op["ext_fraction"])
        for nu_p, p, lo, hi in scan.trace:
            rows.append((n, nu_p, p, lo, hi))
        c_sig = scan.fit.sigmas["center"] if scan.fit else math.nan
        fits.append((n, spec.nu(n), scan.fitted_center, c_sig, scan.fitted_width, power,
                     scan.bias_pre, scan.bias_post))
        if scan.fit is not None and np.isfinite(scan.fitted_center):
            centers[n], sigmas[n] = scan.fitted_center, c_sig
    w.write("spectroscopy.csv", ["mode", "nu_probe_Hz", "p_s", "ci_low", "ci_high"], rows)
    w.write("spectroscopy_fit.csv",
            ["mode", "model_nu_Hz", "fitted_center_Hz", "center_sigma_Hz", "fitted_width_Hz",
             "probe_power", "bias_p_pre", "bias_p_post"], fits)
    summary = [("bias_nu_d_Hz", nu_b), ("width_Hz", model.width_10_90),
               ("beta_model", spec.beta)]
    if centers:
        b, sb, _ = beta_from_mode_centers(centers, exp.params.nu_fundamental_bare,
                                          sigmas if all(s > 0 for s in sigmas.values()) else None)
        summary += [("beta_fit", b), ("beta_fit_sigma", sb)]
    for n in sorted(coupled_powers):
        summary.append((f"photon_sensitivity_mode{n}",
                        photon_sensitivity(spec, model.width_10_90, n, exp.mode)))
    w.write("spectroscopy_summary.csv", ["quantity", "value"], summary)


def _width_ratio(exp, spec, env0):
    """Measured-to-theory width factor when a measured width is configured."""
    if exp.target_width is None:
        return 1.0
    m0 = exp.model(spec, env0)
    d0 = abs(m0.nu_sw - spec.nu(exp.mode))
    return exp.target_width / (dykman_width(spec, env0, d0, exp.mode) * spec.nu(exp.mode))


def cmd_noise_sweep(exp: Experiment, w: Writer, args) -> None:
    ns = exp.cfg["noise_sweep"]
    axis = args.axis or ns["axis"]
    engine = ns["engine"]
    mode = exp.mode
    spec0 = exp.spectrum()
    env0 = exp.env()
    ratio = _width_ratio(exp, spec0, env0)
    delta = exp.detuning(spec0)
    rows = []
    if axis == "flux":
        values = ns["flux_values"]
    elif axis == "temperature":
        values = ns["temperatures_mK"]
    else:
        values = ns["power_factors"]
    for i, v in enumerate(values):
        v = float(v)
        if axis == "flux":
            spec = exp.spectrum(v)
            env = exp.env(nu=spec.nu(mode))
            # Same detuning and intrinsic width at every bias point; only nu'(phi) changes.
            flux = drive_for_spinodal(spec, delta, mode, exp.op["ext_fraction"])
            ds = broadened_width(exp.params, env0, exp.noise, v, delta, exp.target_width, mode)
            ds0 = ds - flux_broadening(exp.params, exp.noise.sigma_flux, v, mode)
            model = exp.model(spec, env, flux, ds0)
        else:
            spec = spec0
            env = exp.env(v if axis == "temperature" else None)
            if axis == "power":
                region = bistability_region(spec, mode, exp.op["ext_fraction"])
                flux = v * region.onset_photon_flux
            else:
                flux = exp.photon_flux(spec)
            base = SwitchingModel.calibrated(spec, env, flux, exp.pulse_times(spec)[1], None,
                                             mode=mode, ext_fraction=exp.op["ext_fraction"])
            ds = base.width_10_90 * ratio
            model = SwitchingModel.calibrated(spec, env, flux, exp.pulse_times(spec)[1], ds,
                                              mode=mode, ext_fraction=exp.op["ext_fraction"])
        sigma = _noise_sigma(exp, spec)
        ds_an = _analytic_width(model, sigma)
        ds_mc, ci = math.nan, math.nan
        if engine != "none":
            grid = _grid(exp, model, spec, env, w.seed + i, ns["n_points"], engine, 400)
            curves = _curves(exp, spec, env, model, grid, ns["n_curves"], ns["n_pulses"],
                             w.seed + i, engine, flux)
            avg = average_curves(curves)
            ds_mc = _safe(lambda c: c.width_10_90, avg)
            try:
                ci = 1.96 * s_curve_fit(avg).sigmas["width_10_90"]
            except KerrsimError:
                ci = math.nan
        rows.append((v, ds, ds_an, ds_mc, ci))
    w.write(f"noise_sweep_{axis}.csv",
            ["axis_value", "delta_s_Hz", "delta_s_analytic_Hz", "delta_s_mc_Hz", "mc_ci_Hz"], rows)


def _read_numeric_csv(path: str):
    header, data = None, []
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    with fh:
        for row in csv.reader(fh):
            if not row or row[0].startswith("#"):
                continue
            try:
                data.append([float(x) for x in row])
            except ValueError:
                if header is None and not data:
                    header = [h.strip() for h in row]
                    continue
                raise ConfigError(f"non-numeric row in {path}: {row}") from None
    if not data:
        raise ConfigError(f"no data rows in {path}")
    return header, np.array(data)


def cmd_fit(exp: Experiment, w: Writer, args) -> None:
    f = exp.cfg["fit"]
    path = args.input or f["input"]
    kind = args.kind or f["kind"]
    if path is None:
        raise ConfigError("fit needs an input CSV (--input or [fit] input)")
    header, data = _read_numeric_csv(path)
    col = (lambda name, default: header.index(name) if header and name in header else default)
    if kind == "lorentzian":
        if header and "mode" in header:
            # spectroscopy.csv layout: fit the first mode only
            m = data[:, header.index("mode")]
            data = data[m == m[0]]
            nu, y = data[:, col("nu_probe_Hz", 1)], data[:, col("p_s", 2)]
        else:
            nu, y = data[:, col("nu_Hz", 0)], data[:, col("magnitude", 1)]
        res = lorentzian_fit(nu, y)
    elif kind == "scurve":
        if header and "curve_index" in header:
            ci = data[:, header.index("curve_index")]
            data = data[ci == (-1 if np.any(ci == -1) else ci[0])]
        nu = data[:, col("nu_d_Hz", 0)]
        p = data[:, col("p_s", 1)]
        n = data[:, col("n_pulses", 4)] if data.shape[1] > 4 else np.full(len(nu), 1000)
        res = s_curve_fit(SCurve.from_arrays(nu, p, n), attempts=f["attempts"])
    else:
        pts = data[:, [col("phi_reduced", 0), col("mode", 1), col("frequency_Hz", 2)]]
        res = tuning_curve_fit(pts, exp.params)
    names = list(res.params) + [k for k in res.derived if k != "sign"]
    values = {**res.params, **res.derived}
    for k in names:
        s = res.sigmas.get(k, math.nan)
        print(f"{k} = {fmt(values[k])} +- {fmt(s)}")
    print(f"residual_rms = {fmt(res.residual_rms)}")
    print(f"converged = {res.converged}")
    header_out = ["kind", "converged", "residual_rms"]
    row = [kind, res.converged, res.residual_rms]
    for k in names:
        header_out += [k, f"{k}_sigma"]
        row += [values[k], res.sigmas.get(k, math.nan)]
    w.write("fit.csv", header_out, [row])


def cmd_calibrate(exp: Experiment, w: Writer, args) -> None:
    p = exp.params
    spec = exp.spectrum(0.0)
    env = exp.env(nu=spec.nu(exp.mode))
    g, K = spec.gamma(exp.mode), spec.kerr(exp.mode)
    region = bistability_region(spec, exp.mode, exp.op["ext_fraction"])
    delta = exp.detuning(spec)
    rows = [
        ("z0_ohm", p.z0), ("nu1_bare_Hz", p.nu_fundamental_bare), ("l_wg_H", p.l_wg),
        ("l_array_H", p.l_array0), ("l_j_H", josephson_inductance(p.i_c, 0.0)),
        ("beta", spec.beta), ("e_j_J", spec.e_j),
    ]
    rows += [(f"nu{n}_Hz", spec.nu(n)) for n in spec.modes]
    rows += [
        (f"K{exp.mode}_Hz", K),
        (f"lambda_1_{exp.mode}_Hz", spec.cross(1, exp.mode)),
        ("critical_photon_number", critical_photon_number(g, K)),
        ("onset_photon_number", region.onset_photon_number),
        ("c_conv", region.c_conv),
        ("onset_photon_flux", region.onset_photon_flux),
        ("t_eff_K", env.t_eff),
        ("reference_detuning_Hz", delta),
        ("reference_detuning_over_gamma", delta / g),
        ("dykman_width_Hz", dykman_width(spec, env, delta, exp.mode) * spec.nu(exp.mode)),
        ("photon_flux", exp.photon_flux(spec)),
    ]
    w.write("calibrate.csv", ["quantity", "value"], rows)
    print("[device]")
    print(f"z0_ohm = {fmt(p.z0)}")
    print(f"nu1_bare_GHz = {fmt(p.nu_fundamental_bare / 1e9)}")


COMMANDS = {
    "tune": cmd_tune,
    "scurve": cmd_scurve,
    "spectroscopy": cmd_spectroscopy,
    "noise-sweep": cmd_noise_sweep,
    "fit": cmd_fit,
    "calibrate": cmd_calibrate,
}


def _add_globals(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--config", default=d(None), help="TOML configuration file")
    p.add_argument("--seed", type=int, default=d(None), help="master seed (overrides [run] seed)")
    p.add_argument("--out", default=d(None), help="output directory (overrides [run] out)")
    p.add_argument("--jobs", type=int, default=d(None), help="worker processes (0 = all)")
    p.add_argument("--no-header-timestamp", action="store_true", default=d(False),
                   help="omit the timestamped comment line from CSV outputs")
    p.add_argument("--dry-run", action="store_true", default=d(False),
                   help="validate the configuration and exit")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kerrsim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"kerrsim {__version__}")
    _add_globals(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "tune": "mode frequencies versus flux",
        "scurve": "repeated switching-probability curves and widths",
        "spectroscopy": "cross-Kerr spectroscopy of the coupled modes",
        "noise-sweep": "S-curve width versus flux, temperature or power",
        "fit": "fit a Lorentzian, S-curve or tuning curve to a CSV trace",
        "calibrate": "derived device constants at zero flux",
    }
    for name, text in helps.items():
        sp = sub.add_parser(name, help=text)
        _add_globals(sp, suppress=True)
        if name == "noise-sweep":
            sp.add_argument("--axis", choices=("flux", "temperature", "power"), default=None)
        if name == "fit":
            sp.add_argument("--input", default=None, help="CSV trace to fit")
            sp.add_argument("--kind", choices=("lorentzian", "scurve", "tuning"), default=None)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load(args.config)
        if args.seed is not None:
            cfg["run"]["seed"] = args.seed
        if args.jobs is not None:
            if args.jobs < 0:
                raise ConfigError("--jobs must be >= 0")
            cfg["run"]["jobs"] = args.jobs
        if args.out is not None:
            cfg["run"]["out"] = args.out
        exp = Experiment(cfg)
        if args.dry_run:
            print(f"kerrsim {args.command}: configuration ok")
            return EXIT_OK
        writer = Writer(cfg["run"]["out"], args.command, int(cfg["run"]["seed"]),
                        not args.no_header_timestamp)
        COMMANDS[args.command](exp, writer, args)
        for path in writer.written:
            print(path)
        return EXIT_OK
    except ConfigError as exc:
        print(f"kerrsim: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"kerrsim: I/O error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"kerrsim: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
