"""Experiment configuration: TOML file merged onto documented defaults.

Unknown sections or keys are rejected.  ``None`` defaults mean "derive":
device lines without ``z0_ohm``/``nu1_bare_GHz`` are calibrated to
``calibrate_nu3_GHz`` and ``calibrate_beta``; a missing ``detuning_kHz``
uses the detuning where the width law gives ``target_width_ppm``; a missing
``photon_flux`` puts the end of the low branch at that detuning.
"""

from __future__ import annotations

import copy
import math
import sys
from dataclasses import dataclass
from functools import cached_property
from typing import Any, Dict, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .circuit import CircuitParams, ModeSpectrum, calibrate, kerr_coefficients
from .dynamics import (
    SwitchingModel,
    ThermalEnvironment,
    drive_for_spinodal,
    reference_detuning,
)
from .errors import ConfigError
from .measurement import PulseSpec
from .noise import NoiseSpec
from .parallel import available_workers

DEFAULTS: Dict[str, Dict[str, Any]] = {
    "device": {
        "n_squids": 7,
        "i_c_uA": 6.72,
        "z0_ohm": None,
        "nu1_bare_GHz": None,
        "c_end_pF": 7.0,
        "gamma_per_mode_kHz": {"3": 212.0},
        "areal_dispersion": 0.04,
        "calibrate_nu3_GHz": 5.32,
        "calibrate_beta": 0.0254,
    },
    "operating_point": {
        "flux": 0.0,
        "temperature_mK": 8.0,
        "mode": 3,
        "detuning_kHz": None,
        "target_width_ppm": 0.5,
        "photon_flux": None,
        "measured_width_kHz": None,
        "ext_fraction": 0.5,
    },
    "pulse": {
        "t_rise_over_gamma": 5.0,
        "t_measure_over_gamma": 20.0,
        "t_latch_over_gamma": 100.0,
        "latch_power_fraction": 0.8,
        "repetition_rate_kHz": 1.0,
        "detection_noise_photons": 20.0,
        "sample_interval_over_gamma": 1.0,
    },
    "noise": {
        "sigma_flux_uPhi0": 0.0,
        "drive_amp_jitter": 0.0,
        "drive_freq_jitter_Hz": 0.0,
        "excess_freq_noise_Hz": 0.0,
        "resample_policy": "per_curve",
    },
    "dynamics": {
        "dt_over_gamma": 0.02,
        "detection": "trace",
    },
    "run": {
        "seed": 0,
        "jobs": 0,
        "out": "out",
        "engine": "analytic",
    },
    "tune": {
        "flux_min": 0.0,
        "flux_max": 0.45,
        "n_flux": 46,
        "modes": [2, 3, 4],
    },
    "scurve": {
        "n_curves": 50,
        "n_pulses": 1000,
        "n_points": 25,
        "grid_min_kHz": None,
        "grid_max_kHz": None,
        "pilot_pulses": 400,
    },
    "spectroscopy": {
        "modes": [1, 5, 7, 9],
        "n_pulses": 1000,
        "n_points": 61,
        "span_linewidths": 3.0,
        "probe_delta_p": 0.5,
        "probe_power": None,
        "bias_pulses": 4000,
    },
    "noise_sweep": {
        "axis": "flux",
        "flux_values": [0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3],
        "temperatures_mK": [8.0, 50.0, 100.0, 200.0, 300.0, 400.0],
        "power_factors": [1.5, 2.5, 4.0, 6.0, 10.0, 15.0],
        "engine": "analytic",
        "n_curves": 10,
        "n_pulses": 1000,
        "n_points": 25,
    },
    "fit": {
        "input": None,
        "kind": "lorentzian",
        "attempts": 20.0,
    },
}

CHOICES = {
    ("noise", "resample_policy"): ("per_pulse", "per_curve"),
    ("dynamics", "detection"): ("trace", "dwell"),
    ("run", "engine"): ("analytic", "sde"),
    ("noise_sweep", "axis"): ("flux", "temperature", "power"),
    ("noise_sweep", "engine"): ("analytic", "sde", "none"),
    ("fit", "kind"): ("lorentzian", "scurve", "tuning"),
}


def _check_type(section, key, value, default):
    where = f"[{section}] {key}"
    if (section, key) in CHOICES and value not in CHOICES[(section, key)]:
        raise ConfigError(f"{where} must be one of {CHOICES[(section, key)]}, got {value!r}")
    if default is None or value is None:
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be a boolean")
    elif isinstance(default, int) and not isinstance(default, bool):
        if not isinstance(value, int) or isinstance(value, bool):
            raise ConfigError(f"{where} must be an integer")
    elif isinstance(default, float):
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ConfigError(f"{where} must be a number")
        value = float(value)
    elif isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where} must be a string")
    elif isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"{where} must be a list")
    elif isinstance(default, dict):
        if not isinstance(value, dict):
            raise ConfigError(f"{where} must be a table")
    return value


def merge(user: Dict[str, Any]) -> Dict[str, Dict[str, Any]]:
    cfg = copy.deepcopy(DEFAULTS)
    for section, body in user.items():
        if section not in cfg:
            raise ConfigError(f"unknown config section [{section}]")
        if not isinstance(body, dict):
            raise ConfigError(f"[{section}] must be a table")
        for key, value in body.items():
            if key not in cfg[section]:
                raise ConfigError(f"unknown key '{key}' in [{section}]")
            cfg[section][key] = _check_type(section, key, value, DEFAULTS[section][key])
    return cfg


def load(path: Optional[str]) -> Dict[str, Dict[str, Any]]:
    if path is None:
        return merge({})
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    return merge(data)


def loads(text: str) -> Dict[str, Dict[str, Any]]:
    try:
        return merge(tomllib.loads(text))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None


@dataclass
class Experiment:
    """Objects derived from a merged configuration."""

    cfg: Dict[str, Dict[str, Any]]

    def __post_init__(self):
        # Build the derived objects eagerly so configuration errors surface early.
        self.params
        self.spectrum(self.flux)
        self.pulse
        self.noise

    @property
    def dev(self):
        return self.cfg["device"]

    @property
    def op(self):
        return self.cfg["operating_point"]

    @property
    def mode(self) -> int:
        return int(self.op["mode"])

    @property
    def flux(self) -> float:
        return float(self.op["flux"])

    @cached_property
    def params(self) -> CircuitParams:
        d = self.dev
        try:
            gammas = {int(k): float(v) * 1e3 for k, v in d["gamma_per_mode_kHz"].items()}
        except (TypeError, ValueError):
            raise ConfigError("[device] gamma_per_mode_kHz keys must be mode numbers") from None
        kw = dict(c_end=d["c_end_pF"] * 1e-12, areal_dispersion=d["areal_dispersion"],
                  linewidths=gammas)
        n, ic = d["n_squids"], d["i_c_uA"] * 1e-6
        if (d["z0_ohm"] is None) != (d["nu1_bare_GHz"] is None):
            raise ConfigError("[device] give both z0_ohm and nu1_bare_GHz, or neither")
        if d["z0_ohm"] is None:
            return calibrate(n, ic, d["calibrate_nu3_GHz"] * 1e9, d["calibrate_beta"], **kw)
        return CircuitParams(n_squids=n, i_c=ic, nu_fundamental_bare=d["nu1_bare_GHz"] * 1e9,
                             z0=d["z0_ohm"], **kw)

    def spectrum(self, flux: Optional[float] = None) -> ModeSpectrum:
        flux = self.flux if flux is None else float(flux)
        cache = self.__dict__.setdefault("_spectra", {})
        if flux not in cache:
            modes = sorted(set(range(1, 10)) | {self.mode})
            cache[flux] = kerr_coefficients(self.params, flux, modes)
        return cache[flux]

    def env(self, temperature_mK: Optional[float] = None, nu: Optional[float] = None):
        t = self.op["temperature_mK"] if temperature_mK is None else temperature_mK
        nu = self.spectrum().nu(self.mode) if nu is None else nu
        return ThermalEnvironment(t * 1e-3, nu)

    def detuning(self, spectrum: Optional[ModeSpectrum] = None) -> float:
        if self.op["detuning_kHz"] is not None:
            return self.op["detuning_kHz"] * 1e3
        spectrum = spectrum or self.spectrum()
        env = self.env(nu=spectrum.nu(self.mode))
        return reference_detuning(spectrum, env, self.op["target_width_ppm"] * 1e-6, self.mode)

    def photon_flux(self, spectrum: Optional[ModeSpectrum] = None) -> float:
        if self.op["photon_flux"] is not None:
            return float(self.op["photon_flux"])
        spectrum = spectrum or self.spectrum()
        return drive_for_spinodal(spectrum, self.detuning(spectrum), self.mode,
                                  self.op["ext_fraction"])

    @property
    def target_width(self) -> Optional[float]:
        w = self.op["measured_width_kHz"]
        return None if w is None else w * 1e3

    def model(self, spectrum: Optional[ModeSpectrum] = None, env=None,
              photon_flux: Optional[float] = None, target_width: Optional[float] = None):
        spectrum = spectrum or self.spectrum()
        env = env or self.env(nu=spectrum.nu(self.mode))
        flux = self.photon_flux(spectrum) if photon_flux is None else photon_flux
        tw = self.target_width if target_width is None else target_width
        return SwitchingModel.calibrated(spectrum, env, flux, self.pulse_times(spectrum)[1],
                                         tw, mode=self.mode, ext_fraction=self.op["ext_fraction"])

    def pulse_times(self, spectrum: Optional[ModeSpectrum] = None):
        g = (spectrum or self.spectrum()).gamma(self.mode)
        p = self.cfg["pulse"]
        return (p["t_rise_over_gamma"] / g, p["t_measure_over_gamma"] / g,
                p["t_latch_over_gamma"] / g)

    def pulse_for(self, nu_d: float, photon_flux: float, spectrum=None) -> PulseSpec:
        spectrum = spectrum or self.spectrum()
        g = spectrum.gamma(self.mode)
        p = self.cfg["pulse"]
        pulse = PulseSpec.for_linewidth(
            g, nu_d, photon_flux, t_measure=p["t_measure_over_gamma"],
            t_latch=p["t_latch_over_gamma"], t_rise=p["t_rise_over_gamma"],
            sample_interval=p["sample_interval_over_gamma"],
            latch_power_fraction=p["latch_power_fraction"],
            repetition_rate=p["repetition_rate_kHz"] * 1e3,
            detection_noise_photons=p["detection_noise_photons"])
        pulse.validate(g)
        return pulse

    @cached_property
    def pulse(self) -> PulseSpec:
        spec = self.spectrum()
        flux = self.photon_flux(spec)
        return self.pulse_for(spec.nu(self.mode) + self.detuning(spec), flux, spec)

    @cached_property
    def noise(self) -> NoiseSpec:
        n = self.cfg["noise"]
        return NoiseSpec(sigma_flux=n["sigma_flux_uPhi0"] * 1e-6,
                         drive_amp_jitter=n["drive_amp_jitter"],
                         drive_freq_jitter=n["drive_freq_jitter_Hz"],
                         excess_freq_noise=n["excess_freq_noise_Hz"],
                         resample_policy=n["resample_policy"])

    @property
    def dt(self) -> float:
        return self.cfg["dynamics"]["dt_over_gamma"] / self.spectrum().gamma(self.mode)

    @property
    def jobs(self) -> int:
        j = int(self.cfg["run"]["jobs"])
        if j < 0:
            raise ConfigError("[run] jobs must be >= 0")
        return j if j > 0 else available_workers()
