import math

import numpy as np
import pytest
from dataclasses import replace
from hypothesis import given, settings, strategies as st

from kerrsim.circuit import (
    CircuitParams,
    array_inductance,
    beta,
    calibrate,
    critical_photon_number,
    josephson_inductance,
    kerr_coefficients,
    mode_frequency,
    reduce_flux,
)
from kerrsim.constants import PHI0, R_K
from kerrsim.errors import (
    ConfigError,
    DivergentInductance,
    KerrBoundViolation,
    NonpositiveKerr,
)

finite_flux = st.floats(-50, 50, allow_nan=False).filter(lambda f: abs(math.cos(math.pi * f)) > 1e-3)


def test_josephson_inductance_zero_flux():
    # Independent evaluation of Phi0 / (2 pi Ic).
    expected = 2.067833848e-15 / (2 * math.pi * 6.72e-6)
    assert josephson_inductance(6.72e-6, 0.0) == pytest.approx(expected, rel=1e-9)
    assert josephson_inductance(6.72e-6, 0.0) == pytest.approx(49.0e-12, abs=0.05e-12)


def test_josephson_inductance_divergent_and_periodic():
    with pytest.raises(DivergentInductance):
        josephson_inductance(6.72e-6, 0.5)
    assert josephson_inductance(6.72e-6, 1.0) == josephson_inductance(6.72e-6, 0.0)


@given(finite_flux)
def test_josephson_inductance_bounds_and_symmetry(phi):
    lj = josephson_inductance(6.72e-6, phi)
    assert lj >= PHI0 / (2 * math.pi * 6.72e-6) * (1 - 1e-12)
    assert lj == pytest.approx(josephson_inductance(6.72e-6, -phi), rel=1e-12)
    assert lj == pytest.approx(josephson_inductance(6.72e-6, 1 - phi), rel=1e-9)


def test_reduce_flux():
    assert reduce_flux(1.25) == pytest.approx(0.25)
    assert reduce_flux(-0.3) == pytest.approx(0.3)
    assert reduce_flux(0.7) == pytest.approx(0.3)


def test_beta_reference_value(params):
    assert beta(params, 0.0) == pytest.approx(0.0254, rel=1e-9)
    # L_wg = L_array (1 - beta) / beta
    assert params.l_wg == pytest.approx(params.l_array0 * (1 - 0.0254) / 0.0254, rel=1e-9)
    assert params.l_wg == pytest.approx(13.1e-9, rel=0.01)


def test_beta_toward_half_flux(params):
    assert beta(params, 0.5 - 1e-5) > 0.99
    bs = [beta(params, f) for f in np.linspace(0, 0.49, 50)]
    assert np.all(np.diff(bs) > 0)


def test_beta_doubled_ic(params):
    p2 = replace(params, i_c=2 * params.i_c)
    la = array_inductance(p2, 0.0)
    assert beta(p2, 0.0) == pytest.approx(la / (la + p2.l_wg), rel=1e-12)
    assert beta(p2, 0.0) == pytest.approx(beta(params, 0.0) / 2, rel=0.03)


def test_params_validation(params):
    with pytest.raises(ConfigError):
        replace(params, n_squids=0)
    with pytest.raises(ConfigError):
        replace(params, i_c=-1.0)
    with pytest.raises(ConfigError):
        # beta(0) must stay below 0.1
        replace(params, i_c=params.i_c / 10)


def test_mode3_calibrated(params):
    assert mode_frequency(params, 3, 0.0) == pytest.approx(5.32e9, rel=1e-12)


def test_even_modes_flat(params):
    for n in (2, 4, 6):
        vals = {mode_frequency(params, n, f) for f in np.linspace(0, 0.49, 20)}
        assert vals == {n * params.nu_fundamental_bare}


@settings(max_examples=60, deadline=None)
@given(finite_flux, st.sampled_from([1, 2, 3, 5]))
def test_mode_frequency_periodic(params, phi, n):
    f0 = mode_frequency(params, n, phi)
    assert f0 == pytest.approx(mode_frequency(params, n, phi + 1), rel=1e-9)
    assert f0 == pytest.approx(mode_frequency(params, n, -phi), rel=1e-9)


def test_mode3_monotone(params):
    nus = [mode_frequency(params, 3, f) for f in np.linspace(0, 0.499, 200)]
    assert np.all(np.diff(nus) <= 0)


def test_large_ic_limit(params):
    p = replace(params, i_c=1e6)
    for n in (1, 3, 5, 7):
        assert mode_frequency(p, n, 0.0) == pytest.approx(n * p.nu_fundamental_bare, rel=1e-6)
    s = kerr_coefficients(p, 0.0, (1, 3, 5), with_slopes=False)
    assert np.all(np.abs(s.self_kerr) < 1e-6)
    assert np.all(np.abs(s.cross_kerr) < 1e-6)


def test_odd_mode_resonance_condition(params):
    # cot(k l/2) = omega L_array / (2 Z0): check directly with l/v from the bare fundamental.
    for n in (1, 3, 5, 7, 9):
        nu = mode_frequency(params, n, 0.1)
        x = math.pi * nu / (2 * params.nu_fundamental_bare)
        lhs = math.cos(x) / math.sin(x)
        rhs = 2 * math.pi * nu * array_inductance(params, 0.1) / (2 * params.z0)
        assert lhs == pytest.approx(rhs, rel=1e-9)
        assert (n - 1) * math.pi / 2 < x < n * math.pi / 2


def test_kerr_coefficients_structure(spectrum):
    K3, nu3 = spectrum.kerr(3), spectrum.nu(3)
    assert np.allclose(spectrum.cross_kerr, spectrum.cross_kerr.T, rtol=0, atol=0)
    for n in (2, 4, 6, 8):
        assert spectrum.kerr(n) == 0
        assert all(spectrum.cross(n, m) == 0 for m in spectrum.modes)
    for n in (1, 5, 7, 9):
        assert abs(spectrum.cross(n, 3) / spectrum.nu(n) - K3 / nu3) < 1e-12
    assert K3 / nu3 <= 2 * math.pi * 47.86 / R_K


def test_kerr_values(spectrum):
    # Direct evaluation with beta, N, nu_3, Ic gives ~780 Hz; the reported 940 Hz is within 25%.
    K3 = spectrum.kerr(3)
    h = 6.62607015e-34
    e_j = PHI0 * 6.72e-6 / (2 * math.pi)
    assert K3 == pytest.approx(0.0254 ** 2 / 7 * h * 5.32e9 ** 2 / e_j, rel=1e-9)
    assert abs(K3 - 940) / 940 < 0.25
    lam13 = spectrum.nu(1) * K3 / spectrum.nu(3)
    assert spectrum.cross(1, 3) == pytest.approx(lam13, rel=1e-12)
    assert spectrum.nu(1) == pytest.approx(1.77e9, rel=0.01)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 20), st.floats(1e-6, 50e-6), st.floats(0.002, 0.09),
       st.floats(3e9, 8e9), st.floats(0, 0.45))
def test_kerr_bound_holds(n, ic, b0, nu3, phi):
    try:
        p = calibrate(n, ic, nu3, b0)
    except ConfigError:
        return
    try:
        s = kerr_coefficients(p, phi, (3,), with_slopes=False)
    except KerrBoundViolation:
        return
    assert s.kerr(3) / s.nu(3) <= 2 * math.pi * p.z0 / R_K


def test_kerr_bound_violation():
    # Single SQUID with large participation once flux-tuned towards half a quantum.
    p = calibrate(1, 43.2e-6, 3e9, 0.078)
    kerr_coefficients(p, 0.0, (3,), with_slopes=False)
    with pytest.raises(KerrBoundViolation):
        kerr_coefficients(p, 0.4375, (3,), with_slopes=False)


def test_critical_photon_number():
    assert critical_photon_number(212e3, 940) == pytest.approx(260.4, abs=0.05)
    assert critical_photon_number(212e3, 470) == pytest.approx(520.8, abs=0.1)
    assert critical_photon_number(424e3, 940) == pytest.approx(2 * critical_photon_number(212e3, 940))
    with pytest.raises(NonpositiveKerr):
        critical_photon_number(212e3, 0.0)


def test_linewidth_constant_q(spectrum):
    for n in (1, 5, 7, 9):
        assert spectrum.gamma(n) / spectrum.nu(n) == pytest.approx(212e3 / 5.32e9, rel=1e-12)
