import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import brentq

from bqpm import phasematch as pm
from bqpm.dispersion import KTP_Y, KTP_Z, group_index, refractive_index
from bqpm.errors import InputError, RangeError
from bqpm.phasematch import REFERENCE_PUMP_UM, PmType

C = pm.C_UM_PER_S


def test_grating_vector():
    assert pm.grating_vector(2.95, 7) == pytest.approx(2 * math.pi * 7 / 2.95, rel=1e-15)
    assert pm.grating_vector(2.95, 7) == pytest.approx(14.90925, abs=1e-5)
    assert pm.grating_vector(1.5, 1) == pytest.approx(2 * pm.grating_vector(3.0, 1))
    with pytest.raises(InputError):
        pm.grating_vector(0, 3)
    with pytest.raises(InputError):
        pm.grating_vector(2.95, 0)


def test_crystal_invariants():
    with pytest.raises(InputError):
        pm.CrystalSpec(0, 2.95, 7, 19)
    with pytest.raises(InputError):
        pm.CrystalSpec(4.5, 2.95, 0, 19)
    with pytest.raises(InputError):
        pm.CrystalSpec(4.5, 2.95, 7, 19, ratio_r=14.83, d33=15.0, d32=5.0)
    pm.CrystalSpec(4.5, 2.95, 7, 19, ratio_r=14.83, d33=15.4, d32=4.0)


def test_effective_nonlinearity():
    assert pm.effective_nonlinearity(15.0, 7) == pytest.approx(2 * 15.0 / (7 * math.pi))
    assert pm.pair_probability_ratio(15.4, 4.0, order=7) == pytest.approx((15.4 / 4.0) ** 2)


def test_degenerate_cancellation(reference_crystal):
    lp = REFERENCE_PUMP_UM
    k_pz = 2 * math.pi * refractive_index(KTP_Z, lp, 19.0) / lp
    km = pm.grating_vector(2.95, 7)
    for t in PmType:
        assert pm.mismatch(reference_crystal, t, lp, 2 * lp) == pytest.approx(k_pz - km, abs=1e-13)


def test_reference_period_nearly_matched(reference_crystal):
    dk = pm.mismatch(reference_crystal, PmType.TYPE0, 0.77833, 1.55666)
    assert abs(dk) < 0.01 * pm.grating_vector(2.95, 7)


@pytest.mark.parametrize("pm_type", list(PmType))
def test_mismatch_term_by_term(reference_crystal, pm_type):
    lp, ls = 0.77833, 1.6
    li = 1 / (1 / lp - 1 / ls)
    models = {"Y": KTP_Y, "Z": KTP_Z}
    ap, as_, ai = (a.value for a in pm_type.axes)
    t = reference_crystal.temperature_c

    def k(axis, wl):
        return 2 * math.pi * refractive_index(models[axis], wl, t) / wl

    expected = k(ap, lp) - k(as_, ls) + k(ai, li) - pm.grating_vector(2.95, 7)
    got = pm.mismatch(reference_crystal, pm_type, lp, ls)
    assert got == pytest.approx(expected, rel=1e-12)


def test_mismatch_errors(reference_crystal):
    with pytest.raises(InputError):
        pm.mismatch(reference_crystal, PmType.TYPE0, 0.77833, 0.7)
    with pytest.raises(RangeError):
        # idler near 4.3 um, beyond 3.54 um
        pm.mismatch(reference_crystal, PmType.TYPE0, 0.77833, 0.95)


def test_solve_poling_period():
    period = pm.solve_poling_period(0.77833, 7, 19.0)
    assert period == pytest.approx(2.95, rel=0.01)
    assert pm.solve_poling_period(0.77833, 14, 19.0) / period == 2.0


@settings(max_examples=20, deadline=None)
@given(st.floats(0.7, 0.9), st.integers(1, 9), st.floats(0, 100))
def test_period_round_trip(lp, m, t):
    period = pm.solve_poling_period(lp, m, t)
    crystal = pm.CrystalSpec(4.5, period, m, t)
    for pm_type in PmType:
        assert abs(pm.mismatch(crystal, pm_type, lp, 2 * lp)) < 1e-10


@settings(max_examples=30, deadline=None)
@given(st.floats(0.7, 0.9), st.floats(0, 100))
def test_type_agreement_at_degeneracy(lp, t):
    crystal = pm.CrystalSpec(4.5, 2.95, 7, t)
    d0 = pm.mismatch(crystal, PmType.TYPE0, lp, 2 * lp)
    d1 = pm.mismatch(crystal, PmType.TYPE1, lp, 2 * lp)
    assert abs(d0 - d1) < 1e-12


def test_signal_roots(reference_crystal):
    r0 = pm.solve_signal_wavelength(reference_crystal, PmType.TYPE0, REFERENCE_PUMP_UM)
    r1 = pm.solve_signal_wavelength(reference_crystal, PmType.TYPE1, REFERENCE_PUMP_UM)
    assert len(r0) == 1 and len(r1) == 1
    assert r0[0] == pytest.approx(1.5566, rel=0.005)
    assert r1[0] == pytest.approx(r0[0], rel=0.005)
    for t, r in ((PmType.TYPE0, r0[0]), (PmType.TYPE1, r1[0])):
        assert abs(pm.mismatch(reference_crystal, t, REFERENCE_PUMP_UM, r)) < 1e-9


def test_signal_roots_against_grid_scan(reference_crystal):
    # independent oracle: dense scan + scipy root polish
    for t in PmType:
        grid = np.linspace(1.4, 1.7, 301)
        vals = [pm.mismatch(reference_crystal, t, REFERENCE_PUMP_UM, g) for g in grid]
        i = next(j for j in range(300) if vals[j] * vals[j + 1] < 0)
        root = brentq(lambda wl: pm.mismatch(reference_crystal, t, REFERENCE_PUMP_UM, wl), grid[i], grid[i + 1], xtol=1e-14)
        # |dk| < 1e-9 rad/um with a slope of ~10 rad/um per um bounds the error near 1e-10 um
        assert pm.solve_signal_wavelength(reference_crystal, t, REFERENCE_PUMP_UM)[0] == pytest.approx(root, abs=1e-9)


def test_signal_roots_empty_interval(reference_crystal):
    assert pm.solve_signal_wavelength(reference_crystal, PmType.TYPE0, REFERENCE_PUMP_UM, interval=(1.7, 2.0)) == []


def test_degenerate_temperature(reference_crystal):
    t = pm.solve_degenerate_temperature(reference_crystal, REFERENCE_PUMP_UM)
    crystal = replace(reference_crystal, temperature_c=t)
    assert abs(pm.mismatch(crystal, PmType.TYPE0, REFERENCE_PUMP_UM, 2 * REFERENCE_PUMP_UM)) < 1e-7
    far = replace(reference_crystal, poling_period_um=2.5)
    assert pm.solve_degenerate_temperature(far, REFERENCE_PUMP_UM) is None


def test_spectral_amplitude_peak(matched):
    assert pm.spectral_amplitude(matched, PmType.TYPE0, REFERENCE_PUMP_UM, 0.0) == pytest.approx(1.0, abs=1e-6)
    assert pm.spectral_peak(matched, PmType.TYPE0, REFERENCE_PUMP_UM) == pytest.approx(0.0, abs=1e3)


@pytest.mark.parametrize("pm_type", list(PmType))
def test_spectral_symmetry(matched, pm_type):
    for nu in np.linspace(0, 50e9, 11):
        w = 2 * math.pi * nu
        f_plus = pm.spectral_amplitude(matched, pm_type, REFERENCE_PUMP_UM, w)
        f_minus = pm.spectral_amplitude(matched, pm_type, REFERENCE_PUMP_UM, -w)
        assert abs(f_plus - f_minus) < 1e-3


def test_first_zero_matches_group_velocity_expansion(matched):
    ng = 2 * group_index(KTP_Z, 2 * REFERENCE_PUMP_UM, 19.0)
    nu_zero = C / (matched.length_um * ng)
    assert nu_zero / 1e9 == pytest.approx(18.0, rel=0.01)

    def f(nu):
        return pm.spectral_amplitude(matched, PmType.TYPE0, REFERENCE_PUMP_UM, 2 * math.pi * nu)

    exact = brentq(f, 0.8 * nu_zero, 1.2 * nu_zero)
    assert exact == pytest.approx(nu_zero, rel=1e-3)


@settings(max_examples=50, deadline=None)
@given(st.floats(-500e9, 500e9))
def test_sinc_bound(nu):
    crystal = pm.matched_crystal(pm.REFERENCE_CRYSTAL, REFERENCE_PUMP_UM)
    assert abs(pm.spectral_amplitude(crystal, PmType.TYPE0, REFERENCE_PUMP_UM, 2 * math.pi * nu)) <= 1


def test_detuning_out_of_range(matched):
    with pytest.raises(RangeError):
        # pushes the idler beyond 3.54 um
        pm.spectral_amplitude(matched, PmType.TYPE0, REFERENCE_PUMP_UM, 2 * math.pi * 110e12)


def test_sinc_half_max_constant():
    x = brentq(lambda x: (math.sin(x) / x) ** 2 - 0.5, 1.0, 2.0, xtol=1e-15)
    assert pm.SINC2_HALF_MAX_X == pytest.approx(x, abs=1e-12)
    assert 4 * x / (2 * math.pi) == pytest.approx(0.8859, abs=1e-4)


@pytest.mark.parametrize("pm_type", list(PmType))
def test_bandwidth(matched, pm_type):
    fwhm = pm.bandwidth_fwhm(matched, pm_type, REFERENCE_PUMP_UM)
    assert fwhm == pytest.approx(15.7, rel=0.15)
    # oracle: half max of sinc^2 under a first-order group-velocity expansion
    _, as_, ai = pm_type.axes
    models = {"Y": KTP_Y, "Z": KTP_Z}
    ng = sum(group_index(models[a.value], 2 * REFERENCE_PUMP_UM, 19.0) for a in (as_, ai))
    closed = 0.8859 * C / (matched.length_um * ng) / 1e9
    assert fwhm == pytest.approx(closed, rel=0.02)


def test_bandwidth_scales_inversely_with_length(matched):
    long = replace(matched, length_mm=2 * matched.length_mm)
    ratio = pm.bandwidth_fwhm(matched, PmType.TYPE0, REFERENCE_PUMP_UM) / pm.bandwidth_fwhm(long, PmType.TYPE0, REFERENCE_PUMP_UM)
    assert ratio == pytest.approx(2.0, rel=0.01)


def test_bandwidth_independent_of_order():
    c1 = pm.matched_crystal(pm.CrystalSpec(4.5, 1.0, 1, 19.0), REFERENCE_PUMP_UM)
    c7 = pm.matched_crystal(pm.CrystalSpec(4.5, 1.0, 7, 19.0), REFERENCE_PUMP_UM)
    b1 = pm.bandwidth_fwhm(c1, PmType.TYPE0, REFERENCE_PUMP_UM)
    b7 = pm.bandwidth_fwhm(c7, PmType.TYPE0, REFERENCE_PUMP_UM)
    assert b1 == pytest.approx(b7, rel=1e-3)


def test_bandwidth_of_unmatched_crystal_tracks_peak(reference_crystal, matched):
    # the 2.95 um crystal peaks off degeneracy but has the same width
    assert abs(pm.spectral_peak(reference_crystal, PmType.TYPE0, REFERENCE_PUMP_UM)) > 2 * math.pi * 1e9
    b = pm.bandwidth_fwhm(reference_crystal, PmType.TYPE0, REFERENCE_PUMP_UM)
    assert b == pytest.approx(pm.bandwidth_fwhm(matched, PmType.TYPE0, REFERENCE_PUMP_UM), rel=1e-3)
