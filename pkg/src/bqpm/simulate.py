"""Measurement predictions and synthetic count data."""

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from . import phasematch
from .biphoton import ArmSetting, MeasurementSetting, TwoPhotonState, coincidence_probability
from .errors import InputError

C_M_PER_S = 2.99792458e8

# HWP angle (deg) on the heralding arm selecting each basis state.
HERALD_HWP = {"H": 0.0, "V": 45.0, "A": -22.5, "D": 22.5}


@dataclass(frozen=True)
class DetectionChain:
    eta_signal: float
    eta_idler: float
    coincidence_window_ns: float = 1.6
    include_accidentals: bool = False

    def __post_init__(self):
        for name in ("eta_signal", "eta_idler"):
            eta = getattr(self, name)
            if not 0 < eta <= 1:
                raise InputError(f"{name} must be in (0, 1], got {eta}")
        if not self.coincidence_window_ns > 0:
            raise InputError(f"coincidence window must be > 0 ns, got {self.coincidence_window_ns}")


REFERENCE_CHAIN = DetectionChain(eta_signal=0.22, eta_idler=0.12, coincidence_window_ns=1.6)


@dataclass(frozen=True)
class CountRecord:
    """Counts for one setting. Expected-value records may carry fractional counts."""
    setting: MeasurementSetting
    singles_signal: float
    singles_idler: float
    coincidences: float
    duration: float  # s

    def __post_init__(self):
        for name in ("singles_signal", "singles_idler", "coincidences"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise InputError(f"{name} must be a finite count >= 0, got {v}")
        if not self.duration > 0:
            raise InputError(f"duration must be > 0 s, got {self.duration}")

    @property
    def label(self):
        return self.setting.label


@dataclass(frozen=True)
class RateEstimate:
    generated_pairs: float
    singles_signal: float
    singles_idler: float
    true_coincidences: float
    accidental_coincidences: float


def interference_closed_form(c1, c2, theta):
    """|c1 cos(theta) / sqrt2 + c2 sin(theta) / sqrt2|^2 for the D-heralded measurement.

    The analysis HWP sits at theta / 2.
    """
    if abs(abs(c1) ** 2 + abs(c2) ** 2 - 1) > 1e-9:
        raise InputError(f"coefficients not normalized: |c1|^2 + |c2|^2 = {abs(c1) ** 2 + abs(c2) ** 2}")
    theta = np.asarray(theta, dtype=float)
    return np.abs((c1 * np.cos(theta) + c2 * np.sin(theta)) / math.sqrt(2)) ** 2


def interference_setting(herald, theta):
    try:
        h = HERALD_HWP[herald]
    except KeyError:
        raise InputError(f"herald basis must be one of {sorted(HERALD_HWP)}, got {herald!r}") from None
    return MeasurementSetting(
        signal=ArmSetting(hwp=h),
        idler=ArmSetting(hwp=math.degrees(theta) / 2),
        label=f"{herald}@{math.degrees(theta):.6g}",
        x=float(theta),
    )


def interference_curve(state, herald, thetas):
    """Coincidence probability vs analysis angle theta (radians) for one heralding basis.

    The herald plate sits on the signal arm and the analysis HWP at theta / 2
    on the idler arm, each followed by an H polarizer.
    """
    return np.array([
        coincidence_probability(state, s.signal, s.idler)
        for s in (interference_setting(herald, t) for t in np.atleast_1d(thetas))
    ])


def hom_curve(crystal, pm_type, pump_wavelength, overlap_visibility, delays_ps, models=None):
    """Coincidence probability 1/2 [1 - V0 D(tau)] at each delay (ps).

    D is the cosine transform of the normalized phase-matching intensity,
    taken over +-10 sinc zeros around the spectral peak.
    """
    delays = np.atleast_1d(np.asarray(delays_ps, dtype=float))
    if delays.size == 0:
        raise InputError("delay grid is empty")
    if not 0 <= overlap_visibility <= 1:
        raise InputError(f"overlap visibility must be in [0, 1], got {overlap_visibility}")
    k1 = phasematch.inverse_group_velocity_sum(crystal, pm_type, pump_wavelength, models)
    unit = 2 * math.pi / (crystal.length_um * k1)  # rad/s per sinc zero
    x0 = phasematch.spectral_peak(crystal, pm_type, pump_wavelength, models) / unit
    lo, hi = x0 - 10, x0 + 10

    def spectrum(x):
        return phasematch.spectral_amplitude(crystal, pm_type, pump_wavelength, x * unit, models) ** 2

    opts = dict(epsrel=1e-6, epsabs=1e-12, limit=500)
    norm = integrate.quad(spectrum, lo, hi, points=[x0], **opts)[0]
    cache = {}
    out = np.empty_like(delays)
    for j, tau in enumerate(delays):
        key = abs(tau)
        if key not in cache:
            w = 2 * unit * key * 1e-12
            if w == 0:
                cache[key] = 1.0
            else:
                cache[key] = integrate.quad(spectrum, lo, hi, weight="cos", wvar=w, **opts)[0] / norm
        out[j] = 0.5 * (1 - overlap_visibility * cache[key])
    return out


def dip_visibility(values, baseline=0.5):
    return (baseline - float(np.min(values))) / baseline


def _marginals(state, setting):
    """(P_signal, P_idler, P_coincidence) for one setting, including any success probability."""
    if isinstance(state, TwoPhotonState):
        rho = np.outer(state.amplitudes, state.amplitudes.conj()) * state.success_probability
    else:
        rho = np.asarray(state, dtype=complex)
    r = rho.reshape(2, 2, 2, 2)
    rho_s = np.einsum("ijkj->ik", r)
    rho_i = np.einsum("ijil->jl", r)
    vs, vi = setting.signal.vector(), setting.idler.vector()
    ps = float(np.real(vs.conj() @ rho_s @ vs))
    pi = float(np.real(vi.conj() @ rho_i @ vi))
    pc = coincidence_probability(rho, setting.signal, setting.idler)
    return ps, pi, pc


def expected_means(state, setting, pair_rate, chain, duration):
    """Mean (singles_signal, singles_idler, coincidences) over ``duration`` seconds."""
    if pair_rate < 0:
        raise InputError(f"pair rate must be >= 0, got {pair_rate}")
    if not duration > 0:
        raise InputError(f"duration must be > 0 s, got {duration}")
    ps, pi, pc = _marginals(state, setting)
    rs = pair_rate * chain.eta_signal * ps
    ri = pair_rate * chain.eta_idler * pi
    rc = pair_rate * chain.eta_signal * chain.eta_idler * pc
    if chain.include_accidentals:
        rc += rs * ri * chain.coincidence_window_ns * 1e-9
    return rs * duration, ri * duration, rc * duration


def expected_counts(state, settings, pair_rate, chain, duration):
    """Noise-free records holding the mean counts."""
    return [CountRecord(s, *expected_means(state, s, pair_rate, chain, duration), duration)
            for s in settings]


def setting_rng(seed, index):
    """Generator for one setting: numpy SeedSequence over the entropy pair (seed, index)."""
    return np.random.default_rng([int(seed), int(index)])


def simulate_counts(state, settings, pair_rate, chain, duration, seed):
    """Poisson-sampled records, one per setting, reproducible for a fixed seed.

    Each setting draws from its own generator seeded by (seed, index), so the
    result does not depend on evaluation order.
    """
    records = []
    for i, s in enumerate(settings):
        mu_s, mu_i, mu_c = expected_means(state, s, pair_rate, chain, duration)
        rng = setting_rng(seed, i)
        ns, ni, nc = (int(n) for n in rng.poisson([mu_s, mu_i, mu_c]))
        records.append(CountRecord(s, ns, ni, nc, duration))
    return records


def rate_estimate(spectral_brightness, bandwidth_ghz, center_wavelength_nm, pump_power_mw, chain):
    """Pair, singles and coincidence rates (1/s) from a spectral brightness in 1/(s mW nm)."""
    for name, v in (("spectral brightness", spectral_brightness), ("bandwidth", bandwidth_ghz),
                    ("center wavelength", center_wavelength_nm)):
        if not v > 0:
            raise InputError(f"{name} must be > 0, got {v}")
    if pump_power_mw < 0:
        raise InputError(f"pump power must be >= 0 mW, got {pump_power_mw}")
    lam = center_wavelength_nm * 1e-9
    dlam_nm = lam ** 2 * bandwidth_ghz * 1e9 / C_M_PER_S * 1e9
    generated = spectral_brightness * dlam_nm * pump_power_mw
    ss = generated * chain.eta_signal
    si = generated * chain.eta_idler
    return RateEstimate(
        generated_pairs=generated,
        singles_signal=ss,
        singles_idler=si,
        true_coincidences=generated * chain.eta_signal * chain.eta_idler,
        accidental_coincidences=ss * si * chain.coincidence_window_ns * 1e-9,
    )


def _brightness_scale(beam_waist_um, crystal_length_mm, order, ref_waist_um, ref_length_mm, ref_order):
    for name, v in (("beam waist", beam_waist_um), ("crystal length", crystal_length_mm), ("order", order)):
        if not v > 0:
            raise InputError(f"{name} must be > 0, got {v}")
    area_ratio = (beam_waist_um / ref_waist_um) ** 2
    return area_ratio * (ref_length_mm / crystal_length_mm) ** 1.5 * (order / ref_order) ** 2


def normalized_brightness(brightness, beam_waist_um, crystal_length_mm, order,
                          ref_waist_um=50.0, ref_length_mm=10.0, ref_order=1):
    """Rescale a spectral brightness to a 50 um waist, 10 mm crystal and first-order QPM.

    Brightness goes as 1/area, L^(3/2) and 1/m^2.
    """
    if not brightness > 0:
        raise InputError(f"brightness must be > 0, got {brightness}")
    return brightness * _brightness_scale(beam_waist_um, crystal_length_mm, order,
                                          ref_waist_um, ref_length_mm, ref_order)


def denormalize_brightness(normalized, beam_waist_um, crystal_length_mm, order,
                           ref_waist_um=50.0, ref_length_mm=10.0, ref_order=1):
    return normalized / _brightness_scale(beam_waist_um, crystal_length_mm, order,
                                          ref_waist_um, ref_length_mm, ref_order)
