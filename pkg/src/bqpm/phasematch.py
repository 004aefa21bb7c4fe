"""Backward quasi-phase matching in a periodically poled KTP crystal.

The signal co-propagates with the pump and the idler runs backwards, so the
mismatch along the propagation axis is

    dk = k_p - k_s + k_i - k_m,    k = 2 pi n / wl,    k_m = 2 pi m / period

At wavelength degeneracy (wl_s = wl_i = 2 wl_p) the signal and idler terms
cancel for both the type-0 (zzz) and type-I (z -> yy) processes, so a single
period phase-matches both at once.

Units: wavelengths and periods in um, crystal length in mm, wavevectors in
rad/um, detunings in rad/s, bandwidths in GHz.
"""

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

from . import dispersion
from .dispersion import Axis
from .errors import InputError, RangeError

C_UM_PER_S = 2.99792458e14

# sinc(x)**2 == 1/2
SINC2_HALF_MAX_X = 1.3915573782515103


class PmType(enum.Enum):
    TYPE0 = "type0"
    TYPE1 = "type1"

    @property
    def axes(self):
        """(pump, signal, idler) crystal axes."""
        if self is PmType.TYPE0:
            return (Axis.Z, Axis.Z, Axis.Z)
        return (Axis.Z, Axis.Y, Axis.Y)


@dataclass(frozen=True)
class CrystalSpec:
    length_mm: float
    poling_period_um: float
    qpm_order: int
    temperature_c: float
    ratio_r: float = 14.83
    d33: float | None = None  # pm/V
    d32: float | None = None  # pm/V
    aperture_mm: tuple | None = None

    def __post_init__(self):
        if not self.length_mm > 0:
            raise InputError(f"crystal length must be > 0 mm, got {self.length_mm}")
        if not self.poling_period_um > 0:
            raise InputError(f"poling period must be > 0 um, got {self.poling_period_um}")
        if int(self.qpm_order) != self.qpm_order or self.qpm_order < 1:
            raise InputError(f"QPM order must be an integer >= 1, got {self.qpm_order}")
        if not self.ratio_r > 0:
            raise InputError(f"ratio_r must be > 0, got {self.ratio_r}")
        if self.d33 is not None and self.d32 is not None:
            implied = (self.d33 / self.d32) ** 2
            if abs(self.ratio_r - implied) / self.ratio_r >= 0.05:
                raise InputError(
                    f"ratio_r={self.ratio_r} inconsistent with (d33/d32)^2={implied:.4g}"
                )

    @property
    def length_um(self):
        return self.length_mm * 1e3


REFERENCE_CRYSTAL = CrystalSpec(
    length_mm=4.5,
    poling_period_um=2.95,
    qpm_order=7,
    temperature_c=19.0,
    ratio_r=14.83,
    aperture_mm=(1.0, 2.0),
)
REFERENCE_PUMP_UM = 0.77833


def effective_nonlinearity(d, order):
    """Effective coefficient 2 d / (m pi) of an m-th order QPM grating."""
    if order < 1:
        raise InputError(f"QPM order must be >= 1, got {order}")
    return 2 * d / (order * math.pi)


def pair_probability_ratio(d33, d32, order=1):
    """Type-0 / type-I pair-generation ratio, proportional to d_eff squared.

    The order drops out, so this is simply (d33/d32)**2.
    """
    return (effective_nonlinearity(d33, order) / effective_nonlinearity(d32, order)) ** 2


def grating_vector(poling_period, order):
    if not (math.isfinite(poling_period) and poling_period > 0):
        raise InputError(f"poling period must be > 0, got {poling_period}")
    if order < 1:
        raise InputError(f"QPM order must be >= 1, got {order}")
    return 2 * math.pi * order / poling_period


def wavevector(model, wavelength, temperature):
    return 2 * math.pi * dispersion.refractive_index(model, wavelength, temperature) / wavelength


def idler_wavelength(pump_wavelength, signal_wavelength):
    if not signal_wavelength > pump_wavelength > 0:
        raise InputError(
            f"need signal wavelength > pump wavelength > 0, got {signal_wavelength}, {pump_wavelength}"
        )
    return 1.0 / (1.0 / pump_wavelength - 1.0 / signal_wavelength)


def mismatch(crystal, pm_type, pump_wavelength, signal_wavelength, models=None):
    """Backward-wave mismatch k_p - k_s + k_i - k_m in rad/um."""
    models = models or dispersion.ktp_models()
    idler = idler_wavelength(pump_wavelength, signal_wavelength)
    ap, as_, ai = pm_type.axes
    t = crystal.temperature_c
    kp = wavevector(models[ap], pump_wavelength, t)
    if signal_wavelength == idler and as_ == ai:
        ks_minus_ki = 0.0  # exact cancellation at degeneracy
    else:
        ks_minus_ki = wavevector(models[as_], signal_wavelength, t) - wavevector(models[ai], idler, t)
    return kp - ks_minus_ki - grating_vector(crystal.poling_period_um, crystal.qpm_order)


def solve_poling_period(pump_wavelength, order, temperature, models=None):
    """Period that zeroes the degenerate mismatch for both types: m * wl_p / n_z(wl_p)."""
    models = models or dispersion.ktp_models()
    if order < 1:
        raise InputError(f"QPM order must be >= 1, got {order}")
    n = dispersion.refractive_index(models[Axis.Z], pump_wavelength, temperature)
    return order * pump_wavelength / n


def matched_crystal(crystal, pump_wavelength, models=None):
    """Copy of ``crystal`` with the period re-solved for exact degeneracy."""
    period = solve_poling_period(pump_wavelength, crystal.qpm_order, crystal.temperature_c, models)
    return replace(crystal, poling_period_um=period)


def solve_degenerate_temperature(crystal, pump_wavelength, models=None, bracket=(0.0, 100.0)):
    """Temperature at which the given period is degenerate-matched, or None if outside ``bracket``."""
    models = models or dispersion.ktp_models()
    target = crystal.qpm_order * pump_wavelength / crystal.poling_period_um

    def f(t):
        return dispersion.refractive_index(models[Axis.Z], pump_wavelength, t) - target

    lo, hi = bracket
    flo, fhi = f(lo), f(hi)
    if flo * fhi > 0:
        return None
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if flo * fm <= 0:
            hi = mid
        else:
            lo, flo = mid, fm
        if hi - lo < 1e-9:
            break
    return 0.5 * (lo + hi)


def _bisect(f, lo, hi, flo, done):
    while not done(lo, hi):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0:
            return mid
        if (fm < 0) == (flo < 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def solve_signal_wavelength(crystal, pm_type, pump_wavelength, interval=(1.2, 2.0), points=2000,
                            tol=1e-9, models=None):
    """All signal wavelengths in ``interval`` where the mismatch vanishes, ascending.

    Roots are bracketed by sign changes on a uniform grid and then bisected
    until |dk| < tol (rad/um) or the bracket reaches machine precision.
    """
    lo, hi = interval
    if not pump_wavelength < lo < hi:
        raise InputError(f"signal interval {interval} must lie above the pump wavelength {pump_wavelength}")

    def f(wl):
        return mismatch(crystal, pm_type, pump_wavelength, wl, models)

    grid = np.linspace(lo, hi, points)
    values = [f(wl) for wl in grid]
    roots = []
    for i in range(points - 1):
        a, b, fa, fb = grid[i], grid[i + 1], values[i], values[i + 1]
        if fa == 0:
            roots.append(float(a))
        elif fa * fb < 0:
            def done(x, y):
                return abs(f(0.5 * (x + y))) < tol or y - x <= 4 * np.spacing(y)
            roots.append(float(_bisect(f, a, b, fa, done)))
    if values[-1] == 0:
        roots.append(float(grid[-1]))
    return sorted(roots)


def detuned_wavelengths(pump_wavelength, detuning):
    """(signal, idler) wavelengths for signal at w0 + detuning and idler at w0 - detuning."""
    w0 = math.pi * C_UM_PER_S / pump_wavelength
    if abs(detuning) >= w0:
        raise RangeError(f"detuning {detuning} rad/s exceeds the degenerate frequency {w0:.4g} rad/s")
    return 2 * math.pi * C_UM_PER_S / (w0 + detuning), 2 * math.pi * C_UM_PER_S / (w0 - detuning)


def detuned_mismatch(crystal, pm_type, pump_wavelength, detuning, models=None):
    models = models or dispersion.ktp_models()
    ls, li = detuned_wavelengths(pump_wavelength, detuning)
    if detuning == 0:
        return mismatch(crystal, pm_type, pump_wavelength, 2 * pump_wavelength, models)
    ap, as_, ai = pm_type.axes
    t = crystal.temperature_c
    return (wavevector(models[ap], pump_wavelength, t) - wavevector(models[as_], ls, t)
            + wavevector(models[ai], li, t) - grating_vector(crystal.poling_period_um, crystal.qpm_order))


def sinc(x):
    return 1.0 if x == 0 else math.sin(x) / x


def spectral_amplitude(crystal, pm_type, pump_wavelength, detuning, models=None):
    """Phase-matching amplitude sinc(dk L / 2) at a detuning (rad/s) from degeneracy.

    Real-valued; the propagation phase is dropped. Exact dispersion is used at
    every point.
    """
    dk = detuned_mismatch(crystal, pm_type, pump_wavelength, detuning, models)
    return sinc(0.5 * dk * crystal.length_um)


def inverse_group_velocity_sum(crystal, pm_type, pump_wavelength, models=None):
    """(n_g,s + n_g,i) / c at degeneracy, in s/um; equals -d(dk)/d(detuning)."""
    models = models or dispersion.ktp_models()
    _, as_, ai = pm_type.axes
    wl = 2 * pump_wavelength
    t = crystal.temperature_c
    ng = dispersion.group_index(models[as_], wl, t) + dispersion.group_index(models[ai], wl, t)
    return ng / C_UM_PER_S


def linearized_bandwidth(crystal, pm_type, pump_wavelength, models=None):
    """First-order closed form 0.8859 c / (L (n_g,s + n_g,i)) in GHz."""
    k1 = inverse_group_velocity_sum(crystal, pm_type, pump_wavelength, models)
    return 4 * SINC2_HALF_MAX_X / (2 * math.pi) / (crystal.length_um * k1) / 1e9


def spectral_peak(crystal, pm_type, pump_wavelength, models=None):
    """Detuning (rad/s) where the mismatch vanishes; 0 for a degenerate-matched crystal."""
    slope = -inverse_group_velocity_sum(crystal, pm_type, pump_wavelength, models)
    omega = 0.0
    for _ in range(20):
        dk = detuned_mismatch(crystal, pm_type, pump_wavelength, omega, models)
        if abs(dk) < 1e-13:
            break
        omega -= dk / slope
    return omega


def bandwidth_fwhm(crystal, pm_type, pump_wavelength, models=None, tol_ghz=1e-6):
    """FWHM of |f|^2 in GHz, bisecting for the half-maximum on each side of the peak."""
    k1 = inverse_group_velocity_sum(crystal, pm_type, pump_wavelength, models)
    peak = spectral_peak(crystal, pm_type, pump_wavelength, models)
    first_zero = 2 * math.pi / (crystal.length_um * k1)
    tol = 2 * math.pi * tol_ghz * 1e9

    def g(omega):
        return spectral_amplitude(crystal, pm_type, pump_wavelength, omega, models) ** 2 - 0.5

    edges = []
    for sign in (1, -1):
        far = peak + sign * first_zero
        lo, hi = sorted((peak, far))
        flo = g(lo)
        edges.append(_bisect(g, lo, hi, flo, lambda a, b: b - a < tol))
    right, left = edges
    return (right - left) / (2 * math.pi) / 1e9
