"""Two-photon polarization states and the Jones operators acting on them.

Amplitudes are ordered (HH, HV, VH, VV) with the signal photon first. Density
matrices are plain 4x4 complex numpy arrays in the same basis.

Non-unitary elements (Brewster windows, polarizers) shrink the norm. The
state is renormalized after each step and the lost probability mass is kept
in ``success_probability``.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import dispersion
from .dispersion import Axis
from .errors import AnnihilationError, InputError

H = np.array([1, 0], dtype=complex)
V = np.array([0, 1], dtype=complex)
BASIS_LABELS = ("HH", "HV", "VH", "VV")
ARMS = ("signal", "idler")


def _canonical(amps):
    """Fix the global phase so the first non-negligible amplitude is real positive."""
    idx = np.flatnonzero(np.abs(amps) > 1e-14)
    if idx.size == 0:
        return amps
    a = amps[idx[0]]
    return amps * (abs(a) / a)


@dataclass(frozen=True, eq=False)
class TwoPhotonState:
    amplitudes: np.ndarray
    success_probability: float = 1.0

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amps.shape != (4,):
            raise InputError(f"expected 4 amplitudes, got shape {amps.shape}")
        norm = np.linalg.norm(amps)
        if not np.isfinite(norm) or norm == 0:
            raise InputError("state has zero or non-finite norm")
        if not 0 < self.success_probability <= 1 + 1e-12:
            raise InputError(f"success probability must be in (0, 1], got {self.success_probability}")
        amps = _canonical(amps / norm)
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    def __repr__(self):
        parts = ", ".join(f"{lab}={a:.5g}" for lab, a in zip(BASIS_LABELS, self.amplitudes))
        return f"TwoPhotonState({parts}; p={self.success_probability:.6g})"

    def equals(self, other, atol=1e-10):
        """Equality up to global phase."""
        return abs(abs(np.vdot(self.amplitudes, other.amplitudes)) - 1) < atol


def source_state(ratio_r, theta=0.0):
    """(|HH> + e^{i theta} sqrt(R) |VV>) / sqrt(R + 1)."""
    if not (math.isfinite(ratio_r) and ratio_r > 0):
        raise InputError(f"ratio R must be > 0, got {ratio_r}")
    s = 1 / math.sqrt(ratio_r + 1)
    return TwoPhotonState([s, 0, 0, np.exp(1j * theta) * math.sqrt(ratio_r) * s])


PHI_PLUS = TwoPhotonState([1, 0, 0, 1])
PHI_MINUS = TwoPhotonState([1, 0, 0, -1])


def wrap_phase(phase):
    """Reduce to (-pi, pi]."""
    return math.pi - (math.pi - phase) % (2 * math.pi)


def birefringent_phase(length_mm, signal_wavelength, temperature, models=None):
    """(2 pi / wl) (n_z - n_y) L without wrapping."""
    models = models or dispersion.ktp_models()
    dn = (dispersion.refractive_index(models[Axis.Z], signal_wavelength, temperature)
          - dispersion.refractive_index(models[Axis.Y], signal_wavelength, temperature))
    return 2 * math.pi / signal_wavelength * dn * length_mm * 1e3


def compensator_phase(length_mm, signal_wavelength, temperature, models=None):
    """Birefringent phase of a KTP plate, wrapped to (-pi, pi].

    A plate rotated by 90 degrees contributes the negative; the caller picks the sign.
    """
    if length_mm < 0:
        raise InputError(f"compensator length must be >= 0, got {length_mm}")
    return wrap_phase(birefringent_phase(length_mm, signal_wavelength, temperature, models))


# -- elements ---------------------------------------------------------------

@dataclass(frozen=True)
class HWP:
    angle: float  # degrees, fast axis from H

    def matrix(self):
        t = math.radians(2 * self.angle)
        return np.array([[math.cos(t), math.sin(t)], [math.sin(t), -math.cos(t)]], dtype=complex)


@dataclass(frozen=True)
class QWP:
    angle: float  # degrees

    def matrix(self):
        t = math.radians(self.angle)
        c, s = math.cos(t), math.sin(t)
        off = (1 - 1j) * s * c
        m = np.array([[c * c + 1j * s * s, off], [off, s * s + 1j * c * c]])
        return np.exp(-1j * math.pi / 4) * m


@dataclass(frozen=True)
class BrewsterWindow:
    t_h: float  # intensity transmittances
    t_v: float

    def __post_init__(self):
        if not 0 < self.t_v <= self.t_h <= 1:
            raise InputError(f"need 0 < T_V <= T_H <= 1, got T_H={self.t_h}, T_V={self.t_v}")

    def matrix(self):
        return np.diag([math.sqrt(self.t_h), math.sqrt(self.t_v)]).astype(complex)


@dataclass(frozen=True)
class Compensator:
    phase: float  # radians, added to V

    def matrix(self):
        return np.diag([1, np.exp(1j * self.phase)])


@dataclass(frozen=True)
class PolarizerProjection:
    axis: str = "H"

    def __post_init__(self):
        if self.axis not in ("H", "V"):
            raise InputError(f"polarizer axis must be 'H' or 'V', got {self.axis!r}")

    def matrix(self):
        return np.diag([1, 0] if self.axis == "H" else [0, 1]).astype(complex)


def brewster_window_for_ratio(ratio_r, t_h=1.0):
    """Window whose intensity ratio T_H / T_V is sqrt(R); one per arm balances HH and VV."""
    return BrewsterWindow(t_h, t_h / math.sqrt(ratio_r))


def element_operator(element):
    """2x2 Jones matrix of an element (raw 2x2 arrays pass through)."""
    if isinstance(element, np.ndarray):
        if element.shape != (2, 2):
            raise InputError(f"operator must be 2x2, got {element.shape}")
        return element.astype(complex)
    return element.matrix()


def _arm_index(arm):
    if arm in (0, "signal", "s"):
        return 0
    if arm in (1, "idler", "i"):
        return 1
    raise InputError(f"arm must be 'signal' or 'idler', got {arm!r}")


def apply(state, element, arm):
    """Act with ``element`` on one arm; losses go into success_probability."""
    m = element_operator(element)
    amps = state.amplitudes.reshape(2, 2)
    out = m @ amps if _arm_index(arm) == 0 else amps @ m.T
    p = float(np.vdot(out, out).real)
    if p < 1e-24:
        raise AnnihilationError(f"{element!r} on the {arm} arm annihilated the state", setting=(element, arm))
    if abs(p - 1) < 1e-12:
        p = 1.0
    return TwoPhotonState(out.reshape(-1) / math.sqrt(p), state.success_probability * p)


def apply_both(state, element):
    return apply(apply(state, element, "signal"), element, "idler")


@dataclass(frozen=True)
class ArmSetting:
    """Analyzer on one arm: optional QWP, then HWP, then a polarizer along ``axis``."""
    hwp: float = 0.0  # degrees
    qwp: float | None = None
    axis: str = "H"

    def operator(self):
        m = HWP(self.hwp).matrix()
        if self.qwp is not None:
            m = m @ QWP(self.qwp).matrix()
        return m

    def vector(self):
        """Polarization state this analyzer transmits."""
        e = H if self.axis == "H" else V
        return self.operator().conj().T @ e


@dataclass(frozen=True)
class MeasurementSetting:
    signal: ArmSetting
    idler: ArmSetting
    label: str = ""
    x: float | None = field(default=None, compare=False)  # scan coordinate of a curve, radians

    def projector_vector(self):
        return np.kron(self.signal.vector(), self.idler.vector())

    def projector(self):
        v = self.projector_vector()
        return np.outer(v, v.conj())


def coincidence_probability(state, signal_setting, idler_setting):
    """Full-chain probability of a coincidence for one pair of analyzer settings.

    ``state`` is a TwoPhotonState (result includes its success probability)
    or a 4x4 density matrix.
    """
    v = np.kron(signal_setting.vector(), idler_setting.vector())
    if isinstance(state, TwoPhotonState):
        return state.success_probability * abs(np.vdot(v, state.amplitudes)) ** 2
    rho = np.asarray(state)
    return float(np.real(v.conj() @ rho @ v))


def to_density(state):
    a = state.amplitudes
    return np.outer(a, a.conj())


def validate_density(rho, atol=1e-12, eig_tol=1e-10):
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (4, 4):
        raise InputError(f"density matrix must be 4x4, got {rho.shape}")
    if np.max(np.abs(rho - rho.conj().T)) > atol:
        raise InputError("density matrix is not Hermitian")
    if abs(np.trace(rho).real - 1) > atol:
        raise InputError(f"density matrix trace {np.trace(rho).real} != 1")
    if np.linalg.eigvalsh(rho).min() < -eig_tol:
        raise InputError("density matrix has negative eigenvalues")
    return rho


def werner_mix(target, p):
    """p * rho + (1 - p) * I / 4."""
    if not 0 <= p <= 1:
        raise InputError(f"mixing weight must be in [0, 1], got {p}")
    rho = to_density(target) if isinstance(target, TwoPhotonState) else np.asarray(target, dtype=complex)
    return p * rho + (1 - p) * np.eye(4) / 4
