"""Refractive index of KTP along the crystal y and z axes.

Wavelengths are in micrometres and temperatures in degrees Celsius. The
Sellmeier part uses the two-pole form

    n0^2 = A + B / (wl^2 - C) + D / (wl^2 - E)

and the temperature correction is linear, with a dn/dT that depends on
wavelength through a polynomial in 1/wl:

    n(wl, T) = n0(wl) + dn/dT(wl) * (T - T_ref)

Coefficient sets live in ``data/ktp_sellmeier.json``. Other sets in the same
layout can be registered with :func:`register_model`.
"""

import enum
import json
import math
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .errors import InputError, RangeError


class Axis(enum.Enum):
    Y = "Y"
    Z = "Z"


@dataclass(frozen=True)
class SellmeierModel:
    name: str
    axis: Axis
    coefficients: tuple  # (A, B, C, D, E)
    thermo_optic: tuple  # t_k multiplying wl**-k, k = 0, 1, ...
    thermo_optic_scale: float = 1e-5
    t_ref: float = 20.0
    valid_range: tuple = (0.43, 3.54)
    temperature_range: tuple = (0.0, 100.0)
    reference_label: str = ""

    def __post_init__(self):
        if len(self.coefficients) != 5:
            raise InputError(f"{self.name}: expected 5 Sellmeier coefficients, got {len(self.coefficients)}")
        lo, hi = self.valid_range
        if not 0 < lo < hi:
            raise InputError(f"{self.name}: bad valid_range {self.valid_range}")

    @classmethod
    def from_dict(cls, d):
        return cls(
            name=d["name"],
            axis=Axis(d["axis"]),
            coefficients=tuple(float(c) for c in d["coefficients"]),
            thermo_optic=tuple(float(c) for c in d["thermo_optic"]),
            thermo_optic_scale=float(d.get("thermo_optic_scale", 1e-5)),
            t_ref=float(d.get("t_ref", 25.0)),
            valid_range=tuple(float(x) for x in d["valid_range"]),
            temperature_range=tuple(float(x) for x in d.get("temperature_range", (0.0, 100.0))),
            reference_label=d.get("reference_label", ""),
        )

    def _n0(self, wl):
        a, b, c, d, e = self.coefficients
        w2 = wl * wl
        return np.sqrt(a + b / (w2 - c) + d / (w2 - e))

    def _dn0(self, wl):
        a, b, c, d, e = self.coefficients
        w2 = wl * wl
        dn2 = -2 * wl * (b / (w2 - c) ** 2 + d / (w2 - e) ** 2)
        return dn2 / (2 * self._n0(wl))

    def dn_dt(self, wl):
        return self.thermo_optic_scale * sum(t * wl ** -k for k, t in enumerate(self.thermo_optic))

    def _ddn_dt(self, wl):
        return self.thermo_optic_scale * sum(-k * t * wl ** (-k - 1) for k, t in enumerate(self.thermo_optic))


def _check(model, wavelength, temperature, strict=False):
    wl = np.asarray(wavelength, dtype=float)
    t = float(temperature)
    if not (np.all(np.isfinite(wl)) and math.isfinite(t)):
        raise InputError(f"non-finite input: wavelength={wavelength!r}, temperature={temperature!r}")
    lo, hi = model.valid_range
    inside = (wl > lo) & (wl < hi) if strict else (wl >= lo) & (wl <= hi)
    if not np.all(inside):
        kind = "open" if strict else "closed"
        raise RangeError(
            f"wavelength {wavelength!r} um outside {model.name} valid range "
            f"[{lo}, {hi}] um ({kind} interval)"
        )
    tlo, thi = model.temperature_range
    if not tlo <= t <= thi:
        raise RangeError(f"temperature {t} C outside {model.name} thermal range [{tlo}, {thi}] C")
    return wl, t


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def refractive_index(model, wavelength, temperature):
    """Phase index n(wl, T). Accepts scalars or arrays of wavelengths."""
    wl, t = _check(model, wavelength, temperature)
    return _out(model._n0(wl) + model.dn_dt(wl) * (t - model.t_ref))


def index_derivative(model, wavelength, temperature):
    """Analytic dn/dwl in 1/um."""
    wl, t = _check(model, wavelength, temperature)
    return _out(model._dn0(wl) + model._ddn_dt(wl) * (t - model.t_ref))


def group_index(model, wavelength, temperature):
    """Group index n - wl * dn/dwl. The wavelength must lie strictly inside the valid range."""
    wl, t = _check(model, wavelength, temperature, strict=True)
    n = model._n0(wl) + model.dn_dt(wl) * (t - model.t_ref)
    dn = model._dn0(wl) + model._ddn_dt(wl) * (t - model.t_ref)
    return _out(n - wl * dn)


def load_models(path=None):
    """Read a coefficient file; defaults to the bundled KTP set."""
    if path is None:
        text = resources.files("bqpm.data").joinpath("ktp_sellmeier.json").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    return {m["name"]: SellmeierModel.from_dict(m) for m in json.loads(text)["models"]}


_REGISTRY = load_models()
KTP_Y = _REGISTRY["KTP-Y"]
KTP_Z = _REGISTRY["KTP-Z"]


def register_model(model):
    _REGISTRY[model.name] = model


def get_model(name):
    try:
        return _REGISTRY[name]
    except KeyError:
        raise InputError(f"unknown dispersion model {name!r}; known: {sorted(_REGISTRY)}") from None


def ktp_models():
    """Default axis -> model mapping used by the phase-matching code."""
    return {Axis.Y: KTP_Y, Axis.Z: KTP_Z}
