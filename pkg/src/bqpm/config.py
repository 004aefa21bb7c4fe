"""Experiment configuration: a strict YAML description of the source and measurement chain."""

import hashlib
import json
import math
from importlib import resources
from typing import Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .errors import InputError, ParseError


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class CrystalConfig(_Strict):
    length_mm: float = Field(4.5, gt=0)
    poling_period_um: float = Field(2.95, gt=0)
    qpm_order: int = Field(7, ge=1)
    temperature_c: float = Field(19.0, ge=0, le=100)
    ratio_r: float = Field(14.83, gt=0)
    d33_pm_per_v: float | None = Field(None, gt=0)
    d32_pm_per_v: float | None = Field(None, gt=0)
    aperture_mm: tuple[float, float] | None = None
    # spectra (bandwidth, HOM) use a period re-solved for exact degeneracy
    degenerate_match: bool = True


class PumpConfig(_Strict):
    wavelength_nm: float = Field(778.33, gt=0)
    power_mw: float = Field(300.0, ge=0)
    polarization: Literal["V"] = "V"


class CompensatorConfig(_Strict):
    length_mm: float = Field(4.5, ge=0)
    temperature_c: float = Field(19.0, ge=0, le=100)
    extra_phase_rad: float = math.pi


class BrewsterConfig(_Strict):
    enabled: bool = False
    t_h: float = Field(1.0, gt=0, le=1)
    t_v: float | None = Field(None, gt=0, le=1)


class DetectionConfig(_Strict):
    eta_signal: float = Field(0.22, gt=0, le=1)
    eta_idler: float = Field(0.12, gt=0, le=1)
    coincidence_window_ns: float = Field(1.6, gt=0)
    include_accidentals: bool = False


class SourceConfig(_Strict):
    spectral_brightness: float = Field(60.0, gt=0)
    bandwidth_ghz: float | None = Field(15.7, gt=0)
    beam_waist_um: float = Field(70.0, gt=0)


class SimulationConfig(_Strict):
    duration_s: float = Field(60.0, gt=0)
    seed: int = Field(0, ge=0, lt=2**64)
    pair_rate_per_s: float | None = Field(None, ge=0)
    derive_from_brightness: bool = True
    werner_p: float = Field(1.0, ge=0, le=1)
    hom_overlap_visibility: float = Field(0.849, ge=0, le=1)
    bootstrap_resamples: int = Field(100, ge=0)
    # use mean counts instead of Poisson draws
    noiseless: bool = False


class CurveConfig(_Strict):
    pm_type: Literal["type0", "type1"] = "type0"
    theta_start_deg: float = 0.0
    theta_stop_deg: float = 180.0
    theta_step_deg: float = Field(1.0, gt=0)
    delay_start_ps: float = -60.0
    delay_stop_ps: float = 60.0
    delay_step_ps: float = Field(1.0, gt=0)
    noisy: bool = False


class AnalysisConfig(_Strict):
    target: Literal["state", "source", "phi_plus", "phi_minus"] = "state"
    chsh_angles_deg: tuple[float, float, float, float] | Literal["optimal"] = (0.0, 45.0, 22.5, 67.5)
    subtract_accidentals: bool = False


class PathsConfig(_Strict):
    output_dir: str | None = None


class ExperimentConfig(_Strict):
    crystal: CrystalConfig = CrystalConfig()
    pump: PumpConfig = PumpConfig()
    compensator: CompensatorConfig = CompensatorConfig()
    brewster: BrewsterConfig = BrewsterConfig()
    detection: DetectionConfig = DetectionConfig()
    source: SourceConfig = SourceConfig()
    simulation: SimulationConfig = SimulationConfig()
    curve: CurveConfig = CurveConfig()
    analysis: AnalysisConfig = AnalysisConfig()
    paths: PathsConfig = PathsConfig()

    @field_validator("brewster")
    @classmethod
    def _brewster_order(cls, v):
        if v.t_v is not None and v.t_v > v.t_h:
            raise ValueError("t_v must not exceed t_h")
        return v

    def digest(self):
        blob = json.dumps(self.model_dump(mode="json"), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def _format_errors(err):
    lines = []
    for e in err.errors():
        path = ".".join(str(p) for p in e["loc"]) or "<root>"
        lines.append(f"{path}: {e['msg']}")
    return "; ".join(lines)


def parse_config(data):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise InputError("config must be a mapping at the top level")
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as err:
        raise InputError(f"invalid config: {_format_errors(err)}") from None


def load_config(path=None):
    """Read a YAML config; ``None`` gives the bundled reference configuration."""
    if path is None:
        text = resources.files("bqpm.data").joinpath("reference.yaml").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as err:
        raise ParseError(f"cannot parse config {path}: {err}") from None
    return parse_config(data)
