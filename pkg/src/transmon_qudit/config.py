"""Run configuration with a strict schema.

Unknown keys are rejected at every level, so a misspelt parameter fails loudly
instead of silently falling back to a default.
"""

from __future__ import annotations

import hashlib
import json
from importlib import resources
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from transmon_qudit.cavity import CavityParams
from transmon_qudit.decay import MEASURED_LIFETIMES_US
from transmon_qudit.readout import ReadoutCorrection
from transmon_qudit.spectrum import MIN_CHARGE_CUTOFF, TransmonParams


class ConfigError(ValueError):
    """The configuration file is missing, unparsable or fails validation."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class DeviceConfig(_Strict):
    e_j_ghz: float = Field(gt=0)
    e_c_ghz: float = Field(gt=0)
    n_g: float = Field(default=0.0, ge=0, le=1)
    charge_cutoff: int = Field(default=20, ge=MIN_CHARGE_CUTOFF)
    f_c_ghz: float = Field(gt=0)
    g01_ghz: float = Field(ge=0)
    kappa_ghz: float = Field(default=100e-6, gt=0)
    n_transmon: int = Field(default=20, ge=2)
    n_resonator: int = Field(default=20, ge=2)
    n_levels: int = Field(default=5, ge=2)

    def transmon(self) -> TransmonParams:
        return TransmonParams(self.e_j_ghz, self.e_c_ghz, self.n_g, self.charge_cutoff)

    def cavity(self) -> CavityParams:
        return CavityParams(self.f_c_ghz, self.g01_ghz, self.n_resonator, self.kappa_ghz)


class AnalysisConfig(_Strict):
    t_read_us: float = Field(default=8.0, ge=0)
    gamma10_lifetime_us: float = Field(default=MEASURED_LIFETIMES_US[(1, 0)], gt=0)
    q_t: Optional[float] = Field(default=None, gt=0)
    n_peaks: int = Field(default=3, ge=1)
    inversion: Literal["printed", "standard", "calibration"] = "printed"
    calibration: Optional[str] = None
    # Frequency order of the readout peaks by transmon state; "descending"
    # puts state 0 at the highest frequency (chi_0 > chi_1 > ...).
    state_order: Literal["descending", "ascending"] = "descending"
    psd_prominence: float = Field(default=5.0, gt=0)
    background_window_us: Optional[float] = Field(default=None, gt=0)
    decay_model: Literal["full", "sequential"] = "full"
    dispersion_tolerance: float = Field(default=0.05, ge=0)

    def readout_correction(self) -> ReadoutCorrection:
        return ReadoutCorrection(self.t_read_us, 1.0 / self.gamma10_lifetime_us)


class IOConfig(_Strict):
    inputs: list[str] = Field(default_factory=list)
    out: str = "out"
    seed: int = Field(default=7, ge=0, lt=2**64)


class RunConfig(_Strict):
    device: DeviceConfig
    analysis: AnalysisConfig = AnalysisConfig()
    io: IOConfig = IOConfig()

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def with_io(self, **changes) -> "RunConfig":
        changes = {k: v for k, v in changes.items() if v is not None}
        return self.model_copy(update={"io": self.io.model_copy(update=changes)})


def parse_config(data: dict) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path | None = None) -> RunConfig:
    """Read a JSON config; ``None`` loads the bundled reference device."""
    try:
        if path is None:
            text = resources.files("transmon_qudit.data").joinpath("reference.json").read_text()
        else:
            text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return parse_config(data)
