"""Request/response schemas for the transport service.

Every request model rejects unknown keys, so a config file with a typo
fails validation instead of silently running with defaults.
"""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator

from .. import __version__


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DeviceConfig(StrictModel):
    """Catalog device selection plus parameter overrides."""

    name: str
    eps: Optional[float] = None
    u: Optional[float] = None
    j: Optional[float] = None
    gamma0: Optional[float] = None
    detuning_j: Optional[float] = Field(default=None, description="FET gate detuning in units of J")
    base_coupling_ratio: Optional[float] = None
    input_a_on: Optional[bool] = None
    input_b_on: Optional[bool] = None
    on_level: Optional[float] = None
    n_max: Optional[int] = Field(default=None, ge=1)
    n_tot_max: Optional[int] = Field(default=None, ge=1)
    mu: dict[str, float] = Field(default_factory=dict, description="fixed chemical potentials by reservoir id")


class SolverConfig(StrictModel):
    mode: Literal["auto", "full", "secular"] = "auto"
    gap_threshold_j: Optional[float] = Field(default=None, gt=0)
    method: Literal["auto", "cod", "lu", "lsqr"] = "auto"


class SweepConfig(StrictModel):
    param: str = Field(description="'mu:<reservoir id>' or 'eps:<site>' (shorthand muL, eps0)")
    lo: float
    hi: float
    n: int = Field(ge=2)

    @field_validator("hi")
    @classmethod
    def _monotone(cls, v, info):
        if "lo" in info.data and v == info.data["lo"]:
            raise ValueError("sweep endpoints must differ")
        return v


class RunConfig(StrictModel):
    """Config for a steady-state sweep run."""

    device: DeviceConfig
    sweep: SweepConfig
    solver: SolverConfig = SolverConfig()
    threads: int = Field(default=1, ge=1, le=64)
    out: Optional[str] = Field(default=None, description="output path base (client-side)")


class NoiseConfig(StrictModel):
    """Config for a noise/SNR run at a single operating point."""

    device: DeviceConfig
    reservoir: str = Field(description="reservoir whose current is analyzed")
    T_values: list[float] = Field(min_length=1, description="averaging times")
    tau_max: Optional[float] = Field(default=None, gt=0)
    n_tau: Optional[int] = Field(default=None, ge=64)
    n_omega: int = Field(default=1200, ge=64)
    solver: SolverConfig = SolverConfig()
    out: Optional[str] = None


class TruthTableConfig(StrictModel):
    """Config for the four-row AND-gate truth table."""

    device: DeviceConfig = DeviceConfig(name="and_gate")
    on_level: float = 3.2
    off_level: float = 0.0
    solver: SolverConfig = SolverConfig()
    out: Optional[str] = None


# -- responses ---------------------------------------------------------------


class DeviceInfo(StrictModel):
    name: str
    description: str
    num_sites: int
    reservoirs: list[str]
    gamma0: float
    n_max: int
    n_tot_max: int
    default_mode: str


class DeviceListResponse(StrictModel):
    devices: list[DeviceInfo]
    version: str = __version__


class SweepPointOut(StrictModel):
    param: float
    param_raw: float
    currents: dict[str, float]
    residual: Optional[float] = None
    sigma_min_eig: Optional[float] = None
    ok: bool
    error: str = ""


class SweepManifest(StrictModel):
    version: str = __version__
    device_name: str
    reservoir_ids: list[str]
    param: str
    basis_dimension: int
    packed_dimension: int
    mode: str
    gamma0_ref: float
    mu_ref: float
    u_ref: float
    points: int
    failures: int
    wall_time_s: float
    max_residual: Optional[float] = None
    min_sigma_eig: Optional[float] = None
    # step positions can only be located to within these scales: the
    # substep splitting 2J and the regularization rate eta = pi*Gamma0/2
    broadening_2j: Optional[float] = None
    broadening_eta: Optional[float] = None
    normalization: str = "currents in units of gamma0_ref; mu reported as (mu - mu_ref)/u_ref"


class SweepResponse(StrictModel):
    points: list[SweepPointOut]
    manifest: SweepManifest


class NoiseRow(StrictModel):
    T: float
    noise_power: float
    snr: float


class SpectrumOut(StrictModel):
    T: float
    omega: list[float]
    S: list[float]


class NoiseResponse(StrictModel):
    reservoir: str
    mean_current: float
    tau: list[float]
    autocorrelation: list[float]
    rows: list[NoiseRow]
    spectra: list[SpectrumOut]
    version: str = __version__


class TruthTableRowOut(StrictModel):
    input_a: float
    input_b: float
    output_current: float
    output_normalized: float


class TruthTableResponse(StrictModel):
    rows: list[TruthTableRowOut]
    min_on_off_ratio: float
    mode: str
    version: str = __version__


class ValidateResponse(StrictModel):
    ok: bool
    basis_dimension: Optional[int] = None
    packed_dimension: Optional[int] = None
    normalized: Optional[dict] = None
    errors: list[str] = Field(default_factory=list)
