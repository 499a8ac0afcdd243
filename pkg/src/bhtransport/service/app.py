"""HTTP front end for the transport engine."""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..master import SteadyStateError
from ..observables import NoiseRangeError
from . import models as m
from .core import (
    ConfigError,
    list_devices_core,
    run_noise_core,
    run_sweep_core,
    run_truth_table_core,
    validate_core,
)

app = FastAPI(
    title="bhtransport",
    version=__version__,
    description=(
        "Steady-state particle transport through small Bose-Hubbard lattices "
        "coupled to zero-temperature reservoirs"
    ),
)


@app.get("/health")
def health() -> dict:
    return {"status": "ok", "version": __version__}


@app.get("/devices", response_model=m.DeviceListResponse)
def devices() -> m.DeviceListResponse:
    return list_devices_core()


@app.post("/validate", response_model=m.ValidateResponse)
def validate(payload: dict, kind: str = "run") -> m.ValidateResponse:
    return validate_core(payload, kind=kind)


@app.post("/sweep", response_model=m.SweepResponse)
def sweep_endpoint(cfg: m.RunConfig) -> m.SweepResponse:
    try:
        return run_sweep_core(cfg)
    except ConfigError as exc:
        raise HTTPException(status_code=422, detail=str(exc))


@app.post("/noise", response_model=m.NoiseResponse)
def noise_endpoint(cfg: m.NoiseConfig) -> m.NoiseResponse:
    try:
        return run_noise_core(cfg)
    except ConfigError as exc:
        raise HTTPException(status_code=422, detail=str(exc))
    except (NoiseRangeError, SteadyStateError) as exc:
        raise HTTPException(status_code=409, detail=str(exc))


@app.post("/truth-table", response_model=m.TruthTableResponse)
def truth_table_endpoint(cfg: m.TruthTableConfig) -> m.TruthTableResponse:
    try:
        return run_truth_table_core(cfg)
    except ConfigError as exc:
        raise HTTPException(status_code=422, detail=str(exc))
    except SteadyStateError as exc:
        raise HTTPException(status_code=409, detail=str(exc))
