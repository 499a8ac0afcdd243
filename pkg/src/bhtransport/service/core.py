"""Service-level operations: validated configs in, plain data out.

The FastAPI app and the command-line client both call these functions;
the CLI simply runs them in-process when no server is configured.
"""

from __future__ import annotations

import math
import warnings

import numpy as np

from .. import devices as dev_mod
from ..devices import DeviceError, SweepSpec, get_device, list_devices, sweep, truth_table
from ..master import NegativityWarning, steady_state
from ..observables import current_matrix, mean_current, noise_analysis
from ..reservoir import ReservoirSpec
from . import models as m


class ConfigError(ValueError):
    """Invalid run configuration."""


_DEVICE_KW = (
    "eps", "u", "j", "gamma0", "detuning_j", "base_coupling_ratio",
    "input_a_on", "input_b_on", "on_level", "n_max", "n_tot_max",
)

_BUILDER_KW = {
    "wire1": {"eps", "u", "j", "gamma0", "n_max", "n_tot_max"},
    "wire2": {"eps", "u", "j", "gamma0", "n_max", "n_tot_max"},
    "wire3": {"eps", "u", "j", "gamma0", "n_max", "n_tot_max"},
    "diode2": {"eps", "u", "j", "gamma0", "n_max", "n_tot_max"},
    "diode4": {"eps", "u", "j", "gamma0", "n_max", "n_tot_max"},
    "fet": {"eps", "u", "j", "gamma0", "n_max", "n_tot_max", "detuning_j"},
    "bjt": {"eps", "u", "j", "gamma0", "n_max", "n_tot_max", "base_coupling_ratio"},
    "and_gate": {
        "eps", "u", "j", "gamma0", "n_max", "n_tot_max", "base_coupling_ratio",
        "input_a_on", "input_b_on", "on_level",
    },
}


def build_device(cfg: m.DeviceConfig) -> dev_mod.DeviceSpec:
    name = dev_mod.ALIASES.get(cfg.name, cfg.name)
    if name not in _BUILDER_KW:
        raise ConfigError(f"unknown device {cfg.name!r}; known: {sorted(_BUILDER_KW)}")
    allowed = _BUILDER_KW[name]
    kwargs = {}
    for key in _DEVICE_KW:
        val = getattr(cfg, key)
        if val is None:
            continue
        if key not in allowed:
            raise ConfigError(f"device {name!r} does not take parameter {key!r}")
        kwargs[key] = val
    try:
        device = get_device(name, **kwargs)
        if cfg.mu:
            device = device.with_mu(cfg.mu)
    except DeviceError as exc:
        raise ConfigError(str(exc)) from exc
    return device


def apply_solver(device: dev_mod.DeviceSpec, solver: m.SolverConfig) -> dev_mod.DeviceSpec:
    if solver.gap_threshold_j is not None:
        from dataclasses import replace

        device = replace(device, gap_threshold_j=solver.gap_threshold_j)
    return device


def run_sweep_core(cfg: m.RunConfig) -> m.SweepResponse:
    device = apply_solver(build_device(cfg.device), cfg.solver)
    spec = SweepSpec.linspace(cfg.sweep.param, cfg.sweep.lo, cfg.sweep.hi, cfg.sweep.n)
    try:
        result = sweep(device, spec, mode=cfg.solver.mode, threads=cfg.threads)
    except DeviceError as exc:
        raise ConfigError(str(exc)) from exc

    points = [
        m.SweepPointOut(
            param=p.value_normalized,
            param_raw=p.value,
            currents=p.currents,
            residual=p.residual,
            sigma_min_eig=p.sigma_min_eig,
            ok=p.ok,
            error=p.error,
        )
        for p in result.points
    ]
    residuals = [p.residual for p in result.points if p.residual is not None]
    negs = [p.sigma_min_eig for p in result.points if p.sigma_min_eig is not None]
    manifest = m.SweepManifest(
        device_name=device.name,
        reservoir_ids=list(device.reservoir_ids),
        param=cfg.sweep.param,
        basis_dimension=result.dimension,
        packed_dimension=result.packed_dimension,
        mode=result.mode,
        gamma0_ref=device.gamma0_ref,
        mu_ref=device.mu_ref,
        u_ref=device.u_ref,
        points=len(points),
        failures=result.failures,
        wall_time_s=result.wall_time,
        max_residual=max(residuals) if residuals else None,
        min_sigma_eig=min(negs) if negs else None,
        broadening_2j=2.0 * device.j_ref,
        broadening_eta=max(r.eta for r in device.reservoirs),
    )
    return m.SweepResponse(points=points, manifest=manifest)


def run_noise_core(cfg: m.NoiseConfig) -> m.NoiseResponse:
    device = apply_solver(build_device(cfg.device), cfg.solver)
    try:
        rspec: ReservoirSpec = device.reservoir(cfg.reservoir)
    except DeviceError as exc:
        raise ConfigError(str(exc)) from exc
    eig = dev_mod.build_eigensystem(device)
    L = dev_mod.assemble_for(device, eig, cfg.solver.mode)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NegativityWarning)
        sigma = steady_state(L, method=cfg.solver.method)
    chan = {c.res.rid: c for c in L.channels}[cfg.reservoir]
    J = current_matrix(chan.res, chan.rates, eig)
    mean = mean_current(J, sigma)

    tau_grid = None
    if cfg.tau_max is not None:
        n_tau = cfg.n_tau or 20_000
        tau_grid = np.linspace(0.0, cfg.tau_max, n_tau)
    results = noise_analysis(L, J, sigma, cfg.T_values, tau_grid=tau_grid, n_omega=cfg.n_omega)

    first = results[0]
    return m.NoiseResponse(
        reservoir=cfg.reservoir,
        mean_current=mean / device.gamma0_ref,
        tau=[float(t) for t in first.tau_grid],
        autocorrelation=[float(c) for c in first.autocorrelation],
        rows=[m.NoiseRow(T=r.T, noise_power=r.noise_power, snr=r.snr) for r in results],
        spectra=[
            m.SpectrumOut(
                T=r.T,
                omega=[float(w) for w in r.omega_grid],
                S=[float(s) for s in r.spectral_density],
            )
            for r in results
        ],
    )


def run_truth_table_core(cfg: m.TruthTableConfig) -> m.TruthTableResponse:
    gate_kwargs = {}
    for key in ("eps", "u", "j", "gamma0", "base_coupling_ratio", "n_max", "n_tot_max"):
        val = getattr(cfg.device, key, None)
        if val is not None:
            gate_kwargs[key] = val
    name = dev_mod.ALIASES.get(cfg.device.name, cfg.device.name)
    if name != "and_gate":
        raise ConfigError("truth-table runs require the and_gate device")
    try:
        tt = truth_table(
            on_level=cfg.on_level,
            off_level=cfg.off_level,
            mode=cfg.solver.mode,
            **gate_kwargs,
        )
    except DeviceError as exc:
        raise ConfigError(str(exc)) from exc
    return m.TruthTableResponse(
        rows=[
            m.TruthTableRowOut(
                input_a=r.input_a,
                input_b=r.input_b,
                output_current=r.output_current,
                output_normalized=r.output_normalized,
            )
            for r in tt.rows
        ],
        min_on_off_ratio=tt.min_on_off_ratio if math.isfinite(tt.min_on_off_ratio) else 1e308,
        mode=tt.mode,
    )


def list_devices_core() -> m.DeviceListResponse:
    return m.DeviceListResponse(devices=[m.DeviceInfo(**d) for d in list_devices()])


def validate_core(payload: dict, kind: str = "run") -> m.ValidateResponse:
    """Validate a config dict without running it; returns the normalized
    form and the basis dimension it would use."""
    model = {"run": m.RunConfig, "noise": m.NoiseConfig, "truth-table": m.TruthTableConfig}.get(kind)
    if model is None:
        return m.ValidateResponse(ok=False, errors=[f"unknown config kind {kind!r}"])
    try:
        cfg = model.model_validate(payload)
    except Exception as exc:
        return m.ValidateResponse(ok=False, errors=[str(exc)])
    try:
        device = build_device(cfg.device)
        if kind == "run":
            kind_, key = dev_mod.parse_sweep_param(cfg.sweep.param)
            if kind_ == "mu":
                device.reservoir(key)
            elif not (0 <= int(key) < device.lattice.num_sites):
                raise ConfigError(f"sweep site {key} out of range")
        if kind == "noise":
            device.reservoir(cfg.reservoir)
        eig = dev_mod.build_eigensystem(device)
        packed = sum((sl.stop - sl.start) ** 2 for _, sl in eig.sector_slices)
    except (ConfigError, DeviceError, ValueError) as exc:
        return m.ValidateResponse(ok=False, errors=[str(exc)])
    return m.ValidateResponse(
        ok=True,
        basis_dimension=eig.dimension,
        packed_dimension=packed,
        normalized=cfg.model_dump(),
    )
