"""Command-line client for the transport service.

Runs against the in-process service by default; point ``--server`` at a
running instance (see ``bht serve``) to execute remotely instead.  Either
way the client writes the same CSV/manifest files locally.

Exit codes: 0 success, 1 config/validation error (no output files),
2 solver failure at one or more points (partial results still written).

CSV conventions: UTF-8, comma separator, scientific notation with 12
significant digits; currents in units of the device's reference gamma0;
swept chemical potentials as (mu - mu_ref)/U.  Reruns of an identical
config produce byte-identical CSV files.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
import time

from pydantic import ValidationError

from . import __version__
from .master import SteadyStateError
from .observables import NoiseRangeError
from .service import models as m
from .service.core import (
    ConfigError,
    list_devices_core,
    run_noise_core,
    run_sweep_core,
    run_truth_table_core,
    validate_core,
)

FLOAT_FMT = "%.11e"  # 12 significant digits


class CliError(Exception):
    def __init__(self, message: str, code: int = 1):
        super().__init__(message)
        self.code = code


# -- remote/in-process dispatch ----------------------------------------------


class ServiceClient:
    """Thin client: same request/response models in-process or over HTTP."""

    def __init__(self, server: str | None = None):
        self.server = server.rstrip("/") if server else None

    def _post(self, path: str, payload: dict, response_model):
        import httpx

        r = httpx.post(f"{self.server}{path}", json=payload, timeout=None)
        if r.status_code == 422:
            raise CliError(f"config rejected by server: {r.text}", 1)
        if r.status_code == 409:
            raise CliError(f"solver failure: {r.text}", 2)
        r.raise_for_status()
        return response_model.model_validate(r.json())

    def sweep(self, cfg: m.RunConfig) -> m.SweepResponse:
        if self.server:
            return self._post("/sweep", cfg.model_dump(), m.SweepResponse)
        return run_sweep_core(cfg)

    def noise(self, cfg: m.NoiseConfig) -> m.NoiseResponse:
        if self.server:
            return self._post("/noise", cfg.model_dump(), m.NoiseResponse)
        return run_noise_core(cfg)

    def truth_table(self, cfg: m.TruthTableConfig) -> m.TruthTableResponse:
        if self.server:
            return self._post("/truth-table", cfg.model_dump(), m.TruthTableResponse)
        return run_truth_table_core(cfg)

    def devices(self) -> m.DeviceListResponse:
        if self.server:
            import httpx

            r = httpx.get(f"{self.server}/devices", timeout=30)
            r.raise_for_status()
            return m.DeviceListResponse.model_validate(r.json())
        return list_devices_core()

    def validate(self, payload: dict, kind: str) -> m.ValidateResponse:
        if self.server:
            import httpx

            r = httpx.post(f"{self.server}/validate", params={"kind": kind}, json=payload, timeout=60)
            r.raise_for_status()
            return m.ValidateResponse.model_validate(r.json())
        return validate_core(payload, kind=kind)


# -- file output ---------------------------------------------------------------


def _atomic_write(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(x: float) -> str:
    return FLOAT_FMT % x


def write_sweep_csv(path: str, resp: m.SweepResponse) -> None:
    rids = resp.manifest.reservoir_ids
    lines = ["param," + ",".join(f"{rid}_current" for rid in rids)]
    for p in resp.points:
        cells = [_fmt(p.param)]
        for rid in rids:
            cells.append(_fmt(p.currents[rid]) if rid in p.currents else "nan")
        lines.append(",".join(cells))
    _atomic_write(path, "\n".join(lines) + "\n")


def write_manifest(path: str, config: dict, extra: dict) -> None:
    payload = {"config": config, **extra}
    _atomic_write(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


# -- config assembly -----------------------------------------------------------


def _load_config(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise CliError(f"config file not found: {path}", 1)
    except json.JSONDecodeError as exc:
        raise CliError(f"config is not valid JSON: {exc}", 1)


def _parse_sweep_flag(text: str) -> dict:
    parts = text.split(":")
    if len(parts) != 4:
        raise CliError(f"--sweep expects param:lo:hi:n, got {text!r}", 1)
    try:
        return {
            "param": parts[0],
            "lo": float(parts[1]),
            "hi": float(parts[2]),
            "n": int(parts[3]),
        }
    except ValueError as exc:
        raise CliError(f"bad --sweep value {text!r}: {exc}", 1)


def _run_config_from_args(args) -> m.RunConfig:
    payload: dict = {}
    if args.config:
        payload = _load_config(args.config)
    if args.device:
        payload.setdefault("device", {})
        if isinstance(payload["device"], dict):
            payload["device"]["name"] = args.device
    if args.sweep:
        payload["sweep"] = _parse_sweep_flag(args.sweep)
    if args.mode:
        payload.setdefault("solver", {})["mode"] = args.mode
    if args.threads is not None:
        payload["threads"] = args.threads
    if args.out:
        payload["out"] = args.out
    try:
        return m.RunConfig.model_validate(payload)
    except ValidationError as exc:
        raise CliError(f"invalid run config:\n{exc}", 1)


# -- subcommands ----------------------------------------------------------------


def cmd_run(args) -> int:
    cfg = _run_config_from_args(args)
    client = ServiceClient(args.server)
    t0 = time.perf_counter()
    try:
        resp = client.sweep(cfg)
    except ConfigError as exc:
        raise CliError(str(exc), 1)
    out = cfg.out or f"{cfg.device.name}_{cfg.sweep.param.replace(':', '')}"
    out = out[:-4] if out.endswith(".csv") else out
    write_sweep_csv(f"{out}.csv", resp)
    write_manifest(
        f"{out}.manifest.json",
        cfg.model_dump(),
        {"manifest": resp.manifest.model_dump(), "client_wall_time_s": time.perf_counter() - t0},
    )
    print(f"wrote {out}.csv ({resp.manifest.points} rows, {resp.manifest.failures} failures)")
    if resp.manifest.failures:
        for p in resp.points:
            if not p.ok:
                print(f"  point {p.param_raw}: {p.error}", file=sys.stderr)
        return 2
    return 0


def cmd_noise(args) -> int:
    payload = _load_config(args.config) if args.config else {}
    if args.out:
        payload["out"] = args.out
    if args.mode:
        payload.setdefault("solver", {})["mode"] = args.mode
    try:
        cfg = m.NoiseConfig.model_validate(payload)
    except ValidationError as exc:
        raise CliError(f"invalid noise config:\n{exc}", 1)
    client = ServiceClient(args.server)
    try:
        resp = client.noise(cfg)
    except ConfigError as exc:
        raise CliError(str(exc), 1)
    except (NoiseRangeError, SteadyStateError) as exc:
        raise CliError(f"noise run failed: {exc}", 2)
    out = cfg.out or f"{cfg.device.name}_noise"
    corr = ["tau,C"]
    corr += [f"{_fmt(t)},{_fmt(c)}" for t, c in zip(resp.tau, resp.autocorrelation)]
    _atomic_write(f"{out}.correlation.csv", "\n".join(corr) + "\n")
    spec_lines = ["T,omega,S"]
    for s in resp.spectra:
        spec_lines += [
            f"{_fmt(s.T)},{_fmt(w)},{_fmt(v)}" for w, v in zip(s.omega, s.S)
        ]
    _atomic_write(f"{out}.spectrum.csv", "\n".join(spec_lines) + "\n")
    snr_lines = ["T,noise_power,snr"]
    snr_lines += [f"{_fmt(r.T)},{_fmt(r.noise_power)},{_fmt(r.snr)}" for r in resp.rows]
    _atomic_write(f"{out}.snr.csv", "\n".join(snr_lines) + "\n")
    write_manifest(
        f"{out}.manifest.json",
        cfg.model_dump(),
        {"reservoir": resp.reservoir, "mean_current": resp.mean_current},
    )
    print(f"wrote {out}.correlation.csv, {out}.spectrum.csv, {out}.snr.csv")
    return 0


def cmd_truth_table(args) -> int:
    payload = _load_config(args.config) if args.config else {}
    if args.out:
        payload["out"] = args.out
    if args.mode:
        payload.setdefault("solver", {})["mode"] = args.mode
    try:
        cfg = m.TruthTableConfig.model_validate(payload)
    except ValidationError as exc:
        raise CliError(f"invalid truth-table config:\n{exc}", 1)
    client = ServiceClient(args.server)
    try:
        resp = client.truth_table(cfg)
    except ConfigError as exc:
        raise CliError(str(exc), 1)
    except SteadyStateError as exc:
        raise CliError(f"truth-table run failed: {exc}", 2)
    out = cfg.out or "and_gate_truth_table"
    lines = ["A,B,output_current,output_normalized"]
    for r in resp.rows:
        lines.append(
            ",".join([_fmt(r.input_a), _fmt(r.input_b), _fmt(r.output_current), _fmt(r.output_normalized)])
        )
    _atomic_write(f"{out}.csv", "\n".join(lines) + "\n")
    write_manifest(
        f"{out}.manifest.json",
        cfg.model_dump(),
        {"min_on_off_ratio": resp.min_on_off_ratio, "mode": resp.mode},
    )
    print(f"wrote {out}.csv (on/off ratio {resp.min_on_off_ratio:.2f})")
    return 0


def cmd_devices(args) -> int:
    if args.devices_cmd != "list":
        raise CliError(f"unknown devices subcommand {args.devices_cmd!r}", 1)
    resp = ServiceClient(args.server).devices()
    width = max(len(d.name) for d in resp.devices)
    for d in resp.devices:
        print(
            f"{d.name:<{width}}  sites={d.num_sites} reservoirs={','.join(d.reservoirs)} "
            f"gamma0={d.gamma0:g} n_max={d.n_max} n_tot_max={d.n_tot_max} "
            f"mode={d.default_mode}  {d.description}"
        )
    return 0


def cmd_validate(args) -> int:
    if args.schema:
        model = {"run": m.RunConfig, "noise": m.NoiseConfig, "truth-table": m.TruthTableConfig}[args.kind]
        print(json.dumps(model.model_json_schema(), indent=2, sort_keys=True))
        return 0
    if not args.config:
        raise CliError("validate requires --config (or --schema)", 1)
    payload = _load_config(args.config)
    resp = ServiceClient(args.server).validate(payload, kind=args.kind)
    if resp.ok:
        print(json.dumps({
            "ok": True,
            "basis_dimension": resp.basis_dimension,
            "packed_dimension": resp.packed_dimension,
            "normalized": resp.normalized,
        }, indent=2, sort_keys=True))
        return 0
    for err in resp.errors:
        print(f"invalid config: {err}", file=sys.stderr)
    return 1


def cmd_serve(args) -> int:
    import uvicorn

    from .service.app import app

    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bht",
        description="Bose-Hubbard open-system transport: sweeps, noise, logic tables.",
    )
    parser.add_argument("--version", action="version", version=f"bht {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="steady-state sweep -> CSV + manifest")
    p_run.add_argument("--config", help="JSON run config")
    p_run.add_argument("--device", help="catalog device name (e.g. wire2)")
    p_run.add_argument("--sweep", help="param:lo:hi:n (e.g. muL:2.5:6:400)")
    p_run.add_argument("--mode", choices=["auto", "full", "secular"])
    p_run.add_argument("--threads", type=int)
    p_run.add_argument("--out", help="output path base")
    p_run.add_argument("--server", help="remote service URL")
    p_run.set_defaults(func=cmd_run)

    p_noise = sub.add_parser("noise", help="current noise and SNR at one operating point")
    p_noise.add_argument("--config", required=True, help="JSON noise config")
    p_noise.add_argument("--mode", choices=["auto", "full", "secular"])
    p_noise.add_argument("--out")
    p_noise.add_argument("--server")
    p_noise.set_defaults(func=cmd_noise)

    p_tt = sub.add_parser("truth-table", help="AND-gate truth table")
    p_tt.add_argument("--config", help="JSON truth-table config")
    p_tt.add_argument("--mode", choices=["auto", "full", "secular"])
    p_tt.add_argument("--out")
    p_tt.add_argument("--server")
    p_tt.set_defaults(func=cmd_truth_table)

    p_dev = sub.add_parser("devices", help="device catalog")
    p_dev.add_argument("devices_cmd", choices=["list"])
    p_dev.add_argument("--server")
    p_dev.set_defaults(func=cmd_devices)

    p_val = sub.add_parser("validate", help="validate a config without running")
    p_val.add_argument("--config")
    p_val.add_argument("--kind", choices=["run", "noise", "truth-table"], default="run")
    p_val.add_argument("--schema", action="store_true", help="print the config JSON schema and exit")
    p_val.add_argument("--server")
    p_val.set_defaults(func=cmd_validate)

    p_serve = sub.add_parser("serve", help="start the HTTP service")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8710)
    p_serve.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ValidationError as exc:
        print(f"error: invalid config:\n{exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
