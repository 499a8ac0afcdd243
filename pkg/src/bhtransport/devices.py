"""Catalog of lattice devices (wire, diode, FET, BJT, AND gate) and the
chemical-potential sweep engine.

All devices share the convention hbar = 1 and quote energies in units of
the on-site interaction U.  Default couplings follow the standard
operating points: the weakly-coupled wire uses Gamma0 = 1e-6 U, every
other device 1e-2 U.  Reported currents are normalized to the device's
reference coupling Gamma0; swept chemical potentials are reported as
(mu - mu_ref)/U, where mu_ref is the device's resonance/threshold
reference (recorded in the result).
"""

from __future__ import annotations

import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .fock import EigenSystem, LatticeSpec, build_system
from .master import Liouvillian, NegativityWarning, assemble_liouvillian, steady_state
from .observables import current_matrix, mean_current
from .reservoir import ReservoirSpec, gamma_matrices

SECULAR_SIZE_LIMIT = 4096  # packed full-space sizes beyond this default to secular


class DeviceError(ValueError):
    """Invalid device description."""


@dataclass(frozen=True)
class DeviceSpec:
    """A lattice, its reservoirs, and basis truncation parameters."""

    name: str
    lattice: LatticeSpec
    reservoirs: tuple[ReservoirSpec, ...]
    n_max: int
    n_tot_max: int
    gamma0_ref: float
    mu_ref: float
    u_ref: float
    j_ref: float
    default_mode: str = "full"
    gap_threshold_j: float = 10.0

    def __post_init__(self):
        if len(self.reservoirs) < 2:
            raise DeviceError("a device needs at least two reservoirs")
        ids = [r.rid for r in self.reservoirs]
        if len(set(ids)) != len(ids):
            raise DeviceError(f"duplicate reservoir ids {ids}")
        for r in self.reservoirs:
            if not (0 <= r.site < self.lattice.num_sites):
                raise DeviceError(f"reservoir {r.rid} attaches to missing site {r.site}")

    @property
    def reservoir_ids(self) -> tuple[str, ...]:
        return tuple(r.rid for r in self.reservoirs)

    def reservoir(self, rid: str) -> ReservoirSpec:
        for r in self.reservoirs:
            if r.rid == rid:
                return r
        raise DeviceError(f"no reservoir with id {rid!r}")

    def with_mu(self, levels: dict[str, float]) -> "DeviceSpec":
        unknown = set(levels) - set(self.reservoir_ids)
        if unknown:
            raise DeviceError(f"unknown reservoir ids {sorted(unknown)}")
        new = tuple(
            r.replace(mu=levels[r.rid]) if r.rid in levels else r for r in self.reservoirs
        )
        return replace(self, reservoirs=new)

    def with_site_energy(self, site: int, eps: float) -> "DeviceSpec":
        if not (0 <= site < self.lattice.num_sites):
            raise DeviceError(f"site {site} out of range")
        new_eps = list(self.lattice.epsilon)
        new_eps[site] = eps
        lat = LatticeSpec(tuple(new_eps), self.lattice.u, self.lattice.hops)
        return replace(self, lattice=lat)


def _chain_hops(n: int, j: float):
    return tuple((i, i + 1, j) for i in range(n - 1))


def _cutoff(eps_list, u_list) -> float:
    return max(eps_list) + 10.0 * max(u_list)


def make_wire(num_sites: int, eps: float = 3.0, u: float = 1.0, j: float = 0.03,
              gamma0: float = 1e-6, n_max: int | None = None,
              n_tot_max: int | None = None) -> DeviceSpec:
    """Energetically flat chain with uniform hopping; reservoirs on the
    first and last sites."""
    if num_sites < 1:
        raise DeviceError("wire needs at least one site")
    if n_max is None:
        n_max = 3 if num_sites <= 2 else 2
    if n_tot_max is None:
        n_tot_max = num_sites * n_max
    lat = LatticeSpec((eps,) * num_sites, (u,) * num_sites, _chain_hops(num_sites, j))
    wc = _cutoff(lat.epsilon, lat.u)
    right_site = max(num_sites - 1, 0)
    reservoirs = (
        ReservoirSpec(site=0, mu=0.0, gamma0=gamma0, omega_c=wc, rid="L"),
        ReservoirSpec(site=right_site, mu=0.0, gamma0=gamma0, omega_c=wc, rid="R"),
    )
    return DeviceSpec(
        name=f"wire{num_sites}", lattice=lat, reservoirs=reservoirs,
        n_max=n_max, n_tot_max=n_tot_max, gamma0_ref=gamma0,
        mu_ref=eps, u_ref=u, j_ref=j,
    )


def make_diode(num_sites: int, eps: float = 3.0, u: float = 1.0, j: float = 0.03,
               gamma0: float = 1e-2, delta_eps: float | None = None,
               n_max: int | None = None, n_tot_max: int | None = None) -> DeviceSpec:
    """Two connected flat half-lattices with the right half raised by
    delta_eps (default U, the resonance condition)."""
    if num_sites < 2 or num_sites % 2:
        raise DeviceError("diode needs an even number of sites >= 2")
    if delta_eps is None:
        delta_eps = u
    if n_max is None:
        n_max = 3 if num_sites <= 2 else 2
    if n_tot_max is None:
        n_tot_max = num_sites * n_max
    half = num_sites // 2
    eps_list = (eps,) * half + (eps + delta_eps,) * half
    lat = LatticeSpec(eps_list, (u,) * num_sites, _chain_hops(num_sites, j))
    wc = _cutoff(lat.epsilon, lat.u)
    reservoirs = (
        ReservoirSpec(site=0, mu=0.0, gamma0=gamma0, omega_c=wc, rid="L"),
        ReservoirSpec(site=num_sites - 1, mu=0.0, gamma0=gamma0, omega_c=wc, rid="R"),
    )
    return DeviceSpec(
        name=f"diode{num_sites}", lattice=lat, reservoirs=reservoirs,
        n_max=n_max, n_tot_max=n_tot_max, gamma0_ref=gamma0,
        mu_ref=eps + delta_eps, u_ref=u, j_ref=j,
    )


def make_fet(detuning_j: float = 0.0, eps: float = 3.0, u: float = 1.0,
             j: float = 0.03, gamma0: float = 1e-2,
             n_max: int | None = None, n_tot_max: int | None = None) -> DeviceSpec:
    """Two-site diode with the second site raised past resonance by
    ``detuning_j`` in units of J."""
    dev = make_diode(2, eps=eps, u=u, j=j, gamma0=gamma0,
                     delta_eps=u + detuning_j * j, n_max=n_max, n_tot_max=n_tot_max)
    return replace(dev, name="fet", mu_ref=eps + u)


def make_bjt(base_coupling_ratio: float = 0.2, eps: float = 3.0, u: float = 1.0,
             j: float = 0.03, gamma0: float = 1e-2,
             n_max: int | None = None, n_tot_max: int | None = None) -> DeviceSpec:
    """Three sites with the outer (collector/emitter) sites raised above
    the middle (base) site by U; three reservoirs, the base one coupled
    ``base_coupling_ratio`` times as strongly.

    The collector reservoir is pinned midway between the one- and
    two-particle addition energies of its site (keeps one particle on the
    collector); the emitter is empty; the base level is the natural sweep
    parameter.
    """
    if base_coupling_ratio <= 0:
        raise DeviceError("base_coupling_ratio must be > 0")
    if n_max is None:
        n_max = 2
    if n_tot_max is None:
        n_tot_max = 3 * n_max
    lat = LatticeSpec((eps, eps - u, eps), (u,) * 3, _chain_hops(3, j))
    wc = _cutoff(lat.epsilon, lat.u)
    reservoirs = (
        ReservoirSpec(site=0, mu=eps + 0.5 * u, gamma0=gamma0, omega_c=wc, rid="L"),
        ReservoirSpec(site=1, mu=0.0, gamma0=base_coupling_ratio * gamma0, omega_c=wc, rid="M"),
        ReservoirSpec(site=2, mu=0.0, gamma0=gamma0, omega_c=wc, rid="R"),
    )
    return DeviceSpec(
        name="bjt", lattice=lat, reservoirs=reservoirs,
        n_max=n_max, n_tot_max=n_tot_max, gamma0_ref=gamma0,
        mu_ref=eps - u, u_ref=u, j_ref=j,
    )


def make_and_gate(input_a_on: bool = False, input_b_on: bool = False,
                  on_level: float = 3.2, off_level: float = 0.0,
                  base_coupling_ratio: float = 0.2, eps: float = 4.0,
                  u: float = 1.0, j: float = 0.03, gamma0: float = 1e-2,
                  n_max: int | None = None, n_tot_max: int | None = None) -> DeviceSpec:
    """Two BJT blocks cascaded into one six-site chain.

    Site energies (eps, eps-U, eps, eps, eps-U, eps); bias reservoirs on
    the outer sites, input (base) reservoirs on sites 2 and 5.  The input
    levels are chemical potentials in units of U (on: 3.2, off: 0); the
    default eps places the base sites at 3U so the on level sits inside
    their single-occupancy window (3U, 4U).  With base sites at 2U the on
    level would overfill them and the input reservoirs would pump straight
    into the output.  Defaults to the secular-reduced generator; the full
    one is infeasible at this size.
    """
    if n_max is None:
        n_max = 2
    if n_tot_max is None:
        n_tot_max = 4
    lat = LatticeSpec(
        (eps, eps - u, eps, eps, eps - u, eps), (u,) * 6, _chain_hops(6, j)
    )
    wc = _cutoff(lat.epsilon, lat.u)
    mu_a = (on_level if input_a_on else off_level) * u
    mu_b = (on_level if input_b_on else off_level) * u
    reservoirs = (
        ReservoirSpec(site=0, mu=eps + 0.5 * u, gamma0=gamma0, omega_c=wc, rid="L"),
        ReservoirSpec(site=1, mu=mu_a, gamma0=base_coupling_ratio * gamma0, omega_c=wc, rid="A"),
        ReservoirSpec(site=4, mu=mu_b, gamma0=base_coupling_ratio * gamma0, omega_c=wc, rid="B"),
        ReservoirSpec(site=5, mu=0.0, gamma0=gamma0, omega_c=wc, rid="R"),
    )
    return DeviceSpec(
        name="and_gate", lattice=lat, reservoirs=reservoirs,
        n_max=n_max, n_tot_max=n_tot_max, gamma0_ref=gamma0,
        mu_ref=0.0, u_ref=u, j_ref=j, default_mode="secular",
    )


# ---------------------------------------------------------------------------
# sweep engine


@dataclass(frozen=True)
class SweepSpec:
    """Swept parameter path and grid.

    ``param`` is "mu:<reservoir id>" (e.g. "mu:L", shorthand "muL") or
    "eps:<site index>" (shorthand "eps0").
    """

    param: str
    values: tuple[float, ...]

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.size < 2:
            raise DeviceError("sweep needs at least 2 grid points")
        d = np.diff(v)
        if not (np.all(d > 0) or np.all(d < 0)):
            raise DeviceError("sweep grid must be strictly monotone")

    @staticmethod
    def linspace(param: str, lo: float, hi: float, n: int) -> "SweepSpec":
        return SweepSpec(param, tuple(np.linspace(lo, hi, n)))


def parse_sweep_param(param: str) -> tuple[str, str]:
    """Normalize 'muL' / 'mu:L' / 'eps0' / 'eps:0' to a (kind, key) pair."""
    p = param.strip()
    if ":" in p:
        kind, key = p.split(":", 1)
    elif p.startswith("mu"):
        kind, key = "mu", p[2:]
    elif p.startswith("eps"):
        kind, key = "eps", p[3:]
    else:
        raise DeviceError(f"cannot parse sweep parameter {param!r}")
    kind = kind.strip()
    key = key.strip()
    if kind not in ("mu", "eps") or not key:
        raise DeviceError(f"cannot parse sweep parameter {param!r}")
    return kind, key


@dataclass
class SweepPoint:
    value: float
    value_normalized: float
    currents: dict[str, float]  # units of gamma0_ref
    residual: float | None
    sigma_min_eig: float | None
    ok: bool
    error: str = ""


@dataclass
class SweepResult:
    device: DeviceSpec
    param: str
    points: list[SweepPoint]
    dimension: int
    packed_dimension: int
    mode: str
    wall_time: float
    failures: int = field(init=False)

    def __post_init__(self):
        self.failures = sum(0 if p.ok else 1 for p in self.points)

    def currents_of(self, rid: str) -> np.ndarray:
        return np.array([p.currents.get(rid, np.nan) for p in self.points])

    @property
    def values(self) -> np.ndarray:
        return np.array([p.value for p in self.points])

    @property
    def values_normalized(self) -> np.ndarray:
        return np.array([p.value_normalized for p in self.points])


def resolve_mode(device: DeviceSpec, eig: EigenSystem, mode: str) -> str:
    if mode not in ("auto", "full", "secular"):
        raise DeviceError(f"unknown solver mode {mode!r}")
    if mode != "auto":
        return mode
    if device.default_mode == "secular":
        return "secular"
    size = sum((sl.stop - sl.start) ** 2 for _, sl in eig.sector_slices)
    return "secular" if size > SECULAR_SIZE_LIMIT else "full"


def build_eigensystem(device: DeviceSpec) -> EigenSystem:
    return build_system(device.lattice, device.n_max, device.n_tot_max)


def assemble_for(device: DeviceSpec, eig: EigenSystem, mode: str = "auto") -> Liouvillian:
    mode = resolve_mode(device, eig, mode)
    rates = [gamma_matrices(r, eig) for r in device.reservoirs]
    threshold = device.gap_threshold_j * device.j_ref if mode == "secular" else math.inf
    return assemble_liouvillian(eig, rates, mode=mode, gap_threshold=threshold)


def solve_point(device: DeviceSpec, eig: EigenSystem, mode: str = "auto"):
    """Steady state plus per-reservoir currents (units of gamma0_ref)."""
    L = assemble_for(device, eig, mode)
    sigma = steady_state(L)
    currents = {}
    for r, rm in zip(device.reservoirs, (ch.rates for ch in L.channels)):
        J = current_matrix(r, rm, eig)
        currents[r.rid] = mean_current(J, sigma) / device.gamma0_ref
    return sigma, currents, L


def sweep(device: DeviceSpec, spec: SweepSpec, mode: str = "auto", threads: int = 1) -> SweepResult:
    """Steady-state currents along the sweep grid.

    Points are independent; failures are recorded per point and the sweep
    continues.  Results are ordered by grid index regardless of the
    worker pool; identical inputs give identical outputs.
    """
    kind, key = parse_sweep_param(spec.param)
    if kind == "mu":
        device.reservoir(key)  # validate id
        base_eig = build_eigensystem(device)
    else:
        site = int(key)
        if not (0 <= site < device.lattice.num_sites):
            raise DeviceError(f"sweep site {site} out of range")
        base_eig = None

    t0 = time.perf_counter()
    resolved_mode = None
    dim = packed = 0

    def run_one(value: float) -> SweepPoint:
        nonlocal resolved_mode, dim, packed
        if kind == "mu":
            dev_i = device.with_mu({key: value})
            eig = base_eig
            norm = (value - device.mu_ref) / device.u_ref
        else:
            dev_i = device.with_site_energy(int(key), value)
            eig = build_eigensystem(dev_i)
            norm = value / device.u_ref
        try:
            L = assemble_for(dev_i, eig, mode)
            with warnings.catch_warnings():
                # tolerated negativity is recorded in sigma_min_eig per point
                warnings.simplefilter("ignore", NegativityWarning)
                sigma = steady_state(L)
            currents = {}
            for r, chan in zip(dev_i.reservoirs, L.channels):
                J = current_matrix(r, chan.rates, eig)
                currents[r.rid] = mean_current(J, sigma) / device.gamma0_ref
            lam_min = float(
                np.linalg.eigvalsh(0.5 * (sigma.mat + sigma.mat.conj().T)).min()
            )
            resolved_mode = L.mode
            dim = eig.dimension
            packed = L.block_structure().size
            return SweepPoint(
                value=value, value_normalized=norm, currents=currents,
                residual=sigma.residual, sigma_min_eig=lam_min, ok=True,
            )
        except Exception as exc:  # per-point failure: record, keep sweeping
            return SweepPoint(
                value=value, value_normalized=norm, currents={},
                residual=None, sigma_min_eig=None, ok=False, error=str(exc),
            )

    values = list(spec.values)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            points = list(pool.map(run_one, values))
    else:
        points = [run_one(v) for v in values]

    return SweepResult(
        device=device, param=spec.param, points=points,
        dimension=dim, packed_dimension=packed,
        mode=resolved_mode or mode, wall_time=time.perf_counter() - t0,
    )


# ---------------------------------------------------------------------------
# AND-gate truth table

TRUTH_TABLE_INPUTS = ((False, False), (True, False), (False, True), (True, True))


@dataclass
class TruthTableRow:
    input_a: float
    input_b: float
    output_current: float  # units of gamma0_ref
    output_normalized: float


@dataclass
class TruthTable:
    rows: list[TruthTableRow]
    on_level: float
    off_level: float
    min_on_off_ratio: float
    mode: str


def truth_table(on_level: float = 3.2, off_level: float = 0.0, mode: str = "auto",
                output_reservoir: str = "R", **gate_kwargs) -> TruthTable:
    """Run the four input combinations of the AND gate and normalize the
    output current to the maximal row."""
    raw = []
    used_mode = mode
    for a_on, b_on in TRUTH_TABLE_INPUTS:
        dev = make_and_gate(a_on, b_on, on_level=on_level, off_level=off_level, **gate_kwargs)
        eig = build_eigensystem(dev)
        L = assemble_for(dev, eig, mode)
        used_mode = L.mode
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NegativityWarning)
            sigma = steady_state(L)
        chan = {c.res.rid: c for c in L.channels}[output_reservoir]
        J = current_matrix(chan.res, chan.rates, eig)
        raw.append(mean_current(J, sigma) / dev.gamma0_ref)
    peak = max(raw)
    if peak <= 0:
        raise DeviceError("AND gate produced no positive output current")
    rows = []
    for (a_on, b_on), cur in zip(TRUTH_TABLE_INPUTS, raw):
        rows.append(
            TruthTableRow(
                input_a=on_level if a_on else off_level,
                input_b=on_level if b_on else off_level,
                output_current=cur,
                output_normalized=cur / peak,
            )
        )
    off_max = max(abs(r.output_normalized) for r in rows[:-1])
    ratio = math.inf if off_max == 0 else 1.0 / off_max
    return TruthTable(rows=rows, on_level=on_level, off_level=off_level,
                      min_on_off_ratio=ratio, mode=used_mode)


# ---------------------------------------------------------------------------
# catalog

CATALOG = {
    "wire1": (lambda **kw: make_wire(1, **kw), "single site between two reservoirs"),
    "wire2": (lambda **kw: make_wire(2, **kw), "two-site flat wire (weak coupling)"),
    "wire3": (lambda **kw: make_wire(3, **kw), "three-site flat wire"),
    "diode2": (lambda **kw: make_diode(2, **kw), "two-site diode at the resonance condition"),
    "diode4": (lambda **kw: make_diode(4, **kw), "four-site diode (two flat halves)"),
    "fet": (make_fet, "two-site diode with tunable detuning past resonance"),
    "bjt": (make_bjt, "three-site transistor with weakly coupled base"),
    "and_gate": (make_and_gate, "two cascaded transistors forming an AND gate"),
}

ALIASES = {"wire": "wire2", "diode": "diode2", "and": "and_gate"}


def get_device(name: str, **overrides) -> DeviceSpec:
    key = ALIASES.get(name, name)
    if key not in CATALOG:
        raise DeviceError(f"unknown device {name!r}; known: {sorted(CATALOG)}")
    builder, _ = CATALOG[key]
    return builder(**overrides)


def list_devices() -> list[dict]:
    out = []
    for name, (builder, desc) in CATALOG.items():
        dev = builder()
        out.append(
            {
                "name": name,
                "description": desc,
                "num_sites": dev.lattice.num_sites,
                "reservoirs": list(dev.reservoir_ids),
                "gamma0": dev.gamma0_ref,
                "n_max": dev.n_max,
                "n_tot_max": dev.n_tot_max,
                "default_mode": dev.default_mode,
            }
        )
    return out


def convergence_check(device: DeviceSpec, mu_levels: dict[str, float], rid: str,
                      mode: str = "auto") -> float:
    """Relative change of the ``rid`` current when n_max is raised by one
    (truncation convergence diagnostic)."""
    dev = device.with_mu(mu_levels)
    base = solve_point(dev, build_eigensystem(dev), mode)[1][rid]
    bumped = replace(
        dev, n_max=device.n_max + 1, n_tot_max=device.n_tot_max + device.lattice.num_sites
    )
    big = solve_point(bumped, build_eigensystem(bumped), mode)[1][rid]
    scale = max(abs(base), abs(big), 1e-30)
    return abs(big - base) / scale
