"""Truncated bosonic Fock space, Bose-Hubbard Hamiltonian, and the
total-number-blocked eigenbasis.

The lattice Hamiltonian is

    H = sum_i [ eps_i N_i + (U_i/2) N_i (N_i - 1) ]
        + sum_<i,j> J_ij (a_i^dag a_j + h.c.)

with bosonic site operators a_i truncated to at most ``n_max`` particles
per site and ``n_tot_max`` particles in total.  Everything downstream
(reservoir rates, the master-equation generator, currents) works in the
eigenbasis of H, grouped by total particle number, so this module also
rotates the site annihilation operators into that basis.

Units: hbar = 1; energies are quoted in units of the interaction U
unless a lattice says otherwise.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

# Guard against accidentally enormous Hilbert spaces (e.g. a typo'd n_max).
DIMENSION_CAP = 200_000

HERMITICITY_TOL = 1e-12
BLOCK_TOL = 1e-12


class BasisSizeError(ValueError):
    """Requested truncated Fock space exceeds the configured dimension cap."""


class DiagonalizationError(RuntimeError):
    """Eigensolver failure or a Hamiltonian that violates its preconditions."""


@dataclass(frozen=True)
class FockBasis:
    """Occupation-number basis, sorted by total particle number then
    lexicographically, with index maps in both directions."""

    num_sites: int
    n_max: int
    n_tot_max: int
    states: tuple[tuple[int, ...], ...]
    index: dict[tuple[int, ...], int] = field(repr=False)
    sector_slices: tuple[tuple[int, slice], ...] = field(repr=False)

    @property
    def dimension(self) -> int:
        return len(self.states)

    @property
    def sector_of(self) -> np.ndarray:
        """Total particle number of each basis state."""
        return np.array([sum(s) for s in self.states], dtype=int)

    def state_index(self, occ) -> int:
        return self.index[tuple(occ)]


def _count_states(num_sites: int, n_max: int, n_tot_max: int) -> int:
    # Coefficient sum of (1 + x + ... + x^n_max)^num_sites up to order n_tot_max.
    counts = np.zeros(n_tot_max + 1, dtype=object)
    counts[0] = 1
    for _ in range(num_sites):
        new = np.zeros_like(counts)
        for tot in range(n_tot_max + 1):
            if counts[tot]:
                for n in range(min(n_max, n_tot_max - tot) + 1):
                    new[tot + n] += counts[tot]
        counts = new
    return int(counts.sum())


def enumerate_basis(
    num_sites: int,
    n_max: int,
    n_tot_max: int,
    dimension_cap: int = DIMENSION_CAP,
) -> FockBasis:
    """Enumerate all occupation vectors with 0 <= n_i <= n_max and
    sum(n) <= n_tot_max, sector-sorted.

    Raises
    ------
    BasisSizeError
        If the resulting dimension exceeds ``dimension_cap``.
    """
    if num_sites < 1 or n_max < 1 or n_tot_max < 1:
        raise ValueError("num_sites, n_max and n_tot_max must all be >= 1")

    dim = _count_states(num_sites, n_max, n_tot_max)
    if dim > dimension_cap:
        raise BasisSizeError(
            f"truncated Fock space has dimension {dim} > cap {dimension_cap}"
        )

    states = [
        occ
        for occ in itertools.product(range(n_max + 1), repeat=num_sites)
        if sum(occ) <= n_tot_max
    ]
    states.sort(key=lambda s: (sum(s), s))

    index = {s: i for i, s in enumerate(states)}
    slices = []
    totals = [sum(s) for s in states]
    for n in sorted(set(totals)):
        lo = totals.index(n)
        hi = lo + totals.count(n)
        slices.append((n, slice(lo, hi)))

    return FockBasis(
        num_sites=num_sites,
        n_max=n_max,
        n_tot_max=n_tot_max,
        states=tuple(states),
        index=index,
        sector_slices=tuple(slices),
    )


@dataclass(frozen=True)
class LatticeSpec:
    """Site energies, on-site interactions and hopping amplitudes."""

    epsilon: tuple[float, ...]
    u: tuple[float, ...]
    hops: tuple[tuple[int, int, float], ...]

    def __post_init__(self):
        n = len(self.epsilon)
        if len(self.u) != n:
            raise ValueError("epsilon and u must have the same length")
        if any(ui <= 0 for ui in self.u):
            raise ValueError("all on-site interactions U_i must be > 0")
        seen = set()
        for i, j, _ in self.hops:
            if i == j:
                raise ValueError(f"hop ({i},{j}) connects a site to itself")
            if not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"hop ({i},{j}) out of range for {n} sites")
            pair = frozenset((i, j))
            if pair in seen:
                raise ValueError(f"duplicate hop between sites {i} and {j}")
            seen.add(pair)

    @property
    def num_sites(self) -> int:
        return len(self.epsilon)


@dataclass
class OperatorMatrix:
    """Dense operator with a tag recording which basis it lives in."""

    mat: np.ndarray
    basis_tag: str  # "fock" or "eigen"

    @property
    def dim(self) -> int:
        return self.mat.shape[0]

    def dagger(self) -> "OperatorMatrix":
        return OperatorMatrix(self.mat.conj().T, self.basis_tag)


def build_annihilation(basis: FockBasis, site: int) -> OperatorMatrix:
    """Bosonic annihilation operator for one site in the Fock basis.

    <..., n_site - 1, ...| a |..., n_site, ...> = sqrt(n_site).  Images
    that would leave the truncated basis simply do not appear, so the
    daggered matrix automatically truncates creation at the caps.
    """
    if not (0 <= site < basis.num_sites):
        raise ValueError(f"site {site} out of range for {basis.num_sites} sites")
    dim = basis.dimension
    mat = np.zeros((dim, dim), dtype=np.complex128)
    for col, occ in enumerate(basis.states):
        n = occ[site]
        if n == 0:
            continue
        target = list(occ)
        target[site] = n - 1
        row = basis.index[tuple(target)]
        mat[row, col] = np.sqrt(n)
    return OperatorMatrix(mat, "fock")


def build_hamiltonian(spec: LatticeSpec, basis: FockBasis) -> OperatorMatrix:
    """Bose-Hubbard Hamiltonian in the Fock basis.

    Block-diagonal in total particle number by construction; Hermitian to
    machine precision since the hopping amplitudes are real.
    """
    if spec.num_sites != basis.num_sites:
        raise ValueError("lattice site count does not match basis")
    dim = basis.dimension
    mat = np.zeros((dim, dim), dtype=np.complex128)

    occ = np.array(basis.states, dtype=float)
    diag = occ @ np.array(spec.epsilon) + 0.5 * (occ * (occ - 1.0)) @ np.array(spec.u)
    np.fill_diagonal(mat, diag)

    for i, j, jij in spec.hops:
        # a_i^dag a_j moves one particle from j to i; h.c. added explicitly.
        for col, state in enumerate(basis.states):
            if state[j] == 0 or state[i] >= basis.n_max:
                continue
            target = list(state)
            target[j] -= 1
            target[i] += 1
            row = basis.index.get(tuple(target))
            if row is None:
                continue
            amp = jij * np.sqrt(state[j] * (state[i] + 1))
            mat[row, col] += amp
            mat[col, row] += amp
    return OperatorMatrix(mat, "fock")


class EigenSystem:
    """Eigenbasis of the lattice Hamiltonian, assembled sector by sector.

    Attributes
    ----------
    energies : (D,) real eigenvalues, grouped by total particle number
        (ascending within each sector).
    vectors : (D, D) change of basis; columns are eigenvectors in the
        Fock basis.  Block-diagonal over number sectors.
    sector_of : (D,) total particle number of each eigenstate.
    site_ops : per-site annihilation operators in the eigenbasis; by
        construction they only connect sectors differing by one.
    """

    def __init__(self, basis: FockBasis, energies, vectors, sector_of, site_ops):
        self.basis = basis
        self.energies = np.asarray(energies, dtype=float)
        self.vectors = np.asarray(vectors)
        self.sector_of = np.asarray(sector_of, dtype=int)
        self.site_ops = tuple(site_ops)
        self.sector_slices = basis.sector_slices

    @property
    def dimension(self) -> int:
        return self.energies.size

    def omega_matrix(self) -> np.ndarray:
        """Transition frequencies omega[a, b] = E_a - E_b (hbar = 1)."""
        e = self.energies
        return e[:, None] - e[None, :]


def diagonalize(
    H: OperatorMatrix,
    basis: FockBasis,
    site_ops: list[OperatorMatrix],
) -> EigenSystem:
    """Dense per-sector Hermitian eigendecomposition.

    The site annihilation operators are rotated blockwise, which enforces
    the selection rule (entries only between sectors differing by one)
    exactly rather than to rounding error.
    """
    mat = H.mat
    dim = basis.dimension
    herm = np.linalg.norm(mat - mat.conj().T)
    if herm > HERMITICITY_TOL * max(1.0, np.linalg.norm(mat)):
        raise DiagonalizationError(f"Hamiltonian is not Hermitian (defect {herm:.3e})")

    block_mask = np.zeros((dim, dim), dtype=bool)
    for _, sl in basis.sector_slices:
        block_mask[sl, sl] = True
    off = np.linalg.norm(mat[~block_mask])
    if off > BLOCK_TOL * max(1.0, np.linalg.norm(mat)):
        raise DiagonalizationError(
            f"Hamiltonian couples different number sectors (norm {off:.3e})"
        )

    energies = np.zeros(dim)
    vectors = np.zeros((dim, dim), dtype=np.complex128)
    sector_of = np.zeros(dim, dtype=int)
    sector_vecs = {}
    for n, sl in basis.sector_slices:
        block = np.asarray(mat[sl, sl])
        try:
            evals, evecs = np.linalg.eigh(block)
        except np.linalg.LinAlgError as exc:  # pragma: no cover
            raise DiagonalizationError(f"eigh failed on sector N={n}: {exc}") from exc
        energies[sl] = evals
        vectors[sl, sl] = evecs
        sector_of[sl] = n
        sector_vecs[n] = evecs

    rotated = []
    for op in site_ops:
        a_eig = np.zeros((dim, dim), dtype=np.complex128)
        for n, sl in basis.sector_slices:
            if n - 1 not in sector_vecs:
                continue
            sl_lo = dict(basis.sector_slices)[n - 1]
            block = op.mat[sl_lo, sl]
            a_eig[sl_lo, sl] = sector_vecs[n - 1].conj().T @ block @ sector_vecs[n]
        rotated.append(a_eig)

    return EigenSystem(basis, energies, vectors, sector_of, rotated)


def build_system(spec: LatticeSpec, n_max: int, n_tot_max: int) -> EigenSystem:
    """Convenience pipeline: basis, Hamiltonian, site operators, eigenbasis."""
    basis = enumerate_basis(spec.num_sites, n_max, n_tot_max)
    ops = [build_annihilation(basis, q) for q in range(spec.num_sites)]
    H = build_hamiltonian(spec, basis)
    return diagonalize(H, basis, ops)
