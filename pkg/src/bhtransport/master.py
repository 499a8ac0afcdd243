"""Master-equation generator in the lattice eigenbasis, steady states and
time evolution.

For each reservoir the generator carries eight dissipative terms built
from the rate matrices contracted elementwise with the eigenbasis matrix
elements of the attachment-site operator (writing A for <a_q>, Ad for
<a_q^dag>, and X*Y for the elementwise product):

    d(sigma)/dt = -i[H, sigma]
        - 1/2 * sum_res [ (Ad@AOm + A@DIp) sigma + sigma (AIm@Ad + DOp@A)
                          - AOm sigma Ad - Ad sigma AIm
                          - DIp sigma A  - A  sigma DOp ]

    AOm = GammaOut_minus * A     AIm = GammaIn_minus * A
    DIp = GammaIn_plus   * Ad    DOp = GammaOut_plus * Ad

The generator annihilates the trace and preserves Hermiticity exactly
(the "+" rate matrices are the conjugate transposes of the "-" ones),
and it never couples coherences between different total-number sectors
to the number-diagonal part.  Steady states are therefore solved on the
number-diagonal subspace (all cross-sector coherences decay
autonomously to zero); the reported residual is evaluated with the full
generator action.

Vectorization is column-stacking within each number block; the packed
layout is documented on :class:`BlockStructure`.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import solve_ivp

from .fock import EigenSystem
from .reservoir import RateMatrices

DENSE_SOLVE_CAP = 4096
HARD_SOLVE_CAP = 14000
EXPM_STEP_CAP = 2048

# Zero-temperature hard-edged reservoirs make the steady state genuinely
# non-positive at order gamma0 (up to a few gamma0 when a threshold sits
# within eta of a transition); tolerate that scale by default and record
# the actual value as a diagnostic.
NEG_TOL_PER_GAMMA = 25.0


class SteadyStateError(RuntimeError):
    """Steady-state solve failed (residual above tolerance, etc.)."""


class DegenerateSteadyStateError(SteadyStateError):
    """The generator has more than one steady state."""

    def __init__(self, null_dim: int):
        super().__init__(f"steady state is not unique (estimated null dimension {null_dim})")
        self.null_dim = null_dim


class EvolutionError(RuntimeError):
    """Adaptive integration failed or lost the trace."""


class NegativityWarning(UserWarning):
    """Steady state carries small but tolerated negative eigenvalues."""


@dataclass
class DensityMatrix:
    """Density matrix in the eigenbasis, with solver diagnostics attached."""

    mat: np.ndarray
    basis_tag: str = "eigen"
    residual: float | None = None
    relative_residual: float | None = None

    @property
    def dim(self) -> int:
        return self.mat.shape[0]

    @property
    def trace(self) -> float:
        return float(np.real(np.trace(self.mat)))

    def validate(self, herm_tol=1e-10, trace_tol=1e-10, neg_tol=1e-8, warn_tol=1e-12):
        """Hermiticity, unit trace, and near-positivity.

        Small negative eigenvalues in (-neg_tol, -warn_tol] only warn:
        Redfield-type generators are not completely positive and may
        produce harmless transients of that size.  Anything worse raises.
        """
        h = np.linalg.norm(self.mat - self.mat.conj().T)
        if h > herm_tol * max(1.0, np.linalg.norm(self.mat)):
            raise SteadyStateError(f"density matrix not Hermitian (defect {h:.3e})")
        if abs(self.trace - 1.0) > trace_tol:
            raise SteadyStateError(f"trace {self.trace} != 1")
        lam_min = float(np.linalg.eigvalsh(0.5 * (self.mat + self.mat.conj().T)).min())
        if lam_min < -neg_tol:
            raise SteadyStateError(f"negative eigenvalue {lam_min:.3e} beyond tolerance")
        if lam_min < -warn_tol:
            warnings.warn(
                f"density matrix has small negative eigenvalue {lam_min:.3e}",
                NegativityWarning,
                stacklevel=2,
            )
        return self


class _Channel:
    """Per-reservoir operator products entering the generator."""

    def __init__(self, rates: RateMatrices, eig: EigenSystem):
        if rates.dim != eig.dimension:
            raise ValueError("rate matrices do not match eigensystem dimension")
        site = rates.res.site
        if not (0 <= site < len(eig.site_ops)):
            raise ValueError(f"reservoir attachment site {site} not in lattice")
        self.res = rates.res
        self.rates = rates
        A = eig.site_ops[site]
        Ad = A.conj().T
        self.A = A
        self.Ad = Ad
        self.AOm = rates.out_minus * A
        self.AIm = rates.in_minus * A
        self.DIp = rates.in_plus * Ad
        self.DOp = rates.out_plus * Ad
        self.left = Ad @ self.AOm + A @ self.DIp
        self.right = self.AIm @ Ad + self.DOp @ A


@dataclass
class BlockStructure:
    """Packed layout of the number-diagonal subspace.

    Kept matrix elements of each diagonal number block are listed
    column-major; ``rows[k]``/``cols[k]`` hold their local indices within
    sector k and ``offsets[k]`` the packed start.  In full mode every
    element of every block is kept; in secular mode only populations and
    coherences between eigenstates closer than the gap threshold.
    """

    sectors: list
    rows: list
    cols: list
    offsets: list
    size: int
    diag_positions: np.ndarray

    def pack(self, sigma: np.ndarray) -> np.ndarray:
        out = np.empty(self.size, dtype=np.complex128)
        for k, (_, sl) in enumerate(self.sectors):
            blk = sigma[sl, sl]
            out[self.offsets[k] : self.offsets[k] + len(self.rows[k])] = blk[
                self.rows[k], self.cols[k]
            ]
        return out

    def unpack(self, packed: np.ndarray, dim: int) -> np.ndarray:
        sigma = np.zeros((dim, dim), dtype=np.complex128)
        for k, (_, sl) in enumerate(self.sectors):
            blk = np.zeros((sl.stop - sl.start,) * 2, dtype=np.complex128)
            blk[self.rows[k], self.cols[k]] = packed[
                self.offsets[k] : self.offsets[k] + len(self.rows[k])
            ]
            sigma[sl, sl] = blk
        return sigma


class Liouvillian:
    """Generator of the master equation as a linear operator on density
    matrices, with a packed materialization on the number-diagonal
    subspace for steady-state work.

    ``mode`` is "full" or "secular"; in secular mode couplings to
    coherences between eigenstates separated by at least ``gap_threshold``
    are zeroed and those coherences keep only their free rotation.
    """

    def __init__(self, eig: EigenSystem, rates: list[RateMatrices], mode="full", gap_threshold=math.inf):
        self.eig = eig
        self.dim = eig.dimension
        self.mode = mode
        self.gap_threshold = float(gap_threshold)
        self.channels = [_Channel(r, eig) for r in rates]
        self.omega = eig.omega_matrix()
        if mode == "secular" and math.isfinite(self.gap_threshold):
            self._mask = (np.abs(self.omega) < self.gap_threshold) | np.eye(self.dim, dtype=bool)
        else:
            self._mask = None  # full: keep everything
        self._block = None
        self._block_matrix = None
        self._norm2 = None

    @property
    def reservoir_ids(self):
        return [ch.res.rid for ch in self.channels]

    # -- full-space action ------------------------------------------------

    def apply(self, sigma: np.ndarray) -> np.ndarray:
        """Generator action on a (D, D) matrix."""
        sigma = np.asarray(sigma, dtype=np.complex128)
        if self._mask is None:
            sig = sigma
        else:
            sig = sigma * self._mask
        out = -1j * self.omega * sig
        for ch in self.channels:
            out -= 0.5 * (
                ch.left @ sig
                + sig @ ch.right
                - ch.AOm @ sig @ ch.Ad
                - ch.Ad @ sig @ ch.AIm
                - ch.DIp @ sig @ ch.A
                - ch.A @ sig @ ch.DOp
            )
        if self._mask is not None:
            out = out * self._mask + (-1j * self.omega * sigma) * (~self._mask)
        return out

    # -- packed representation --------------------------------------------

    def block_structure(self) -> BlockStructure:
        if self._block is not None:
            return self._block
        sectors = list(self.eig.sector_slices)
        rows, cols, offsets = [], [], []
        diag_pos = []
        off = 0
        for _, sl in sectors:
            d = sl.stop - sl.start
            cc, rr = np.meshgrid(np.arange(d), np.arange(d), indexing="ij")
            # column-major ordering: (a, b) pairs with b outermost
            r = rr.T.ravel()
            c = cc.T.ravel()
            if self._mask is not None:
                keep = self._mask[sl, sl][r, c]
                r, c = r[keep], c[keep]
            rows.append(r)
            cols.append(c)
            offsets.append(off)
            diag_pos.extend(off + np.flatnonzero(r == c))
            off += r.size
        self._block = BlockStructure(
            sectors=sectors,
            rows=rows,
            cols=cols,
            offsets=offsets,
            size=off,
            diag_positions=np.asarray(diag_pos, dtype=int),
        )
        return self._block

    def block_matrix(self) -> np.ndarray:
        """Dense generator on the packed number-diagonal subspace."""
        if self._block_matrix is not None:
            return self._block_matrix
        bs = self.block_structure()
        if bs.size > HARD_SOLVE_CAP:
            raise SteadyStateError(
                f"packed generator dimension {bs.size} exceeds cap {HARD_SOLVE_CAP}; "
                "use secular mode or a tighter particle-number truncation"
            )
        K = np.zeros((bs.size, bs.size), dtype=np.complex128)
        energies = self.eig.energies

        for k, (_, sl) in enumerate(bs.sectors):
            r, c = bs.rows[k], bs.cols[k]
            o = bs.offsets[k]
            n_pairs = r.size
            e_loc = energies[sl]
            # free rotation -i * omega_ab on the diagonal
            K[o + np.arange(n_pairs), o + np.arange(n_pairs)] += -1j * (
                e_loc[r] - e_loc[c]
            )

            left = sum(ch.left[sl, sl] for ch in self.channels)
            right = sum(ch.right[sl, sl] for ch in self.channels)
            # -1/2 left@sigma couples pairs sharing the column index,
            # -1/2 sigma@right couples pairs sharing the row index
            col_match = c[:, None] == c[None, :]
            row_match = r[:, None] == r[None, :]
            K[o : o + n_pairs, o : o + n_pairs] += -0.5 * left[np.ix_(r, r)] * col_match
            K[o : o + n_pairs, o : o + n_pairs] += -0.5 * right.T[np.ix_(c, c)] * row_match

        # sandwich terms shift between adjacent sectors
        sec_index = {n: k for k, (n, _) in enumerate(bs.sectors)}
        for k, (n, sl) in enumerate(bs.sectors):
            lo = sec_index.get(n - 1)
            hi = sec_index.get(n + 1)
            r, c = bs.rows[k], bs.cols[k]
            o = bs.offsets[k]
            if lo is not None:
                _, sll = bs.sectors[lo]
                rl, cl = bs.rows[lo], bs.cols[lo]
                ol = bs.offsets[lo]
                for chan in self.channels:
                    AOm = chan.AOm[sll, sl]
                    A = chan.A[sll, sl]
                    DOp = chan.DOp[sl, sll]
                    W = 0.5 * (
                        AOm[np.ix_(rl, r)] * np.conj(A[np.ix_(cl, c)])
                        + A[np.ix_(rl, r)] * DOp.T[np.ix_(cl, c)]
                    )
                    K[ol : ol + rl.size, o : o + r.size] += W
            if hi is not None:
                _, slh = bs.sectors[hi]
                rh, ch_ = bs.rows[hi], bs.cols[hi]
                oh = bs.offsets[hi]
                for chan in self.channels:
                    Ad = chan.Ad[slh, sl]
                    AIm = chan.AIm[sl, slh]
                    DIp = chan.DIp[slh, sl]
                    Aup = chan.A[sl, slh]
                    W = 0.5 * (
                        Ad[np.ix_(rh, r)] * AIm.T[np.ix_(ch_, c)]
                        + DIp[np.ix_(rh, r)] * Aup.T[np.ix_(ch_, c)]
                    )
                    K[oh : oh + rh.size, o : o + r.size] += W
        self._block_matrix = K
        return K

    def norm2_estimate(self, iters: int = 20) -> float:
        """Deterministic power-iteration estimate of the spectral norm."""
        if self._norm2 is not None:
            return self._norm2
        M = self.block_matrix()
        v = np.ones(M.shape[0], dtype=np.complex128)
        v /= np.linalg.norm(v)
        s = 0.0
        for _ in range(iters):
            w = M.conj().T @ (M @ v)
            nw = np.linalg.norm(w)
            if nw == 0.0:
                break
            s = math.sqrt(nw)
            v = w / nw
        self._norm2 = max(s, 1e-300)
        return self._norm2

    def propagate_packed(self, x0: np.ndarray, tau_grid: np.ndarray) -> np.ndarray:
        """Propagate a packed vector along tau_grid with matrix-exponential
        steps (exact at the grid points for this generator)."""
        M = self.block_matrix()
        if M.shape[0] > EXPM_STEP_CAP:
            raise EvolutionError(
                f"packed dimension {M.shape[0]} too large for exponential stepping"
            )
        tau_grid = np.asarray(tau_grid, dtype=float)
        out = np.empty((tau_grid.size, x0.size), dtype=np.complex128)
        steps = np.diff(tau_grid)
        props = {}
        x = x0.astype(np.complex128)
        if tau_grid[0] != 0.0:
            x = sla.expm(M * tau_grid[0]) @ x
        out[0] = x
        for i, dt in enumerate(steps):
            key = round(float(dt), 15)
            if key not in props:
                props[key] = sla.expm(M * dt)
            x = props[key] @ x
            out[i + 1] = x
        return out


def assemble_liouvillian(
    eig: EigenSystem,
    rates: list[RateMatrices],
    mode: str = "full",
    gap_threshold: float = math.inf,
) -> Liouvillian:
    """Build the generator from an eigensystem and one RateMatrices per
    reservoir (each contributing through its own attachment-site operator)."""
    if mode not in ("full", "secular"):
        raise ValueError(f"unknown mode {mode!r}")
    return Liouvillian(eig, rates, mode=mode, gap_threshold=gap_threshold)


def secular_reduce(L: Liouvillian, eig: EigenSystem, gap_threshold: float) -> Liouvillian:
    """Keep populations and coherences with |omega_ab| < gap_threshold,
    zeroing all other coherence couplings.  Infinite threshold returns the
    generator unchanged."""
    if gap_threshold < 0:
        raise ValueError("gap_threshold must be >= 0")
    if math.isinf(gap_threshold):
        return L
    return Liouvillian(eig, [ch.rates for ch in L.channels], mode="secular", gap_threshold=gap_threshold)


def steady_state(
    L: Liouvillian,
    method: str = "auto",
    residual_rtol: float = 1e-9,
    validate: bool = True,
    neg_tol: float | None = None,
) -> DensityMatrix:
    """Null vector of the generator with unit trace.

    Dense path (default below DENSE_SOLVE_CAP): complete-orthogonal
    least squares on the generator with the trace condition appended as
    an extra row.  Larger problems go through a sparse LU on the square
    system with one redundant population row replaced by the trace row;
    ``method="lsqr"`` selects the iterative trace-augmented solve with
    diagonal column preconditioning instead.

    ``neg_tol`` bounds how negative an eigenvalue of the returned state
    may be.  The zero-temperature generator produces genuine negativity
    proportional to the coupling (band-edge tails), so the default scales
    with the largest reservoir gamma0 instead of being absolute; pass an
    explicit value to tighten it.
    """
    if not any(ch.res.gamma0 > 0 for ch in L.channels):
        raise SteadyStateError("no reservoir with gamma0 > 0; steady state undefined")
    bs = L.block_structure()
    M = L.block_matrix()
    n = bs.size
    trace_row = np.zeros(n, dtype=np.complex128)
    trace_row[bs.diag_positions] = 1.0
    scale = max(np.linalg.norm(M, "fro") / math.sqrt(n), 1e-300)

    if method == "auto":
        method = "cod" if n <= DENSE_SOLVE_CAP else "lu"

    if method == "cod":
        aug = np.vstack([M, scale * trace_row[None, :]])
        rhs = np.zeros(n + 1, dtype=np.complex128)
        rhs[-1] = scale
        v, _, rank, _ = sla.lstsq(aug, rhs, lapack_driver="gelsy")
        if rank < n:
            raise DegenerateSteadyStateError(n - rank + 1)
    elif method in ("lu", "lsqr"):
        # replace one population row (they are linearly dependent through
        # trace conservation) by the trace condition
        rrow = int(bs.diag_positions[0])
        if method == "lu":
            B = np.vstack([M[:rrow], scale * trace_row[None, :], M[rrow + 1 :]])
            rhs = np.zeros(n, dtype=np.complex128)
            rhs[rrow] = scale
            try:
                v = sla.lu_solve(sla.lu_factor(B), rhs)
            except (RuntimeError, ValueError) as exc:
                raise SteadyStateError(f"LU solve failed: {exc}") from exc
        else:
            aug = sp.vstack([sp.csr_matrix(M), scale * sp.csr_matrix(trace_row)])
            col_norms = spla.norm(aug, axis=0)
            col_norms[col_norms == 0] = 1.0
            D = sp.diags(1.0 / col_norms)
            rhs = np.zeros(n + 1, dtype=np.complex128)
            rhs[-1] = scale
            res = spla.lsqr(aug @ D, rhs, atol=1e-14, btol=1e-14, iter_lim=50 * n)
            v = D @ res[0]
    else:
        raise ValueError(f"unknown steady-state method {method!r}")

    tr = v[bs.diag_positions].sum()
    if abs(tr) < 1e-12:
        raise DegenerateSteadyStateError(2)
    v = v / tr
    sigma = bs.unpack(v, L.dim)
    sigma = 0.5 * (sigma + sigma.conj().T)
    sigma /= np.real(np.trace(sigma))

    resid = float(np.linalg.norm(L.apply(sigma)))
    rel = resid / L.norm2_estimate()
    if rel > residual_rtol:
        raise SteadyStateError(
            f"steady-state residual {resid:.3e} (relative {rel:.3e}) above tolerance"
        )
    dm = DensityMatrix(sigma, "eigen", residual=resid, relative_residual=rel)
    if validate:
        if neg_tol is None:
            gamma_max = max(ch.res.gamma0 for ch in L.channels)
            neg_tol = max(1e-8, NEG_TOL_PER_GAMMA * gamma_max)
        dm.validate(neg_tol=neg_tol)
    return dm


def evolve(
    L: Liouvillian,
    sigma0: DensityMatrix,
    t_grid,
    rtol: float = 1e-9,
    atol: float = 1e-12,
    trace_tol: float = 1e-8,
) -> list[DensityMatrix]:
    """Trajectory sigma(t) by adaptive integration of the vectorized
    master equation.  Initial states supported on the packed
    number-diagonal subspace integrate there; anything else integrates
    the full matrix."""
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size == 0:
        raise ValueError("t_grid must be a non-empty 1-d sequence")
    if t_grid[0] != 0.0 or np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must increase from 0")
    s0 = np.asarray(sigma0.mat, dtype=np.complex128)
    bs = L.block_structure()
    packed0 = bs.pack(s0)
    block_ok = np.linalg.norm(bs.unpack(packed0, L.dim) - s0) < 1e-14 * max(
        1.0, np.linalg.norm(s0)
    )

    if t_grid.size == 1:
        return [DensityMatrix(s0.copy(), sigma0.basis_tag)]

    if block_ok and bs.size <= HARD_SOLVE_CAP:
        M = L.block_matrix()
        sol = solve_ivp(
            lambda t, v: M @ v,
            (0.0, float(t_grid[-1])),
            packed0,
            t_eval=t_grid,
            method="DOP853",
            rtol=rtol,
            atol=atol,
        )
        if not sol.success:
            raise EvolutionError(f"integrator failed: {sol.message}")
        mats = [bs.unpack(sol.y[:, i], L.dim) for i in range(t_grid.size)]
    else:
        dim = L.dim

        def rhs(t, v):
            return L.apply(v.reshape(dim, dim)).ravel()

        sol = solve_ivp(
            rhs,
            (0.0, float(t_grid[-1])),
            s0.ravel(),
            t_eval=t_grid,
            method="DOP853",
            rtol=rtol,
            atol=atol,
        )
        if not sol.success:
            raise EvolutionError(f"integrator failed: {sol.message}")
        mats = [sol.y[:, i].reshape(dim, dim) for i in range(t_grid.size)]

    mats[0] = s0.copy()
    out = []
    tr0 = np.real(np.trace(s0))
    for m in mats:
        drift = abs(np.real(np.trace(m)) - tr0)
        if drift > trace_tol:
            raise EvolutionError(f"trace drifted by {drift:.3e} during evolution")
        out.append(DensityMatrix(m, sigma0.basis_tag))
    return out
