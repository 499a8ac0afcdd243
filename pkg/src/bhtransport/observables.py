"""Per-reservoir current operators, two-time current correlations via the
regression theorem, averaged spectra and signal-to-noise ratios.

The current operator of reservoir q in the eigenbasis is

    J_q = Ad@AOm + DOp@A - AIm@Ad - A@DIp

with the same elementwise-contracted products that enter the generator.
J_q is Hermitian, so Tr[J_q sigma] is real on physical states; a positive
mean marks particle flow out of the system, negative into it.  At a steady
state the currents of all reservoirs sum to zero (the operator identity
Tr[J_q sigma] = -2 d<N>/dt|_q holds reservoir by reservoir).

Noise pipeline: the connected autocorrelation of an operator X,

    C(tau) = Re Tr[ X exp(L tau)(X sigma_ss) ] - <X>^2,

is propagated with the generator on a tau grid.  A measurement that
averages the signal with an exponential window of time constant T sees
the one-sided spectral density

    S(omega, T) = (1/pi) * S_X(omega) / (1 + omega^2 T^2),
    S_X(omega)  = 2 Re int_0^inf C(tau) e^{i omega tau} dtau,

normalized so that int_0^inf S domega equals the variance of the
window-averaged signal (1/(1 + omega^2 T^2) is the squared gain of the
unit-area exponential filter).  The signal-to-noise ratio after
averaging for a time T is

    SNR(T) = <J> / sqrt( int_0^inf S(omega, T) domega ),

which grows as sqrt(T) once T exceeds the correlation time of C.

Convention note: the reported current operator J sums gross in- and
out-scattering rates and equals exactly twice the net particle flux
-d<N>/dt of its reservoir (operator identity).  What an atom counter
measures is the flux, so the noise pipeline evaluates C for J/2 while
the signal keeps the reported normalization; this pairing reproduces
the sqrt(8 Gamma0 T) long-averaging benchmark for the standard diode
operating point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fock import EigenSystem
from .master import DensityMatrix, Liouvillian
from .reservoir import RateMatrices, ReservoirSpec

REALITY_TOL = 1e-10


class NoiseRangeError(RuntimeError):
    """The tau grid does not cover the decay of the autocorrelation."""


@dataclass
class CurrentOperator:
    """Eigenbasis current operator of a single reservoir."""

    rid: str
    mat: np.ndarray

    @property
    def dim(self) -> int:
        return self.mat.shape[0]


@dataclass
class NoiseResult:
    """Autocorrelation, filtered spectrum and SNR for one averaging time."""

    tau_grid: np.ndarray
    autocorrelation: np.ndarray
    T: float
    omega_grid: np.ndarray
    spectral_density: np.ndarray
    noise_power: float
    snr: float


def current_matrix(res: ReservoirSpec, rates: RateMatrices, eig: EigenSystem) -> CurrentOperator:
    """Current operator for the site coupled to ``res``.

    Out-scattering terms enter positive, in-scattering negative; the
    intermediate-state sum is the matrix product of the contracted pairs.
    """
    if rates.res is not res and rates.res != res:
        raise ValueError("rate matrices belong to a different reservoir")
    if rates.dim != eig.dimension:
        raise ValueError("rate matrices do not match eigensystem dimension")
    A = eig.site_ops[res.site]
    Ad = A.conj().T
    AOm = rates.out_minus * A
    AIm = rates.in_minus * A
    DIp = rates.in_plus * Ad
    DOp = rates.out_plus * Ad
    J = Ad @ AOm + DOp @ A - AIm @ Ad - A @ DIp
    return CurrentOperator(res.rid, J)


def mean_current(J: CurrentOperator, sigma: DensityMatrix) -> float:
    """Re Tr[J sigma]; the imaginary residue must vanish on physical states."""
    if J.dim != sigma.dim:
        raise ValueError("current operator and density matrix dimensions differ")
    val = complex(np.trace(J.mat @ sigma.mat))
    scale = max(1.0, abs(val))
    if abs(val.imag) > REALITY_TOL * scale:
        raise ValueError(f"current expectation has imaginary part {val.imag:.3e}")
    return float(val.real)


def _packed_trace_weights(L: Liouvillian, J: np.ndarray) -> np.ndarray:
    """Weights w with Tr[J Y] = w . pack(Y) for number-diagonal Y."""
    bs = L.block_structure()
    w = np.empty(bs.size, dtype=np.complex128)
    for k, (_, sl) in enumerate(bs.sectors):
        blk = J[sl, sl]
        w[bs.offsets[k] : bs.offsets[k] + len(bs.rows[k])] = blk[bs.cols[k], bs.rows[k]]
    return w


def current_autocorrelation(
    L: Liouvillian,
    J: CurrentOperator,
    sigma_ss: DensityMatrix,
    tau_grid,
) -> np.ndarray:
    """Connected autocorrelation C(tau) on the given grid.

    The operator-weighted matrix J sigma_ss is evolved under the
    generator (regression theorem, operator on the left) and contracted
    with J at every grid point; <J>^2 is subtracted.
    """
    tau_grid = np.asarray(tau_grid, dtype=float)
    if np.any(np.diff(tau_grid) <= 0) or tau_grid[0] < 0:
        raise ValueError("tau_grid must be increasing and start at tau >= 0")
    mean = mean_current(J, sigma_ss)
    X0 = J.mat @ sigma_ss.mat
    bs = L.block_structure()
    x0 = bs.pack(X0)
    traj = L.propagate_packed(x0, tau_grid)
    w = _packed_trace_weights(L, J.mat)
    corr = traj @ w
    return np.real(corr) - mean**2


def spectral_density(C, tau_grid, T: float, omega_grid) -> np.ndarray:
    """Time-averaged spectral density S(omega, T) by quadrature on the tau
    grid (uniform spacing, composite Simpson), filtered with the squared
    exponential-window gain 1/(1 + omega^2 T^2) and normalized so the
    integral over positive frequencies is the averaged signal's variance.

    For an exponential C(tau) = A e^{-gamma tau} the closed form is
    S(omega, T) = (2 A gamma / pi) / ((gamma^2 + omega^2)(1 + omega^2 T^2)).

    Requires the autocorrelation to have decayed to |C| < 1e-6 |C(0)| at
    the end of the grid; otherwise the transform would be biased.
    """
    if T <= 0:
        raise ValueError("averaging time T must be > 0")
    C = np.asarray(C, dtype=float)
    tau = np.asarray(tau_grid, dtype=float)
    omega = np.asarray(omega_grid, dtype=float)
    if C.shape != tau.shape:
        raise ValueError("C and tau_grid must have matching shapes")
    c0 = max(abs(C[0]), 1e-300)
    if abs(C[-1]) > 1e-6 * c0:
        raise NoiseRangeError(
            f"|C| only decayed to {abs(C[-1]) / c0:.2e} of C(0); extend the tau grid"
        )
    h = np.diff(tau)
    if not np.allclose(h, h[0], rtol=1e-9, atol=0.0):
        raise ValueError("tau_grid must be uniform for the Simpson transform")

    weights = _simpson_weights(tau.size, h[0])
    wc = weights * C
    s_x = np.empty(omega.size, dtype=float)
    chunk = 256
    for i in range(0, omega.size, chunk):
        om = omega[i : i + chunk]
        s_x[i : i + chunk] = 2.0 * (np.cos(np.outer(om, tau)) @ wc)
    return s_x / (np.pi * (1.0 + (omega * T) ** 2))


def _simpson_weights(n: int, h: float) -> np.ndarray:
    """Composite Simpson weights on a uniform grid (trapezoid patch on the
    final interval when the point count is even)."""
    if n < 3:
        raise ValueError("need at least 3 tau points")
    w = np.zeros(n)
    m = n if n % 2 == 1 else n - 1
    w[0:m] = 2.0
    w[1:m:2] = 4.0
    w[0] = 1.0
    w[m - 1] = 1.0
    w[:m] *= h / 3.0
    if m != n:
        w[-2] += 0.5 * h
        w[-1] += 0.5 * h
    return w


def default_omega_grid(T: float, n: int = 1200, x_max: float = 2000.0) -> np.ndarray:
    """Frequency grid matched to the filter width 1/T: dense near zero,
    arctan-stretched out to x_max/T."""
    u = np.linspace(0.0, math.atan(x_max), n)
    return np.tan(u) / T


def noise_power(omega_grid, S) -> float:
    """int_0^inf S domega by trapezoid with a 1/omega^2 tail estimate."""
    omega = np.asarray(omega_grid, dtype=float)
    S = np.asarray(S, dtype=float)
    p = float(np.trapezoid(S, omega))
    if omega[-1] > 0:
        p += float(S[-1] * omega[-1])  # int_{W}^inf c/w^2 dw = c/W with c = S(W) W^2
    return p


ZERO_CURRENT_FLOOR = 1e-12


def snr(mean_current_value: float, S, omega_grid) -> float:
    """Signal-to-noise ratio <J>/sqrt(noise power)."""
    p = noise_power(omega_grid, S)
    if p <= 0.0:
        if abs(mean_current_value) <= ZERO_CURRENT_FLOOR:
            return 0.0
        raise NoiseRangeError("noise power vanished with a nonzero mean current")
    return mean_current_value / math.sqrt(p)


def default_tau_grid(L: Liouvillian, decades: float = 6.0, max_points: int = 120_000) -> np.ndarray:
    """Tau grid long enough for C to decay by ``decades`` orders of
    magnitude (slowest relaxing generator mode) and fine enough to resolve
    the fastest retained oscillation."""
    M = L.block_matrix()
    lam = np.linalg.eigvals(M)
    relax = lam[np.real(lam) < -1e-13 * np.max(np.abs(lam))]
    if relax.size == 0:
        raise NoiseRangeError("generator has no relaxing modes; no stationary noise")
    slow = np.max(np.real(relax))
    tau_max = decades * math.log(10.0) / abs(slow)
    om_max = float(np.max(np.abs(np.imag(lam))))
    dt = 0.25 / om_max if om_max > 0 else tau_max / 4096
    n = int(min(max(tau_max / dt, 4096), max_points))
    return np.linspace(0.0, tau_max, n)


def slowest_relaxation_rate(L: Liouvillian) -> float:
    """|Re| of the slowest nonzero generator eigenvalue."""
    M = L.block_matrix()
    lam = np.linalg.eigvals(M)
    relax = lam[np.real(lam) < -1e-13 * np.max(np.abs(lam))]
    return float(abs(np.max(np.real(relax))))


def noise_analysis(
    L: Liouvillian,
    J: CurrentOperator,
    sigma_ss: DensityMatrix,
    T_list,
    tau_grid=None,
    n_omega: int = 1200,
) -> list[NoiseResult]:
    """Full pipeline: flux autocorrelation once, then spectrum, power and
    SNR per averaging time.

    The autocorrelation is evaluated for the particle flux J/2 (see the
    module convention note); the mean entering the SNR keeps the reported
    current normalization.
    """
    if tau_grid is None:
        tau_grid = default_tau_grid(L)
    flux = CurrentOperator(J.rid, 0.5 * J.mat)
    C = current_autocorrelation(L, flux, sigma_ss, tau_grid)
    mean = mean_current(J, sigma_ss)
    out = []
    for T in T_list:
        omega = default_omega_grid(T, n=n_omega)
        S = spectral_density(C, tau_grid, T, omega)
        p = noise_power(omega, S)
        if p <= 0.0 and abs(mean) > ZERO_CURRENT_FLOOR:
            raise NoiseRangeError("noise power vanished with a nonzero mean current")
        out.append(
            NoiseResult(
                tau_grid=np.asarray(tau_grid, dtype=float),
                autocorrelation=C,
                T=float(T),
                omega_grid=omega,
                spectral_density=S,
                noise_power=p,
                snr=(mean / math.sqrt(p)) if p > 0 else 0.0,
            )
        )
    return out
