"""Zero-temperature particle reservoirs and their rate matrices.

Each reservoir is a flat band of fermionized modes on [omega_min, omega_c],
filled up to its chemical potential mu, coupled to one lattice site with a
constant matrix element.  Replacing the mode sum by an integral over the
band gives four complex rate matrices per reservoir,

    (G_+)_ab = 2 Gamma0 * I(eta, +; omega_ab),
    (G_-)_ab = 2 Gamma0 * conj(I(eta, +; -omega_ab)),

where I is the regularized band integral computed in closed form by
:func:`edge_integral`.  "In" matrices integrate over the occupied part of
the band, "Out" over the empty part.  The regularization rate is
eta = pi * Gamma0 / 2, which reproduces half-Lorentzian (golden-rule
mean) behaviour when a transition sits exactly at the band edge.

Real parts are absorptive golden-rule rates (always >= 0); imaginary
parts are the associated level shifts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fock import EigenSystem


@dataclass(frozen=True)
class ReservoirSpec:
    """One reservoir: attachment site, fill level and coupling.

    gamma0 is the base system-reservoir rate (density of reservoir modes
    times squared coupling, in units of energy with hbar = 1).
    """

    site: int
    mu: float
    gamma0: float
    omega_c: float
    omega_min: float = 0.0
    rid: str = ""

    def __post_init__(self):
        if self.gamma0 <= 0:
            raise ValueError("gamma0 must be > 0")
        if not self.omega_min < self.omega_c:
            raise ValueError("need omega_min < omega_c")

    @property
    def eta(self) -> float:
        """Regularization rate, pi*Gamma0/2."""
        return 0.5 * np.pi * self.gamma0

    def replace(self, **kw) -> "ReservoirSpec":
        from dataclasses import replace

        return replace(self, **kw)


@dataclass(frozen=True)
class RateMatrices:
    """The four rate matrices of one reservoir, indexed by eigenstate pairs."""

    in_minus: np.ndarray
    in_plus: np.ndarray
    out_minus: np.ndarray
    out_plus: np.ndarray
    eta: float
    res: ReservoirSpec

    @property
    def dim(self) -> int:
        return self.in_minus.shape[0]


def edge_integral(eta: float, omega_ab, band_lo: float, band_hi: float):
    """Closed form of  int_{band_lo}^{band_hi} dw / (eta + i (w - omega_ab)).

    Real part: arctan((band_hi - w0)/eta) - arctan((band_lo - w0)/eta)
    (a Lorentzian of width eta integrated across the band, -> pi deep
    inside, pi/2 exactly at an edge).  Imaginary part: half the log of the
    ratio of Lorentzian magnitudes at the two edges.  Finite for every
    input as long as eta > 0; accepts scalar or array omega_ab.
    """
    if eta <= 0:
        raise ValueError("eta must be > 0")
    if band_lo > band_hi:
        raise ValueError("band_lo must be <= band_hi")
    w0 = np.asarray(omega_ab, dtype=float)
    hi = band_hi - w0
    lo = band_lo - w0
    real = np.arctan(hi / eta) - np.arctan(lo / eta)
    imag = 0.5 * np.log((eta**2 + lo**2) / (eta**2 + hi**2))
    out = real + 1j * imag
    if np.isscalar(omega_ab):
        return complex(out)
    return out


def gamma_matrices(res: ReservoirSpec, eig: EigenSystem) -> RateMatrices:
    """Rate matrices of one reservoir over the eigenstate pairs of ``eig``.

    The occupied band is [omega_min, mu] (clamped to the band), the empty
    band [mu, omega_c]; their "-" matrices sum to the full-band integral
    independent of mu, which is an exact arctan/log identity and is used
    as a consistency check in the tests.
    """
    omega = eig.omega_matrix()
    mu_c = min(max(res.mu, res.omega_min), res.omega_c)
    pref = 2.0 * res.gamma0
    eta = res.eta

    def plus(lo, hi):
        if hi <= lo:
            return np.zeros_like(omega, dtype=np.complex128)
        return pref * edge_integral(eta, omega, lo, hi)

    def minus(lo, hi):
        if hi <= lo:
            return np.zeros_like(omega, dtype=np.complex128)
        return pref * np.conj(edge_integral(eta, -omega, lo, hi))

    return RateMatrices(
        in_minus=minus(res.omega_min, mu_c),
        in_plus=plus(res.omega_min, mu_c),
        out_minus=minus(mu_c, res.omega_c),
        out_plus=plus(mu_c, res.omega_c),
        eta=eta,
        res=res,
    )
