"""Particle transport through small Bose-Hubbard lattices coupled to
zero-temperature reservoirs: eigenbasis master equation, steady-state
currents, current noise, and a catalog of lattice devices."""

__version__ = "0.1.0"

from .fock import (  # noqa: F401
    EigenSystem,
    FockBasis,
    LatticeSpec,
    OperatorMatrix,
    build_annihilation,
    build_hamiltonian,
    build_system,
    diagonalize,
    enumerate_basis,
)
from .reservoir import RateMatrices, ReservoirSpec, edge_integral, gamma_matrices  # noqa: F401
from .master import (  # noqa: F401
    DensityMatrix,
    Liouvillian,
    assemble_liouvillian,
    evolve,
    secular_reduce,
    steady_state,
)
from .observables import (  # noqa: F401
    CurrentOperator,
    NoiseResult,
    current_autocorrelation,
    current_matrix,
    mean_current,
    noise_analysis,
    snr,
    spectral_density,
)
from .devices import (  # noqa: F401
    DeviceSpec,
    SweepResult,
    SweepSpec,
    get_device,
    list_devices,
    make_and_gate,
    make_bjt,
    make_diode,
    make_fet,
    make_wire,
    sweep,
    truth_table,
)
