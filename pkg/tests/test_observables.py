import numpy as np
import pytest

from bhtransport.devices import assemble_for, build_eigensystem, make_diode, make_wire
from bhtransport.fock import LatticeSpec, build_system
from bhtransport.master import DensityMatrix, assemble_liouvillian, evolve, steady_state
from bhtransport.observables import (
    CurrentOperator,
    NoiseRangeError,
    current_autocorrelation,
    current_matrix,
    default_omega_grid,
    default_tau_grid,
    mean_current,
    noise_analysis,
    noise_power,
    slowest_relaxation_rate,
    snr,
    spectral_density,
)
from bhtransport.reservoir import ReservoirSpec, gamma_matrices

RNG = np.random.default_rng(7)
G0 = 1e-2


def diode_setup(mu_l=4.5, mu_r=0.0, mode="full"):
    dev = make_diode(2).with_mu({"L": mu_l, "R": mu_r})
    eig = build_eigensystem(dev)
    L = assemble_for(dev, eig, mode)
    ss = steady_state(L)
    chans = {c.res.rid: c for c in L.channels}
    ops = {rid: current_matrix(c.res, c.rates, eig) for rid, c in chans.items()}
    return dev, eig, L, ss, ops


def random_density_matrix(dim, rng=RNG):
    x = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = x @ x.conj().T
    return rho / np.trace(rho).real


class TestCurrentOperator:
    def test_elementwise_oracle(self):
        # brute-force transcription of the current-operator elements:
        # <J>_ad = sum_c { out-minus + out-plus - in-minus - in-plus }
        # with elementwise rate contraction inside each bracket
        dev = make_diode(2, n_max=2).with_mu({"L": 4.5, "R": 0.3})
        eig = build_eigensystem(dev)
        L = assemble_for(dev, eig, "full")
        for chan in L.channels:
            rm = chan.rates
            a = eig.site_ops[rm.res.site]
            ad = a.conj().T
            dim = eig.dimension
            expect = np.zeros((dim, dim), dtype=complex)
            for i in range(dim):
                for d in range(dim):
                    acc = 0.0
                    for c in range(dim):
                        acc += ad[i, c] * (rm.out_minus[c, d] * a[c, d])
                        acc += (rm.out_plus[i, c] * ad[i, c]) * a[c, d]
                        acc -= (rm.in_minus[i, c] * a[i, c]) * ad[c, d]
                        acc -= a[i, c] * (rm.in_plus[c, d] * ad[c, d])
                    expect[i, d] = acc
            got = current_matrix(chan.res, rm, eig).mat
            assert np.max(np.abs(got - expect)) < 1e-12 * max(1e-300, np.max(np.abs(expect)))

    def test_hermitian(self):
        _, _, _, _, ops = diode_setup()
        for J in ops.values():
            assert np.linalg.norm(J.mat - J.mat.conj().T) < 1e-12 * np.linalg.norm(J.mat)

    def test_expectation_real_on_random_states(self):
        _, _, _, _, ops = diode_setup()
        J = ops["R"]
        for _ in range(30):
            rho = random_density_matrix(J.dim)
            val = np.trace(J.mat @ rho)
            assert abs(val.imag) < 1e-10 * max(1.0, abs(val))

    def test_vacuum_with_empty_reservoir_is_zero(self):
        dev, eig, L, _, ops = diode_setup(mu_l=-1.0, mu_r=-1.0)
        vac = DensityMatrix(np.diag([1.0] + [0.0] * (eig.dimension - 1)).astype(complex))
        assert mean_current(ops["R"], vac) == pytest.approx(0.0, abs=1e-14)
        assert mean_current(ops["L"], vac) == pytest.approx(0.0, abs=1e-14)

    def test_full_reservoir_empty_system_flows_in(self):
        # sign convention: negative = into the system
        dev, eig, L, _, ops = diode_setup(mu_l=12.0, mu_r=0.0)
        vac = DensityMatrix(np.diag([1.0] + [0.0] * (eig.dimension - 1)).astype(complex))
        assert mean_current(ops["L"], vac) < 0

    def test_flux_identity(self):
        # Tr[J_q sigma] equals exactly -2 d<N>/dt restricted to reservoir q
        dev, eig, L, ss, ops = diode_setup()
        Nop = np.diag(eig.sector_of.astype(float))
        for chan in L.channels:
            Lq = assemble_liouvillian(eig, [chan.rates])
            free = -1j * eig.omega_matrix() * ss.mat
            dn = np.trace(Nop @ (Lq.apply(ss.mat) - free)).real
            val = mean_current(ops[chan.res.rid], ss)
            assert val == pytest.approx(-2.0 * dn, rel=1e-10)

    def test_steady_state_conservation(self):
        _, _, _, ss, ops = diode_setup()
        total = sum(mean_current(J, ss) for J in ops.values())
        assert abs(total) < 1e-8 * G0

    def test_mirror_antisymmetry(self):
        # site-reversed diode with swapped biases carries the opposite currents
        eps, u, j = 3.0, 1.0, 0.03
        muL, muR = 4.5, 0.3
        def currents(eps_pair, mu_pair):
            lat = LatticeSpec(eps_pair, (u, u), ((0, 1, j),))
            eig = build_system(lat, 3, 6)
            wc = max(eps_pair) + 10.0
            rates = [
                gamma_matrices(ReservoirSpec(0, mu_pair[0], G0, wc, rid="L"), eig),
                gamma_matrices(ReservoirSpec(1, mu_pair[1], G0, wc, rid="R"), eig),
            ]
            L = assemble_liouvillian(eig, rates)
            ss = steady_state(L)
            return [
                mean_current(current_matrix(r.res, r.rates, eig), ss) for r in L.channels
            ]
        fwd = currents((eps, eps + u), (muL, muR))
        mirror = currents((eps + u, eps), (muR, muL))
        assert fwd[0] == pytest.approx(mirror[1], rel=1e-9)
        assert fwd[1] == pytest.approx(mirror[0], rel=1e-9)

    def test_rejects_mismatched_reservoir(self):
        dev, eig, L, _, _ = diode_setup()
        other = ReservoirSpec(site=0, mu=1.0, gamma0=G0, omega_c=14.0, rid="X")
        with pytest.raises(ValueError):
            current_matrix(other, L.channels[0].rates, eig)


class TestAutocorrelation:
    def test_decays_to_zero(self):
        _, _, L, ss, ops = diode_setup()
        tau = default_tau_grid(L)
        C = current_autocorrelation(L, ops["R"], ss, tau)
        assert abs(C[-1]) < 1e-6 * abs(C[0])

    def test_matches_direct_evolution(self):
        # regression propagation against the adaptive integrator
        _, _, L, ss, ops = diode_setup()
        J = ops["R"].mat
        tau = np.linspace(0.0, 40.0, 5)
        C = current_autocorrelation(L, ops["R"], ss, tau)
        X0 = DensityMatrix(J @ ss.mat)
        mean = mean_current(ops["R"], ss)
        traj = evolve(L, X0, tau, rtol=1e-11, atol=1e-14, trace_tol=np.inf)
        for ck, dm in zip(C, traj):
            direct = np.trace(J @ dm.mat).real - mean**2
            assert ck == pytest.approx(direct, rel=1e-7, abs=1e-12)

    def test_decay_timescale_matches_generator_gap(self):
        # C's slowest decay is set by the slowest relaxing generator mode
        _, _, L, ss, ops = diode_setup()
        rate = slowest_relaxation_rate(L)
        tau = default_tau_grid(L)
        C = current_autocorrelation(L, ops["R"], ss, tau)
        # find the e-folding beyond which |C| stays below C(0)/e^4
        target = abs(C[0]) * np.exp(-4.0)
        idx = np.max(np.nonzero(np.abs(C) > target))
        t_relax = tau[idx] / 4.0
        assert 0.1 / rate < t_relax < 10.0 / rate

    def test_bad_grid_rejected(self):
        _, _, L, ss, ops = diode_setup()
        with pytest.raises(ValueError):
            current_autocorrelation(L, ops["R"], ss, [0.0, 2.0, 1.0])


class TestSpectralDensity:
    def test_zero_autocorrelation_gives_zero(self):
        tau = np.linspace(0, 10, 201)
        S = spectral_density(np.zeros_like(tau), tau, 5.0, np.linspace(0, 3, 50))
        assert np.all(S == 0)

    def test_lorentzian_closed_form(self):
        # exponential C: S(w,T) = (2 A gamma/pi) / ((gamma^2+w^2)(1+w^2 T^2))
        A, gamma, T = 0.7, 0.35, 80.0
        tau = np.linspace(0.0, 60.0, 9001)
        C = A * np.exp(-gamma * tau)
        omega = np.linspace(0.0, 3.0, 301)
        S = spectral_density(C, tau, T, omega)
        ref = (2 * A * gamma / np.pi) / ((gamma**2 + omega**2) * (1 + (omega * T) ** 2))
        assert np.max(np.abs(S - ref)) < 1e-6 * ref.max()

    def test_noise_power_matches_variance_closed_form(self):
        # int_0^inf S dw = A/(1 + gamma T) for an exponential autocorrelation
        A, gamma, T = 0.7, 0.35, 80.0
        tau = np.linspace(0.0, 60.0, 9001)
        C = A * np.exp(-gamma * tau)
        omega = default_omega_grid(T, n=4000)
        S = spectral_density(C, tau, T, omega)
        assert noise_power(omega, S) == pytest.approx(A / (1 + gamma * T), rel=1e-3)
        assert noise_power(omega, S) > 0

    def test_insufficient_tau_range_reported(self):
        tau = np.linspace(0, 1.0, 101)
        C = np.exp(-0.1 * tau)  # barely decayed
        with pytest.raises(NoiseRangeError):
            spectral_density(C, tau, 10.0, np.linspace(0, 1, 10))

    def test_nonuniform_grid_rejected(self):
        tau = np.array([0.0, 0.1, 0.3, 0.6])
        with pytest.raises(ValueError):
            spectral_density(np.zeros(4), tau, 1.0, np.array([0.0, 1.0]))


class TestSnr:
    def test_zero_mean_gives_zero(self):
        omega = np.linspace(0, 1, 11)
        S = np.ones(11)
        assert snr(0.0, S, omega) == 0.0

    def test_zero_power_with_current_is_error(self):
        omega = np.linspace(0, 1, 11)
        with pytest.raises(NoiseRangeError):
            snr(1.0, np.zeros(11), omega)

    def test_snr_against_long_averaging_benchmark(self):
        # fitted SNR/sqrt(T) over Gamma0*T in [100, 1000] vs sqrt(8 Gamma0)
        _, _, L, ss, ops = diode_setup()
        T_list = np.array([100.0, 300.0, 1000.0]) / G0
        res = noise_analysis(L, ops["R"], ss, T_list)
        ks = np.array([r.snr / np.sqrt(r.T) for r in res])
        fit = ks.mean()
        assert fit == pytest.approx(np.sqrt(8 * G0), rel=0.2)

    def test_doubling_T_scales_by_sqrt2(self):
        _, _, L, ss, ops = diode_setup()
        res = noise_analysis(L, ops["R"], ss, [300.0 / G0, 600.0 / G0])
        assert res[1].snr / res[0].snr == pytest.approx(np.sqrt(2.0), rel=0.05)

    def test_equilibrium_point_has_zero_snr(self):
        _, _, L, ss, ops = diode_setup(mu_l=-1.0, mu_r=-1.0)
        res = noise_analysis(L, ops["R"], ss, [10.0 / G0], tau_grid=np.linspace(0, 3000.0, 8192))
        assert res[0].snr == pytest.approx(0.0, abs=1e-6)
