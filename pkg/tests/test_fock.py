import numpy as np
import pytest

from bhtransport.fock import (
    BasisSizeError,
    DiagonalizationError,
    LatticeSpec,
    OperatorMatrix,
    build_annihilation,
    build_hamiltonian,
    build_system,
    diagonalize,
    enumerate_basis,
)


def two_site_lattice(eps1=3.0, eps2=3.0, u=1.0, j=0.03):
    return LatticeSpec((eps1, eps2), (u, u), ((0, 1, j),))


class TestEnumerateBasis:
    @pytest.mark.parametrize(
        "num_sites,n_max,n_tot,dim",
        [(1, 1, 1, 2), (2, 2, 4, 9), (4, 2, 8, 81)],
    )
    def test_dimensions(self, num_sites, n_max, n_tot, dim):
        assert enumerate_basis(num_sites, n_max, n_tot).dimension == dim

    def test_global_cap_prunes_states(self):
        b = enumerate_basis(2, 3, 4)
        assert b.dimension == 13  # 16 minus (2,3),(3,2),(3,3)
        assert all(sum(s) <= 4 for s in b.states)

    def test_sector_sorted_and_lexicographic(self):
        b = enumerate_basis(3, 2, 6)
        totals = [sum(s) for s in b.states]
        assert totals == sorted(totals)
        for n, sl in b.sector_slices:
            sector = list(b.states[sl])
            assert sector == sorted(sector)
            assert all(sum(s) == n for s in sector)

    def test_index_maps_are_inverse(self):
        b = enumerate_basis(3, 2, 4)
        for i, s in enumerate(b.states):
            assert b.index[s] == i

    def test_bounds_respected(self):
        b = enumerate_basis(3, 2, 6)
        assert all(all(0 <= n <= 2 for n in s) for s in b.states)

    def test_dimension_cap_guard(self):
        with pytest.raises(BasisSizeError):
            enumerate_basis(12, 6, 72, dimension_cap=10_000)

    def test_invalid_arguments(self):
        with pytest.raises(ValueError):
            enumerate_basis(0, 2, 2)


class TestAnnihilation:
    def test_bosonic_matrix_elements(self):
        b = enumerate_basis(1, 2, 2)
        a = build_annihilation(b, 0).mat
        i0, i1, i2 = b.index[(0,)], b.index[(1,)], b.index[(2,)]
        assert a[i1, i2] == pytest.approx(np.sqrt(2))
        assert a[i0, i1] == pytest.approx(1.0)
        assert np.all(a[:, i0] == 0)  # a|0> = 0

    def test_commutator_away_from_truncation(self):
        # [a, a^dag] = 1 on states with n < n_max everywhere
        b = enumerate_basis(2, 3, 6)
        for q in range(2):
            a = build_annihilation(b, q).mat
            comm = a @ a.conj().T - a.conj().T @ a
            for i, s in enumerate(b.states):
                if all(n < 3 for n in s) and sum(s) < 6:
                    assert comm[i, i] == pytest.approx(1.0, abs=1e-12)

    def test_site_out_of_range(self):
        b = enumerate_basis(2, 2, 4)
        with pytest.raises(ValueError):
            build_annihilation(b, 2)


class TestHamiltonian:
    def test_single_site_diagonal(self):
        # |2>: 2 eps + U
        lat = LatticeSpec((1.3,), (0.7,), ())
        b = enumerate_basis(1, 2, 2)
        H = build_hamiltonian(lat, b).mat
        i2 = b.index[(2,)]
        assert H[i2, i2] == pytest.approx(2 * 1.3 + 0.7)

    def test_hopping_element_with_bosonic_factor(self):
        lat = two_site_lattice(j=0.05)
        b = enumerate_basis(2, 2, 4)
        H = build_hamiltonian(lat, b).mat
        i20, i11 = b.index[(2, 0)], b.index[(1, 1)]
        assert H[i20, i11] == pytest.approx(np.sqrt(2) * 0.05)

    def test_one_one_diagonal(self):
        lat = two_site_lattice(eps1=2.0, eps2=2.0)
        b = enumerate_basis(2, 2, 4)
        H = build_hamiltonian(lat, b).mat
        i11 = b.index[(1, 1)]
        assert H[i11, i11] == pytest.approx(4.0)

    def test_hermitian_and_block_diagonal(self):
        lat = two_site_lattice()
        b = enumerate_basis(2, 3, 6)
        H = build_hamiltonian(lat, b).mat
        assert np.linalg.norm(H - H.conj().T) < 1e-12
        totals = b.sector_of
        off = H[totals[:, None] != totals[None, :]]
        assert np.all(off == 0)

    def test_rebuild_is_identical(self):
        lat = two_site_lattice()
        b = enumerate_basis(2, 3, 6)
        H1 = build_hamiltonian(lat, b).mat
        H2 = build_hamiltonian(lat, enumerate_basis(2, 3, 6)).mat
        assert np.array_equal(H1, H2)

    def test_lattice_validation(self):
        with pytest.raises(ValueError):
            LatticeSpec((1.0, 1.0), (1.0, -1.0), ((0, 1, 0.1),))
        with pytest.raises(ValueError):
            LatticeSpec((1.0, 1.0), (1.0, 1.0), ((0, 0, 0.1),))
        with pytest.raises(ValueError):
            LatticeSpec((1.0, 1.0), (1.0, 1.0), ((0, 1, 0.1), (1, 0, 0.2)))


class TestDiagonalize:
    def test_single_site_spectrum(self):
        eps, u = 1.1, 0.9
        eig = build_system(LatticeSpec((eps,), (u,), ()), n_max=2, n_tot_max=2)
        assert np.allclose(sorted(eig.energies), [0.0, eps, 2 * eps + u])

    def test_one_particle_splitting_2j(self):
        # flat two-site lattice: one-particle energies eps -/+ J
        eps, j = 3.0, 0.03
        eig = build_system(two_site_lattice(), n_max=3, n_tot_max=6)
        one = eig.energies[eig.sector_of == 1]
        assert np.allclose(sorted(one), [eps - j, eps + j], atol=1e-12)

    def test_resonance_pair_splitting(self):
        # eps2 = eps1 + U: |20> and |11> degenerate, split by ~2*sqrt(2)*J.
        # Oracle: direct diagonalization of the independent 3x3 two-particle
        # block in the Fock basis.
        eps, u, j = 3.0, 1.0, 0.03
        lat = LatticeSpec((eps, eps + u), (u, u), ((0, 1, j),))
        h3 = np.array(
            [
                [2 * eps + u, np.sqrt(2) * j, 0],
                [np.sqrt(2) * j, 2 * eps + u, np.sqrt(2) * j],
                [0, np.sqrt(2) * j, 2 * eps + 3 * u],
            ]
        )  # basis |20>, |11>, |02>
        oracle = np.linalg.eigvalsh(h3)
        eig = build_system(lat, n_max=3, n_tot_max=6)
        two = np.sort(eig.energies[eig.sector_of == 2])
        assert np.allclose(two[:3], oracle, atol=1e-12)
        gap = oracle[1] - oracle[0]
        assert gap == pytest.approx(2 * np.sqrt(2) * j, rel=0.02)

    def test_unitarity_and_diagonalization(self):
        eig = build_system(two_site_lattice(), n_max=3, n_tot_max=6)
        V = eig.vectors
        assert np.linalg.norm(V.conj().T @ V - np.eye(V.shape[0])) < 1e-10
        b = enumerate_basis(2, 3, 6)
        H = build_hamiltonian(two_site_lattice(), b).mat
        Hd = V.conj().T @ H @ V
        off = Hd - np.diag(np.diag(Hd))
        assert np.linalg.norm(off) < 1e-10 * max(1.0, np.linalg.norm(Hd))
        assert np.allclose(np.diag(Hd).real, eig.energies, atol=1e-10)

    def test_selection_rule_exact(self):
        eig = build_system(two_site_lattice(), n_max=3, n_tot_max=6)
        for a in eig.site_ops:
            for i in range(eig.dimension):
                for k in range(eig.dimension):
                    if eig.sector_of[i] != eig.sector_of[k] - 1:
                        assert a[i, k] == 0

    def test_rejects_nonhermitian(self):
        b = enumerate_basis(1, 1, 1)
        bad = OperatorMatrix(np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex), "fock")
        with pytest.raises(DiagonalizationError):
            diagonalize(bad, b, [])

    def test_rejects_sector_coupling(self):
        b = enumerate_basis(1, 1, 1)
        bad = OperatorMatrix(np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex), "fock")
        with pytest.raises(DiagonalizationError):
            diagonalize(bad, b, [])
