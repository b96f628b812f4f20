import itertools
import math

import numpy as np
import pytest

from ggr_lab.diagrams import rhoJ_expansion
from ggr_lab.errors import DomainError, SizeGuardError
from ggr_lab.fock import (LatticeModel, build_sectors, compare_ggr, dbeta_log_zj, dbeta_log_zj_numeric,
                          density_check, entropy, entropy_margin, exact_free_state, exact_jastrow_state,
                          free_pressure, gibbs_pressure, jastrow_spectrum, lattice_torus_data,
                          mean_particle_number, pressure_functional, random_weak_model, reduced_density)
from ggr_lab.freegas import wick_density


def ring(M=6, beta=1.0, mu=0.2, depth=0.2, v_height=1.0):
    x = np.arange(M)
    r = np.minimum(x, M - x)
    g = -depth * np.exp(-r**2 / 1.5)
    g[r > M / 2 - 1] = 0.0
    v = v_height * np.exp(-r**2) * (r > 0)
    return LatticeModel(M, 1, beta, mu, np.sqrt(1 + g), v)


def free_ring(M=6, beta=1.0, mu=0.2):
    return LatticeModel(M, 1, beta, mu, np.ones(M), np.zeros(M))


@pytest.fixture(scope="module")
def state():
    return exact_jastrow_state(ring())


class TestModel:
    def test_hopping_is_lattice_laplacian(self):
        m = free_ring(5)
        eig = np.sort(np.linalg.eigvalsh(m.hopping_matrix()))
        k = 2 * np.pi * np.arange(5) / 5
        assert np.allclose(eig, np.sort(2 - 2 * np.cos(k)))

    def test_guards(self):
        with pytest.raises(SizeGuardError):
            free_ring(16)
        with pytest.raises(DomainError):
            LatticeModel(4, 1, 1.0, 0.0, np.array([1, 2, 1, 1.0]), np.zeros(4))
        with pytest.raises(DomainError):
            LatticeModel(4, 1, 1.0, 0.0, np.array([1, 0.5, 1, 1.0]), np.zeros(4))  # not even
        with pytest.raises(DomainError):
            LatticeModel(2, 3, 1.0, 0.0, np.ones((2, 2, 2)), np.zeros((2, 2, 2)))

    def test_two_dimensional(self):
        M = 3
        m = LatticeModel(M, 2, 1.0, 0.0, np.ones((M, M)), np.zeros((M, M)))
        lz, gamma, lzt = exact_free_state(m)
        assert lz == pytest.approx(lzt, rel=1e-12)
        fm = m.free_model()
        assert np.allclose(np.diag(gamma), fm.density)

    def test_sector_dimensions(self):
        secs = build_sectors(free_ring(6))
        assert [len(s.states) for s in secs] == [math.comb(6, n) for n in range(7)]


class TestFreeState:
    def test_determinant_vs_trace(self):
        lz, _, lzt = exact_free_state(free_ring(8, beta=0.7, mu=-0.4))
        assert lz == pytest.approx(lzt, rel=1e-13)

    def test_kernel_matches_free_gas_model(self):
        m = free_ring(8)
        _, gamma, _ = exact_free_state(m)
        kern = m.free_model().gamma_kernel
        for i, j in itertools.product(range(8), repeat=2):
            assert gamma[i, j] == pytest.approx(kern[(i - j) % 8], abs=1e-13)

    @pytest.mark.parametrize("sites", [(0,), (0, 2), (1, 2, 5)])
    def test_wick_theorem(self, sites):
        m = free_ring(8, beta=0.9, mu=0.3)
        st = exact_jastrow_state(m)
        pts = np.array([[s] for s in sites])
        assert reduced_density(st, sites) == pytest.approx(wick_density(m.free_model(), pts), rel=1e-11)

    def test_free_jastrow_is_exactly_free(self):
        st = exact_jastrow_state(free_ring(8))
        assert st.log_ratio == 0.0
        cmp = compare_ggr(free_ring(8), 3)
        assert max(cmp.residuals) <= 1e-12


class TestJastrowState:
    def test_spectrum_is_a_probability(self, state):
        lam = jastrow_spectrum(state)
        assert lam.min() > -1e-14
        assert lam.sum() == pytest.approx(1.0, rel=1e-12)

    def test_partition_ratio_direct(self, state):
        # Z_J / Z = <F^2>_0 from the diagonal weights
        m = state.model
        mean = 0.0
        for sec in state.sectors:
            w = np.exp(m.beta * (m.mu * sec.n - sec.energies) - state.log_z)
            mean += float(np.sum(w * (sec.vectors**2 * sec.f_squared[:, None]).sum(axis=0)))
        assert state.log_ratio == pytest.approx(math.log(mean), rel=1e-10)

    def test_pauli_and_symmetry(self, state):
        assert reduced_density(state, (2, 2)) == 0.0
        assert reduced_density(state, (0, 2)) == pytest.approx(reduced_density(state, (1, 3)), rel=1e-10)

    def test_one_point_density_sums_to_particle_number(self, state):
        total = sum(reduced_density(state, (s,)) for s in range(state.model.n_sites))
        assert total == pytest.approx(mean_particle_number(state), rel=1e-12)

    def test_dbeta_analytic_vs_difference(self, state):
        assert dbeta_log_zj(state) == pytest.approx(dbeta_log_zj_numeric(state.model), rel=1e-8)

    def test_entropy_inequality(self, state):
        assert entropy_margin(state) >= -1e-8

    def test_entropy_of_free_state_saturates(self):
        st = exact_jastrow_state(free_ring(8))
        # for the Gibbs state itself the inequality is an equality
        assert abs(entropy_margin(st)) < 1e-10

    def test_entropy_function(self):
        assert entropy(np.array([0.5, 0.5, 0.0])) == pytest.approx(math.log(2))

    def test_variational_principle(self):
        for seed in range(3):
            m = random_weak_model(np.random.default_rng(seed), 8, strength=0.5)
            st = exact_jastrow_state(m)
            assert pressure_functional(st) <= gibbs_pressure(m) + 1e-12

    def test_free_pressure_functional(self):
        st = exact_jastrow_state(free_ring(8, mu=-0.3))
        assert pressure_functional(st) == pytest.approx(free_pressure(st), rel=1e-12)
        assert gibbs_pressure(free_ring(8, mu=-0.3)) == pytest.approx(free_pressure(st), rel=1e-12)


class TestSeriesAgainstOracle:
    def test_residual_decreases(self):
        cmp = compare_ggr(ring(10, depth=0.15), 4)
        assert cmp.in_regime
        r2, r3, r4 = cmp.residuals
        assert r3 < r2 and r4 < r2

    def test_method_independent(self):
        a = compare_ggr(ring(8), 4)
        b = compare_ggr(ring(8), 4, method="cumulants")
        assert np.allclose(a.truncated, b.truncated, rtol=1e-10)

    @pytest.mark.parametrize("q,sites", [(1, (0,)), (2, (0, 2))])
    def test_reduced_density_expansion(self, q, sites):
        m = ring(8, depth=0.1)
        st = exact_jastrow_state(m)
        data = lattice_torus_data(m)
        exact = reduced_density(st, sites)
        ext = np.array([[s] for s in sites])
        errs = []
        for p_max in (0, 1, 2, 3):
            errs.append(abs(rhoJ_expansion(data, q, ext, p_max).value - exact))
        assert errs[3] < errs[1] < errs[0]
        assert errs[3] < 1e-3 * exact

    def test_density_check(self, state):
        c = density_check(state)
        assert c.deviation >= 0 and c.tau0 > 0
        assert c.I_x2g > 0 and c.I_g > 0
        assert c.envelope(1).structure > 0


def test_random_weak_model_is_valid():
    rng = np.random.default_rng(3)
    for M in (6, 8, 12):
        m = random_weak_model(rng, M)
        assert m.f.shape == (M,) and np.all(m.f <= 1)


def test_single_site_partition_function():
    m = LatticeModel(1, 1, 1.3, 0.4, np.ones(1), np.zeros(1))
    st = exact_jastrow_state(m)
    assert st.log_z == pytest.approx(math.log1p(math.exp(1.3 * 0.4)), rel=1e-14)
    assert st.log_zj == pytest.approx(st.log_z, rel=1e-14)


def test_ring_determinant_identity():
    lz, _, lzt = exact_free_state(ring(6))
    assert abs(lz - lzt) <= 1e-10 * abs(lz)
