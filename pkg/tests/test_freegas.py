import math

import numpy as np
import pytest

from ggr_lab.errors import DomainError, PreconditionError, RefinementError
from ggr_lab.freegas import (build_model, jastrow_integral, kernel_moments, lattice_model, momentum_moment,
                             momentum_moment_continuum, rho2_coefficient_formula, rho2_quadratic_coefficient,
                             sample_jastrow, sample_radial_on_torus, wick_density)
from ggr_lab.scattering import SoftSphere, build_jastrow, solve_scattering
from ggr_lab.thermo import GrandParams, free_density


@pytest.fixture(scope="module")
def box2():
    return build_model(12.0, 2, 64, GrandParams(2, 1.0, 0.5))


def test_density_converges_to_thermodynamic_limit():
    prm = GrandParams(1, 1.0, 0.5)
    m = build_model(400.0, 1, 1024, prm)
    assert m.density == pytest.approx(free_density(prm), rel=1e-10)


def test_kernel_diagonal_is_density(box2):
    assert box2.gamma_kernel.flat[0] == pytest.approx(box2.density, rel=1e-12)


def test_kernel_real_even(box2):
    g = box2.gamma_kernel
    assert np.allclose(g, np.roll(g[::-1, ::-1], 1, axis=(0, 1)), atol=1e-15)


def test_kernel_at_matches_grid(box2):
    pts = np.array([[1, 3], [5, 0], [7, 9]])
    assert np.allclose(box2.kernel_at(pts * box2.h), box2.gamma_kernel[pts[:, 0], pts[:, 1]], atol=1e-13)


def test_axis_kernel_matches_full(box2):
    assert np.allclose(box2.axis_kernel(cutoff=0.0), box2.gamma_kernel[:, 0], atol=1e-14)


def test_transform_roundtrip(box2):
    g = np.exp(-box2.radii() ** 2)
    gh = box2.transform(g)
    # g_hat(0) = h^d sum g
    assert gh.flat[0].real == pytest.approx(box2.h**2 * g.sum())
    back = np.fft.fftn(gh) / box2.L**2
    assert np.allclose(back.real, g, atol=1e-14)


def test_refinement_error_reports_needed_m():
    prm = GrandParams(1, 0.01, 0.0)
    with pytest.raises(RefinementError) as exc:
        build_model(100.0, 1, 8, prm)
    needed = exc.value.needed
    assert needed > 8
    build_model(100.0, 1, needed, prm)


@pytest.mark.parametrize("M", [7, 4])
def test_bad_grid(M):
    with pytest.raises(DomainError):
        build_model(10.0, 1, M, GrandParams(1, 1.0, 0.0))


def test_lattice_model_dispersion():
    m = lattice_model(6, 1, GrandParams(1, 1.0, 0.0))
    k = 2 * np.pi * np.fft.fftfreq(6)
    assert np.allclose(m.energies, 2 - 2 * np.cos(k))
    assert m.h == 1.0


class TestWick:
    def test_one_point(self, box2):
        assert wick_density(box2, np.array([[3, 4]])) == pytest.approx(box2.density)

    def test_pauli(self, box2):
        assert abs(wick_density(box2, np.array([[3, 4], [3, 4]]))) < 1e-15

    def test_two_point(self, box2):
        x = np.array([[0, 0], [2, 1]])
        g = box2.gamma_kernel[2, 1]
        assert wick_density(box2, x) == pytest.approx(box2.density**2 - g**2, rel=1e-12)

    def test_batch(self, box2):
        pts = np.random.default_rng(1).integers(0, 64, (10, 3, 2))
        batch = wick_density(box2, pts)
        assert batch.shape == (10,)
        assert batch[4] == pytest.approx(wick_density(box2, pts[4]), rel=1e-12)
        assert np.all(batch >= -1e-15)

    def test_rejects_float_points(self, box2):
        with pytest.raises(DomainError):
            wick_density(box2, np.array([[0.5, 0.0]]))


class TestQuadraticLaw:
    @pytest.mark.parametrize("d,L,M", [(1, 300.0, 4096), (2, 220.0, 4160)])
    def test_coefficient_within_five_percent(self, d, L, M):
        prm = GrandParams(d, 1.0, 0.0)
        rho0 = free_density(prm)
        assert L >= 50 * prm.zeta * rho0 ** (-1 / d)
        m = build_model(L, d, M, prm)
        fit = rho2_quadratic_coefficient(m)
        assert abs(fit / rho2_coefficient_formula(prm) - 1) < 0.05

    def test_window_too_coarse(self):
        m = build_model(50.0, 1, 96, GrandParams(1, 1.0, 0.0))
        with pytest.raises(RefinementError):
            rho2_quadratic_coefficient(m)

    def test_formula_small_z_classical(self):
        # z -> 0: rho2 ~ rho0^2 |x|^2 / (2 beta) per dimension-free form 2 pi rho0^{2+2/d} / (rho0 lambda^d)^{2/d}
        prm = GrandParams.from_log_z(3, 1.0, -30.0)
        rho0 = free_density(prm)
        assert rho2_coefficient_formula(prm) == pytest.approx(rho0**2 / (2 * prm.beta), rel=1e-10)


class TestMomentumMoments:
    @pytest.mark.parametrize("p,n,m", [(0, 1, 1), (2, 1, 1), (2, 2, 3)])
    def test_riemann_sum_converges(self, p, n, m):
        prm = GrandParams(3, 1.0, 0.5)
        cont = momentum_moment_continuum(prm, p, n, m)
        errs = []
        for L in (6.0, 8.0, 10.0):
            model = build_model(L, 3, 32, prm)
            errs.append(abs(momentum_moment(model, p, n, m) - cont) / cont)
        assert errs[-1] < errs[0]
        # at least as fast as 1/L
        assert all(e * L <= errs[0] * 6.0 for e, L in zip(errs, (6.0, 8.0, 10.0)))

    def test_continuum_density(self):
        prm = GrandParams(2, 0.7, 1.3)
        assert momentum_moment_continuum(prm, 0, 1, 1) == pytest.approx(free_density(prm), rel=1e-10)

    def test_domain(self):
        m = build_model(10.0, 1, 32, GrandParams(1, 1.0, 0.0))
        with pytest.raises(DomainError):
            momentum_moment(m, 0, 2, 1)


class TestKernelMoments:
    def test_gamma_norm_at_least_density(self):
        m = build_model(40.0, 1, 256, GrandParams(1, 1.0, 2.0))
        km = kernel_moments(m)
        assert km.I_gamma >= 1.0 - 1e-12  # int gamma = gamma_hat(0) <= int |gamma|
        assert km.I_dgamma > 0 and km.I_d2gamma > 0

    def test_classical_limit(self):
        # small z: gamma is a positive Gaussian and int |gamma| = gamma_hat(0)
        prm = GrandParams.from_log_z(1, 1.0, -20.0)
        m = build_model(40.0, 1, 256, prm)
        assert kernel_moments(m).I_gamma == pytest.approx(float(m.gamma_hat.flat[0]), rel=1e-8)


class TestJastrowSampling:
    def test_sampled_integral_matches_radial_moment(self):
        from ggr_lab.scattering import g_moment
        sol = solve_scattering(SoftSphere(10.0, 0.5, 2), r_max=10.0)
        j = build_jastrow(sol, 3.0)
        m = build_model(10.0, 2, 256, GrandParams(2, 1.0, 0.0))
        g = sample_jastrow(m, j)
        assert jastrow_integral(m, g) == pytest.approx(g_moment(j, 0), rel=2e-2)

    def test_support_guard(self):
        m = build_model(10.0, 1, 64, GrandParams(1, 1.0, 0.0))
        with pytest.raises(PreconditionError):
            sample_radial_on_torus(m, lambda r: r, support=6.0)


def _kernel_norm_at_fixed_density(d, log_z, rho_target=0.1, scale=1.0):
    r1 = free_density(GrandParams.from_log_z(d, 1.0, log_z))
    beta = (r1 / rho_target) ** (2 / d)
    prm = GrandParams.from_log_z(d, beta, log_z)
    L = scale * (40 if d == 1 else 12) * prm.zeta * rho_target ** (-1 / d)
    M = int(L / math.pi * math.sqrt((log_z + 30) / beta)) + 2
    M += M % 2
    return prm, kernel_moments(build_model(L, d, M, prm)).I_gamma


@pytest.mark.parametrize("d", [1, 2])
def test_kernel_norm_bounded_by_zeta_power(d):
    ratios = []
    for lz in (0.0, 5.0, 20.0, 80.0):
        prm, I = _kernel_norm_at_fixed_density(d, lz)
        ratios.append(I / prm.zeta ** (d / 2))
    # the constant fitted at z = 1 covers every fugacity within a factor 2
    assert max(ratios) <= 2 * ratios[0]


@pytest.mark.parametrize("d,lz", [(1, 5.0), (2, 5.0)])
def test_kernel_norm_volume_uniform(d, lz):
    _, a = _kernel_norm_at_fixed_density(d, lz)
    _, b = _kernel_norm_at_fixed_density(d, lz, scale=2.0)
    assert abs(b / a - 1) < 1e-2


def test_kernel_diagonal_near_thermodynamic_density():
    prm = GrandParams(1, 1.0, 0.0)
    m = build_model(20.0, 1, 256, prm)
    assert abs(m.gamma_kernel[0] - free_density(prm)) <= free_density(prm) / 20.0
