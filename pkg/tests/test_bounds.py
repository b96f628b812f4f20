import math

import numpy as np
import pytest

from ggr_lab.bounds import (BoundInputs, balanced_delta, choose_b, density_deviation_envelope,
                            eps_envelopes, grid_optimal_b, high_temp_bound, high_temp_delta,
                            leading_term, legendre_residual, low_temp_bound, low_temp_delta, main_bound,
                            regime_threshold, final_delta, rho_vs_rho0, total_envelope,
                            two_body_leading, xi_envelopes, xi_ge3_structure)
from ggr_lab.errors import DomainError, PreconditionError, RegimeError
from ggr_lab.freegas import rho2_coefficient_formula
from ggr_lab.registry import default_registry
from ggr_lab.scattering import HardCore, build_jastrow, energy_moment, solve_scattering
from ggr_lab.thermo import SCATTERING_CONSTANT, GrandParams, correction_coefficient, free_density


def random_inputs(d, n, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        inp = BoundInputs.from_diluteness(d, 10 ** rng.uniform(-8, -3), rng.uniform(0, 5),
                                          beta=rng.uniform(0.5, 2))
        if inp.valid:
            out.append(inp)
    return out


class TestInputs:
    def test_diluteness_roundtrip(self):
        inp = BoundInputs.from_diluteness(3, 1e-5, 1.0)
        assert inp.x == pytest.approx(1e-5, rel=1e-12)
        assert inp.dilute and inp.valid

    def test_fugacity_floor(self):
        with pytest.raises(DomainError):
            BoundInputs(0.1, GrandParams.from_log_z(3, 1.0, -10.0))

    def test_validity_fails_at_large_zeta(self):
        inp = BoundInputs.from_diluteness(3, 1e-3, 200.0)
        assert inp.dilute and not inp.valid
        with pytest.raises(RegimeError):
            high_temp_bound(inp)
        with pytest.raises(RegimeError):
            eps_envelopes(inp, 2 * inp.a)


class TestCutoff:
    @pytest.mark.parametrize("d", [1, 2, 3])
    def test_choice_near_grid_optimum(self, d):
        for inp in random_inputs(d, 30, seed=d):
            b = choose_b(inp)
            bg, tg = grid_optimal_b(inp, 400)
            assert max(b / bg, bg / b) <= 2.0
            assert total_envelope(inp, b).structure <= 2.0 * tg

    def test_b_range(self):
        inp = BoundInputs.from_diluteness(3, 1e-6, 1.0)
        with pytest.raises(PreconditionError):
            xi_envelopes(inp, 0.5 * inp.a)
        with pytest.raises(PreconditionError):
            xi_envelopes(inp, 10 * inp.rho0 ** (-1 / 3))

    def test_cap(self):
        reg = default_registry()
        reg.set("b_cap", 1e-3)
        inp = BoundInputs.from_diluteness(3, 1e-8, 1.0, registry=reg)
        assert choose_b(inp) == pytest.approx(1e-3 * inp.rho0 ** (-1 / 3))


class TestEnvelopes:
    @pytest.mark.parametrize("d", [1, 2, 3])
    def test_relative_total_matches_delta_display(self, d):
        inp = BoundInputs.from_diluteness(d, 1e-6, 2.0)
        rep = high_temp_bound(inp)
        ratio = rep.checks["total_over_leading"] / sum(high_temp_delta(d, inp.x, inp.zeta).values())
        assert 0.1 < ratio < 10

    def test_eps_scaling_in_b(self):
        # eps_Z's first term grows like b^2 at fixed everything else
        inp = BoundInputs.from_diluteness(3, 1e-7, 1.0)
        e1 = eps_envelopes(inp, 10 * inp.a)["eps_Z"].terms
        e2 = eps_envelopes(inp, 20 * inp.a)["eps_Z"].terms
        key = "a^d b^2 rho^(2+4/d) / zeta"
        assert e2[key] / e1[key] == pytest.approx(4.0)

    def test_constants_multiply_structure(self):
        reg = default_registry()
        reg.set("eps_Z", 7.0)
        inp = BoundInputs.from_diluteness(2, 1e-6, 1.0, registry=reg)
        env = eps_envelopes(inp, choose_b(inp))["eps_Z"]
        assert env.value == pytest.approx(7.0 * env.structure)

    def test_xi_ge3_structure(self):
        assert xi_ge3_structure(0.1, 0.2, 1.0) == pytest.approx(2 * 1e-5 * 8e-3)

    def test_d1_branch_has_own_terms(self):
        inp = BoundInputs.from_diluteness(1, 1e-6, 1.0)
        eps = eps_envelopes(inp, choose_b(inp))
        assert set(eps["eps_2"].terms) == {"a b rho^5 ell", "a^2 rho^5 zeta^(3/2) ell^3"}


class TestRegimes:
    @pytest.mark.parametrize("d", [1, 2, 3])
    def test_threshold_balances_branches(self, d):
        for x in 10.0 ** np.arange(-9, -3):
            th = regime_threshold(d, x)
            hi = list(high_temp_delta(d, x, th).values())[-1]
            lo = low_temp_delta(d, x, th)["x^(-1) zeta^(-2)"]
            assert hi / lo == pytest.approx(1.0, rel=1e-9)

    @pytest.mark.parametrize("d", [1, 3])
    def test_balanced_equals_theorem(self, d):
        for x in (1e-8, 1e-5):
            assert balanced_delta(d, x) == pytest.approx(final_delta(d, x))

    def test_d2_log_power_discrepancy(self):
        x = 1e-8
        lx = abs(math.log(x))
        assert final_delta(2, x) / balanced_delta(2, x) == pytest.approx(lx ** (8 / 7 - 6 / 5))

    @pytest.mark.parametrize("d", [1, 2, 3])
    def test_delta_at_threshold_scales_like_balanced(self, d):
        for x in (1e-9, 1e-6):
            th = regime_threshold(d, x)
            lo = low_temp_delta(d, x, th)["x^(-1) zeta^(-2)"]
            assert lo == pytest.approx(balanced_delta(d, x), rel=1e-9)

    def test_main_bound_selects_branch(self):
        x = 1e-6
        th = regime_threshold(3, x)
        hot = main_bound(BoundInputs.from_diluteness(3, x, 0.5 * th))
        cold = main_bound(BoundInputs.from_diluteness(3, x, 2 * th))
        assert hot.regime == "high_temperature" and math.isfinite(hot.b_choice)
        assert cold.regime == "low_temperature" and math.isnan(cold.b_choice)
        assert "final_delta" in cold.checks

    def test_not_dilute(self):
        with pytest.raises(DomainError):
            main_bound(BoundInputs.from_diluteness(3, 2.0, 1.0))

    def test_low_temp_report(self):
        rep = low_temp_bound(BoundInputs.from_diluteness(3, 1e-6, 100.0))
        assert abs(rep.checks["coefficient_over_zero_t"] - 1) < 1e-3
        assert rep.checks["legendre_residual"] < 1e-8
        assert rep.lower_bound(1.0) < 1.0


class TestLeadingTerm:
    @pytest.mark.parametrize("d", [1, 2, 3])
    def test_two_body_product_is_coefficient(self, d):
        prm = GrandParams(d, 1.0, 0.0)
        sol = solve_scattering(HardCore(0.01, d), r_max=5.0)
        j = build_jastrow(sol, 2.0)
        val = two_body_leading(energy_moment(j, None, 2), rho2_coefficient_formula(prm))
        assert val == pytest.approx(leading_term(prm, sol.a), rel=3 * (sol.a / 2.0) ** d)

    def test_leading_term_formula(self):
        prm = GrandParams(3, 1.0, 0.5)
        a = 0.01
        expected = correction_coefficient(prm) * a**3 * free_density(prm) ** (8 / 3)
        assert leading_term(prm, a) == pytest.approx(expected)
        assert correction_coefficient(prm) == pytest.approx(
            SCATTERING_CONSTANT[3] * rho2_coefficient_formula(prm) / free_density(prm) ** (8 / 3))

    @pytest.mark.parametrize("lz", [-3.0, 0.0, 5.0, 40.0])
    def test_legendre(self, lz):
        assert legendre_residual(GrandParams.from_log_z(2, 1.3, lz)) < 1e-8


class TestDensityFromPressure:
    def test_slope_one_half(self):
        xs = 10.0 ** np.arange(-8, -3.5, 0.5)
        devs = [rho_vs_rho0(BoundInputs.from_diluteness(3, x, 1.0)).relative for x in xs]
        slope = np.polyfit(np.log(xs), np.log(devs), 1)[0]
        assert abs(slope - 0.5) < 0.05

    def test_terms_balanced_at_optimum(self):
        dev = rho_vs_rho0(BoundInputs.from_diluteness(3, 1e-6, 1.0))
        assert dev.quotient_term / dev.error_term == pytest.approx(1.0, rel=0.1)
        assert dev.eps > 0

    def test_envelope_default_kinetic_scaling(self):
        env = density_deviation_envelope(0.1, 3, 2.0, 0.5, 1.5)
        assert env.terms["I_x2g rho tau"] == pytest.approx(2.0 * 0.1 ** (2 + 2 / 3))
        env2 = density_deviation_envelope(0.1, 3, 2.0, 0.5, 1.5, tau0=0.3)
        assert env2.terms["I_x2g rho tau"] == pytest.approx(2.0 * 0.1 * 0.3)
