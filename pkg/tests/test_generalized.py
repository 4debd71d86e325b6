import math

import numpy as np
import pytest

from snlpscale import (
    BivariatePotential,
    ExitSpec,
    TailNotConverged,
    UnivariatePotential,
    classical_exit_down,
    classical_exit_up,
    conditional_curve,
    conditional_laplace_given_sup,
    evaluate_exit,
    exit_down_functional,
    exit_up_laplace,
    iota,
    kappa,
    local_time_laplace,
    make_brownian,
    n_height_tail,
    supremum_atom,
    supremum_density,
    z_f_truncated,
)
from snlpscale.quadrature import adaptive_simpson, composite_simpson

from conftest import route_constancy_ratios

ZERO = BivariatePotential(lambda s, x: 0.0 * s, bound=0.0, name="zero")
HALF = BivariatePotential(lambda s, x: 0.5 + 0.0 * s, bound=0.5, name="half")
SPEC = ExitSpec(0.0, 0.5, 1.0)


class TestIota:
    def test_zero_potential_is_exactly_zero(self, bm_driftless):
        assert iota(bm_driftless, ZERO, 0.0, 1.0, 128) == 0.0

    def test_constant_potential_closed_form(self, bm_driftless):
        # delta*coth(delta s) - 1/s with delta = 1
        want = 1.0 / math.tanh(1.0) - 1.0
        assert iota(bm_driftless, HALF, 0.0, 1.0, 1024) == pytest.approx(want, abs=1e-5)

    def test_reflected_potential_bounded_by_phi(self, bm_driftless):
        F = BivariatePotential(
            lambda s, x: 0.5 * (np.asarray(s) - np.asarray(x) > 0.25), bound=0.5,
            name="deep-excursion",
        )
        val = iota(bm_driftless, F, 0.0, 1.0, 1024)
        assert 0.0 < val < bm_driftless.phi(0.5)

    def test_rejects_bad_level(self, bm_driftless):
        with pytest.raises(ValueError):
            iota(bm_driftless, HALF, 0.0, 0.0, 128)


class TestKappa:
    def test_zero_potential_reduces_to_height_tail(self, bm_driftless):
        assert kappa(bm_driftless, ZERO, 0.0, 2.0, 256) == pytest.approx(0.5, abs=1e-12)
        zs = np.linspace(0.25, 2.0, 8)
        gap = [
            abs(kappa(bm_driftless, ZERO, 0.0, float(z), 512) - n_height_tail(bm_driftless, float(z)))
            for z in zs
        ]
        assert max(gap) < 1e-8

    def test_constant_potential_closed_form(self, bm_driftless):
        # delta/sinh(delta z) with delta = 1
        want = 1.0 / math.sinh(1.0)
        assert kappa(bm_driftless, HALF, 0.0, 1.0, 1024) == pytest.approx(want, abs=1e-5)

    def test_damping_monotone_in_potential(self, bm_driftless):
        assert kappa(bm_driftless, HALF, 0.0, 1.0, 512) < kappa(
            bm_driftless, ZERO, 0.0, 1.0, 512
        )

    def test_rejects_bad_level(self, bm_driftless):
        with pytest.raises(ValueError):
            kappa(bm_driftless, HALF, 0.0, -1.0, 128)


class TestExitUp:
    def test_zero_potential_is_classical(self, bm_driftless):
        val = exit_up_laplace(bm_driftless, ZERO, SPEC, refine=False)
        assert val == pytest.approx(0.5, abs=1e-12)

    def test_constant_potential_sinh_ratio(self, bm_driftless):
        want = math.sinh(0.5) / math.sinh(1.0)
        assert exit_up_laplace(bm_driftless, HALF, SPEC) == pytest.approx(want, abs=1e-5)

    def test_supremum_dependent_potential_in_range(self, bm_driftless):
        F = BivariatePotential(
            lambda s, x: np.minimum(0.4 * (np.asarray(s) - np.asarray(x)), 2.0),
            bound=2.0, name="reflected",
        )
        val = exit_up_laplace(bm_driftless, F, SPEC, refine=False)
        assert 0.0 < val < 0.5

    def test_damping_monotonicity(self, bm_driftless):
        quarter = BivariatePotential(lambda s, x: 0.25 + 0.0 * s, bound=0.25, name="q")
        v0 = exit_up_laplace(bm_driftless, ZERO, SPEC, refine=False)
        v1 = exit_up_laplace(bm_driftless, quarter, SPEC, refine=False)
        v2 = exit_up_laplace(bm_driftless, HALF, SPEC, refine=False)
        assert v0 > v1 > v2


class TestExitDown:
    def test_zero_potential_unit_weight(self, bm_driftless):
        val = exit_down_functional(bm_driftless, ZERO, None, SPEC, refine=False)
        assert val == pytest.approx(0.5, abs=1e-9)

    def test_supremum_at_ruin_identity(self, bm_driftless):
        # E[S_T; down] for driftless unit BM: int z (x/z)(1/z) dz = x ln(a/x)
        val = exit_down_functional(
            bm_driftless, ZERO, lambda z: np.asarray(z), SPEC, refine=False
        )
        assert val == pytest.approx(0.5 * math.log(2.0), abs=1e-9)

    def test_constant_potential_csch_integral(self, bm_driftless):
        # sinh(0.5) * (coth(0.5) - coth(1)), which also equals the classical
        # down identity at q = 0.5
        want = math.sinh(0.5) * (1.0 / math.tanh(0.5) - 1.0 / math.tanh(1.0))
        got = exit_down_functional(bm_driftless, HALF, None, SPEC)
        assert got == pytest.approx(want, abs=1e-5)
        assert got == pytest.approx(
            classical_exit_down(bm_driftless, 0.5, 0.0, 0.5, 1.0), abs=1e-5
        )


class TestSupremumLaw:
    def test_density_hand_value(self, bm_driftless):
        assert supremum_density(bm_driftless, SPEC, 0.8) == pytest.approx(1.5625)

    def test_conditional_density_normalizes(self, bm_driftless):
        total = adaptive_simpson(
            lambda z: supremum_density(bm_driftless, SPEC, z), 0.5, 1.0 - 1e-12,
            tol=1e-12,
        )
        assert total == pytest.approx(1.0, abs=1e-8)

    def test_unconditional_mass(self, bm_driftless):
        p_down = 1.0 - supremum_atom(bm_driftless, SPEC)
        total = adaptive_simpson(
            lambda z: supremum_density(bm_driftless, SPEC, z), 0.5, 1.0 - 1e-12,
            tol=1e-12,
        )
        assert total * p_down + supremum_atom(bm_driftless, SPEC) == pytest.approx(
            1.0, abs=1e-10
        )

    def test_domain_validation(self, bm_driftless):
        with pytest.raises(ValueError):
            supremum_density(bm_driftless, SPEC, 1.0)
        with pytest.raises(ValueError):
            supremum_density(bm_driftless, SPEC, 0.3)


class TestConditionalLaplace:
    def test_zero_potential_everywhere_one(self, bm_driftless):
        for z in (0.5, 0.62, 0.85, 1.0):
            val = conditional_laplace_given_sup(bm_driftless, ZERO, SPEC, z)
            assert val == pytest.approx(1.0, abs=1e-9)

    def test_upper_barrier_value(self, bm_driftless):
        want = 2.0 * math.sinh(0.5) / math.sinh(1.0)
        val = conditional_laplace_given_sup(bm_driftless, HALF, SPEC, 1.0)
        assert val == pytest.approx(want, abs=1e-5)

    def test_curve_matches_pointwise_values(self, bm_driftless):
        nodes, curve = conditional_curve(bm_driftless, HALF, SPEC, n_outer=33, n_inner=512)
        for idx in (8, 16, 32):
            val = conditional_laplace_given_sup(
                bm_driftless, HALF, SPEC, float(nodes[idx]), n_outer=33, n_inner=512
            )
            assert curve[idx] == pytest.approx(val, rel=1e-6)

    def test_law_of_total_expectation(self, bm_driftless):
        # the conditional value jumps at z = a: the down-branch limit keeps
        # the terminal-excursion factor, the atom does not.  The density
        # integral runs over down-exits, so it takes the down-branch limit.
        nodes, curve = conditional_curve(bm_driftless, HALF, SPEC)
        down_curve = curve.copy()
        down_curve[-1] = (
            curve[-1]
            * kappa(bm_driftless, HALF, SPEC.b, SPEC.a, 1024)
            / n_height_tail(bm_driftless, SPEC.a - SPEC.b)
        )
        dens = np.array(
            [supremum_density(bm_driftless, SPEC, float(z)) for z in nodes[:-1]]
        )
        dens = np.append(dens, supremum_density(bm_driftless, SPEC, nodes[-1] - 1e-9))
        p_up = supremum_atom(bm_driftless, SPEC)
        lhs = (1.0 - p_up) * composite_simpson(down_curve * dens, nodes[1] - nodes[0])
        lhs += p_up * curve[-1]
        res = evaluate_exit(bm_driftless, HALF, SPEC)
        rhs = res.up_laplace + res.down_value
        assert lhs == pytest.approx(rhs, abs=1e-5)

    def test_domain_validation(self, bm_driftless):
        with pytest.raises(ValueError):
            conditional_laplace_given_sup(bm_driftless, HALF, SPEC, 1.2)


class TestRepresentationInvariant:
    def test_two_quadratures_of_the_level_integral_agree(self, bm_driftless):
        # the construction defines Wf through exp(int iota); two Richardson
        # refined quadratures of that exponent must agree to 1e-8
        def level_integral(n_outer, n_inner):
            nodes = np.linspace(0.0, 1.0, n_outer)
            h = nodes[1] - nodes[0]
            vals = np.zeros(n_outer)
            for j, s in enumerate(nodes):
                if j == 0:
                    continue
                coarse = iota(bm_driftless, HALF, 0.0, float(s), n_inner)
                fine = iota(bm_driftless, HALF, 0.0, float(s), 2 * n_inner)
                # second-order scheme on a smooth potential
                vals[j] = (4.0 * fine - coarse) / 3.0
            return composite_simpson(vals, h)

        i_a = level_integral(65, 512)
        i_b = level_integral(97, 768)
        product = math.exp(i_a - i_b)
        assert abs(product - 1.0) < 1e-8


class TestRouteConstancy:
    def test_step_potential_ratio_is_constant(self, bm_driftless):
        ratios = route_constancy_ratios(bm_driftless)
        cv = ratios.std() / ratios.mean()
        assert cv < 1e-5


class TestZfTruncated:
    def test_drifting_family_closed_form(self, bm_drift_up):
        # 1 + (1 - 1/W(inf)) W(x) with W(inf) = 1/mu = 1 collapses to 1
        for x in (0.5, 1.0, 2.0):
            val = z_f_truncated(
                bm_drift_up, ZERO, 0.0, x, a_max=2.0 * x, tail_tol=1e-10, n_outer=257
            )
            assert val == pytest.approx(1.0, abs=1e-8)

    def test_oscillating_tail_does_not_converge(self, bm_driftless):
        with pytest.raises(TailNotConverged):
            z_f_truncated(
                bm_driftless, ZERO, 0.0, 1.0, a_max=2.0, tail_tol=1e-10, max_doublings=8
            )

    def test_horizon_stays_moderate_for_drifting_family(self, bm_drift_up):
        # convergence within 64 interval lengths of the starting point
        val = z_f_truncated(
            bm_drift_up, ZERO, 0.0, 0.5, a_max=1.0, tail_tol=1e-10, max_doublings=7
        )
        assert val == pytest.approx(1.0, abs=1e-7)

    def test_preconditions(self, bm_drift_up):
        with pytest.raises(ValueError):
            z_f_truncated(bm_drift_up, ZERO, 0.0, -1.0, 1.0, 1e-8)
        with pytest.raises(ValueError):
            z_f_truncated(bm_drift_up, ZERO, 0.0, 1.0, 0.5, 1e-8)


class TestLocalTime:
    def test_zero_potential(self, bm_driftless):
        f0 = UnivariatePotential(lambda x: 0.0 * x, bound=0.0, name="zero")
        assert local_time_laplace(bm_driftless, f0, SPEC) == pytest.approx(1.0, abs=1e-9)

    def test_constant_potential_matches_classical_sum(self, bm_driftless):
        fh = UnivariatePotential(lambda x: 0.5 + 0.0 * x, bound=0.5, name="half")
        val = local_time_laplace(bm_driftless, fh, SPEC)
        want = 2.0 * math.sinh(0.5) / math.sinh(1.0)
        assert val == pytest.approx(want, abs=1e-5)
        classical = classical_exit_up(
            bm_driftless, 0.5, 0.0, 0.5, 1.0
        ) + classical_exit_down(bm_driftless, 0.5, 0.0, 0.5, 1.0)
        assert val == pytest.approx(classical, abs=1e-5)


class TestDiagnostics:
    def test_refinement_reports_convergence(self, bm_driftless):
        res = evaluate_exit(bm_driftless, HALF, SPEC)
        assert res.diagnostics["converged"]
        assert res.diagnostics["refinement_levels"] >= 1
        assert res.iota_grid.shape[1] == 2
        assert res.kappa_grid.shape == res.iota_grid.shape

    def test_json_round_trip(self, bm_driftless):
        res = evaluate_exit(bm_driftless, ZERO, SPEC, refine=False)
        doc = res.to_json_dict()
        assert doc["up_laplace"] == res.up_laplace
        assert len(doc["iota"]) == res.iota_grid.shape[0]
