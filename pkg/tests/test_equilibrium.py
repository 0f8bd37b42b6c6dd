import numpy as np
import pytest

from wealthkin import (
    ModelParams,
    MomentPair,
    WealthGrid,
    constitutive_residual,
    fixed_point_solve,
    gibbs_closed_form,
    gibbs_for_coefficients,
    gibbs_numeric,
    inverse_gamma_moment,
    manifold_upsilon2,
    moment_recursion,
)
from wealthkin._chang_cooper import build_collision_operator
from wealthkin.errors import DivergentMomentError, NonConvergenceError
from wealthkin.model import strategy_a, strategy_b

P11 = ModelParams(d=1.0, kappa=1.0)


def wide_oracle_grid(ig, n=12000):
    """Log grid wide enough for 2nd-moment quadrature at 1e-6 relative."""
    y_max = ig.beta * max(1e4, (2.0 * (ig.alpha - 1.0) / 2e-7) ** (1.0 / (ig.alpha - 2.0)))
    return WealthGrid.log_spaced(1e-4 * ig.beta, y_max, n)


class TestClosedForm:
    def test_shape_scale(self):
        ig = gibbs_closed_form(1.0, 1.0)
        assert (ig.alpha, ig.beta) == (3.0, 2.0)

    def test_mean_reproduces_upsilon1(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            u1 = float(np.exp(rng.uniform(-1.5, 1.5)))
            kappa = float(np.exp(rng.uniform(-0.7, 1.4)))
            ig = gibbs_closed_form(u1, kappa)
            assert ig.moment(1) == pytest.approx(u1, rel=1e-12)

    def test_second_moment_on_manifold(self):
        ig = gibbs_closed_form(1.0, 1.0)
        assert ig.moment(2) == pytest.approx(2.0)
        assert ig.moment(2) == pytest.approx(manifold_upsilon2(1.0, 1.0))

    def test_moments(self):
        ig = gibbs_closed_form(1.0, 1.0)
        assert inverse_gamma_moment(ig, 0) == 1.0
        assert inverse_gamma_moment(ig, 1) == pytest.approx(1.0)
        assert inverse_gamma_moment(ig, 2) == pytest.approx(2.0)
        with pytest.raises(DivergentMomentError):
            inverse_gamma_moment(ig, 3)

    def test_quadrature_oracle_agreement(self):
        rng = np.random.default_rng(7)
        for _ in range(5):
            u1 = float(np.exp(rng.uniform(-1.5, 1.5)))
            kappa = float(np.exp(rng.uniform(np.log(0.5), np.log(4.0))))
            ig = gibbs_closed_form(u1, kappa)
            grid = wide_oracle_grid(ig)
            vals = ig.pdf(grid.nodes)
            for k in (0, 1, 2):
                assert grid.moment(vals, k) == pytest.approx(ig.moment(k), rel=1e-6)

    def test_pareto_tail_exponent(self):
        rng = np.random.default_rng(3)
        for _ in range(6):
            u1 = float(np.exp(rng.uniform(-1.0, 1.0)))
            kappa = float(np.exp(rng.uniform(np.log(0.5), np.log(3.0))))
            ig = gibbs_closed_form(u1, kappa)
            y = np.geomspace(1e2 * ig.beta, 1e3 * ig.beta, 40)
            slope = np.polyfit(np.log(y), ig.logpdf(y), 1)[0]
            assert slope == pytest.approx(-(kappa + 3.0), abs=0.05)

    def test_normalization_integrates_to_one(self):
        ig = gibbs_closed_form(0.7, 2.0)
        grid = wide_oracle_grid(ig)
        assert grid.quadrature(ig.pdf(grid.nodes)) == pytest.approx(1.0, abs=3e-7)


class TestDiscreteGibbs:
    def test_matches_closed_form_l1(self):
        grid = WealthGrid.log_spaced(1e-3, 1e3, 400)
        dg = gibbs_numeric(2.0, -2.0, 1.0, grid)
        exact = gibbs_closed_form(1.0, 1.0).pdf(grid.nodes)
        assert grid.quadrature(np.abs(dg.values - exact)) <= 1e-3

    def test_refinement_first_order_or_better(self):
        errs = []
        for n in (400, 800):
            grid = WealthGrid.log_spaced(1e-3, 1e3, n)
            dg = gibbs_numeric(2.0, -2.0, 1.0, grid)
            exact = gibbs_closed_form(1.0, 1.0).pdf(grid.nodes)
            errs.append(grid.quadrature(np.abs(dg.values - exact)))
        assert errs[0] / errs[1] >= 1.8

    def test_unit_quadrature(self):
        grid = WealthGrid.log_spaced(1e-3, 1e3, 300)
        dg = gibbs_numeric(3.0, -1.5, 0.7, grid)
        assert grid.quadrature(dg.values) == pytest.approx(1.0, abs=1e-10)

    def test_zero_face_fluxes(self):
        grid = WealthGrid.log_spaced(1e-3, 1e3, 300)
        a, b, d = 2.5, -2.0, 1.0
        dg = gibbs_numeric(a, b, d, grid)
        op = build_collision_operator(a, b, d, grid)
        flux = op.face_fluxes(dg.values)
        # rounding scale of a single flux: conductance times the profile
        scale = np.max(d / np.diff(grid.nodes) * (grid.nodes**2 * dg.values)[:-1])
        assert np.max(np.abs(flux)) <= 1e-11 * scale

    def test_first_moment_matches_recursion(self):
        grid = WealthGrid.log_spaced(1e-3, 1e3, 400)
        dg = gibbs_numeric(2.0, -2.0, 1.0, grid)
        predicted = moment_recursion(2.0, -2.0, 1.0, 1)[0]
        assert dg.moment(1) == pytest.approx(predicted, rel=1e-3)

    def test_coefficient_to_inverse_gamma_map(self):
        ig = gibbs_for_coefficients(2.0, -2.0, 1.0)
        assert (ig.alpha, ig.beta) == (3.0, 2.0)
        with pytest.raises(ValueError):
            gibbs_for_coefficients(2.0, 0.5, 1.0)


class TestMomentRecursion:
    def test_examples(self):
        assert np.allclose(moment_recursion(2.0, -2.0, 1.0, 2), [1.0, 2.0])
        assert np.allclose(moment_recursion(3.0, 0.0, 1.0, 2), [0.0, 0.0])

    def test_divergence_at_third_moment(self):
        with pytest.raises(DivergentMomentError):
            moment_recursion(2.0, -2.0, 1.0, 3)


class TestConstitutive:
    def test_on_manifold_zero(self):
        r1, r2 = constitutive_residual(MomentPair(1.0, 2.0), P11)
        assert r1 == 0.0 and r2 == 0.0

    def test_off_manifold_values(self):
        # brute-force substitution: a=1.5, b=-2 at (1,3); both residuals -0.5
        r1, r2 = constitutive_residual(MomentPair(1.0, 3.0), P11)
        assert r1 == pytest.approx(-0.5)
        assert r2 == pytest.approx(-0.5)

    def test_second_is_upsilon1_times_first(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            u1 = float(np.exp(rng.uniform(-1, 1)))
            u2 = u1**2 * float(np.exp(rng.uniform(0.1, 1.5)))
            m = MomentPair(u1, u2)
            p = ModelParams(d=1.4, kappa=0.8)
            r1, r2 = constitutive_residual(m, p)
            independent = m.upsilon1 * (
                p.d * m.upsilon1 * m.upsilon2 / (m.upsilon2 - m.upsilon1**2)
                + strategy_b(m.upsilon1, p)
            )
            scale = max(abs(r2), abs(independent), 1e-10)
            assert abs(r2 - independent) / scale < 1e-12

    def test_residual_scales_to_zero_with_mean(self):
        p = P11
        base = constitutive_residual(MomentPair(1.0, 3.0), p)
        for s in (1e-2, 1e-4):
            r1, r2 = constitutive_residual(MomentPair(s, 3.0 * s**2), p)
            assert r1 == pytest.approx(s * base[0], rel=1e-10)
            assert r2 == pytest.approx(s**2 * base[1], rel=1e-10)

    def test_manifold_upsilon2(self):
        assert manifold_upsilon2(1.0, 1.0) == pytest.approx(2.0)
        assert manifold_upsilon2(2.0, 1.0) == pytest.approx(8.0)
        assert manifold_upsilon2(1.0, 1e8) == pytest.approx(1.0, rel=1e-7)
        r1, r2 = constitutive_residual(MomentPair(0.8, manifold_upsilon2(0.8, 2.3)), ModelParams(d=1.0, kappa=2.3))
        assert abs(r1) < 1e-12 and abs(r2) < 1e-12


class TestFixedPoint:
    """A grid wide enough that the discrete map's fixed-point curve exists at
    the solver tolerance: on the default truncation the second-moment defect
    (~4e-3) leaves no fixed point with order-one mean wealth."""

    WIDE = WealthGrid.log_spaced(1e-4, 1e10, 25000)

    def risk_averse_maps(self, p):
        return (lambda m: strategy_a(m, p)), (lambda m: strategy_b(m.upsilon1, p))

    def test_converges_to_manifold_from_off_manifold(self):
        a_fn, b_fn = self.risk_averse_maps(P11)
        m = fixed_point_solve(a_fn, b_fn, 1.0, MomentPair(1.0, 3.0), self.WIDE)
        assert m.upsilon2 / m.upsilon1**2 == pytest.approx(2.0, abs=1e-6)

    def test_on_manifold_init_unchanged(self):
        a_fn, b_fn = self.risk_averse_maps(P11)
        m = fixed_point_solve(a_fn, b_fn, 1.0, MomentPair(1.0, 2.0), self.WIDE)
        assert m.upsilon1 == pytest.approx(1.0, abs=1e-6)
        assert m.upsilon2 == pytest.approx(2.0, abs=1e-6)

    def test_constant_coefficients(self):
        m = fixed_point_solve(lambda m: 2.0, lambda m: -2.0, 1.0, MomentPair(0.5, 0.6), self.WIDE)
        assert m.upsilon1 == pytest.approx(1.0, rel=1e-6)
        assert m.upsilon2 == pytest.approx(2.0, rel=1e-6)

    def test_non_convergence_reported(self):
        a_fn, b_fn = self.risk_averse_maps(P11)
        grid = WealthGrid.log_spaced(1e-3, 1e3, 200)
        with pytest.raises(NonConvergenceError):
            fixed_point_solve(a_fn, b_fn, 1.0, MomentPair(1.0, 3.0), grid, tol=1e-14, max_iter=4)
