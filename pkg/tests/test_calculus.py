import numpy as np
import pytest

from aniprox.calculus import combine_constants, descent_inequality_sampler, strong_convexity_dual_check
from aniprox.errors import CalculusError, DomainError
from aniprox.experiments import rank_one_logistic_toy
from aniprox.models import build_exp_lp, build_logistic, logistic_toy
from aniprox.reference import Euclidean, Exp, Product, SymLogistic


class TestCombineConstants:
    def test_average_symlog(self):
        res = combine_constants("average", weights=[0.5, 0.5], constants=[2.0, 3.0], reference=SymLogistic(1))
        assert res.L == 3.0

    def test_average_euclidean(self):
        res = combine_constants("average", weights=[0.25, 0.75], constants=[5.0, 1.0],
                                reference=Euclidean([1.0]))
        assert res.L == 5.0

    def test_average_rejects_exp(self):
        with pytest.raises(CalculusError):
            combine_constants("average", weights=[0.5, 0.5], constants=[2.0, 3.0], reference=Exp(1))

    def test_average_weights_must_sum_to_one(self):
        with pytest.raises(CalculusError):
            combine_constants("average", weights=[0.5, 0.6], constants=[2.0, 3.0], reference=SymLogistic(1))

    def test_conic_exp(self):
        res = combine_constants("conic_exp", weights=[10.0, 7.0], constants=[2.0, 3.0], reference=Exp(1))
        assert res.L == 3.0

    def test_conic_requires_exp(self):
        with pytest.raises(CalculusError):
            combine_constants("conic_exp", weights=[1.0], constants=[2.0], reference=SymLogistic(1))

    def test_conic_requires_positive_sum(self):
        with pytest.raises(CalculusError):
            combine_constants("conic_exp", weights=[0.0, 0.0], constants=[2.0, 3.0], reference=Exp(1))

    def test_relax(self):
        assert combine_constants("relax", L1=1.0, L2=2.0).L == 2.0
        with pytest.raises(CalculusError):
            combine_constants("relax", L1=2.0, L2=1.0)

    def test_separable_product(self):
        res = combine_constants("separable", blocks=[(Exp(1), 2.0), (SymLogistic(1), 4.0)])
        assert res.L == 1.0
        assert isinstance(res.reference, Product)
        x = np.array([0.3, -0.2])
        expected = 0.5 * Exp(1).value([0.3 / 0.5]) + 0.25 * SymLogistic(1).value([-0.2 / 0.25])
        assert res.reference.value(x) == pytest.approx(expected, rel=1e-14)

    def test_separable_rule_is_certified_by_sampler(self):
        # f(x1, x2) = exp(2 x1) / 2 + logistic loss of 0.5 x2; block constants 2 and 0.25
        logi = build_logistic(np.array([[0.5]]), np.array([1.0]))

        class Sum:
            @staticmethod
            def value(x):
                return 0.5 * np.exp(2 * x[0]) + logi.f.value(x[1:])

            @staticmethod
            def grad(x):
                return np.array([np.exp(2 * x[0]), logi.f.grad(x[1:])[0]])

        res = combine_constants("separable", blocks=[(Exp(1), 2.0), (SymLogistic(1), logi.L)])
        rep = descent_inequality_sampler(Sum, res.reference, res.L, 2000, 0)
        assert rep.skipped == 0
        assert rep.passed(1e-10)

    def test_tilt_scale(self):
        res = combine_constants("tilt_scale", L=2.0, reference=Exp(1), alpha=3.0, c=[1.0])
        assert res.L == 2.0
        assert res.reference.value(np.array([0.0])) == pytest.approx(3.0)

    def test_unknown_rule(self):
        with pytest.raises(CalculusError):
            combine_constants("sum", L=1.0)


class TestDescentSampler:
    def test_logistic_toy_passes(self):
        A, b = logistic_toy(100, 10, 0)
        model = build_logistic(A, b)
        rep = descent_inequality_sampler(model.f, model.phi, model.L, 2000, 0, scale=3.0)
        assert rep.passed(1e-8)
        assert rep.skipped == 0

    def test_tight_at_anchor(self):
        A, b = logistic_toy(30, 4, 1)
        model = build_logistic(A, b)
        assert descent_inequality_sampler(model.f, model.phi, model.L, 200, 1).tight_residual <= 1e-12

    def test_exp_sum_passes(self):
        rng = np.random.default_rng(0)
        model = build_exp_lp(rng.uniform(0.0, 1.0, (6, 3)), rng.standard_normal(6), -np.ones(3), 1.0)
        assert descent_inequality_sampler(model.f, model.phi, model.L, 2000, 0).passed(1e-8)

    def test_halved_constant_detected(self):
        A, b = rank_one_logistic_toy()
        model = build_logistic(A, b)
        assert descent_inequality_sampler(model.f, model.phi, model.L, 2000, 0, scale=3.0).passed(1e-8)
        bad = descent_inequality_sampler(model.f, model.phi, model.L / 2, 2000, 0, scale=3.0)
        assert bad.worst_violation > 1e-3

    def test_halved_exp_constant_detected(self):
        model = build_exp_lp([[1.0]], [0.0], [-1.0], 1.0)
        bad = descent_inequality_sampler(model.f, model.phi, model.L / 2, 2000, 0)
        assert bad.worst_violation > 1e-3

    def test_shift_invariance(self):
        A, b = logistic_toy(40, 3, 0)
        model = build_logistic(A, b)
        a = np.random.default_rng(5).normal(0.0, 1.0, 3)
        shifted = model.f.shifted(a)
        r1 = descent_inequality_sampler(model.f, model.phi, model.L, 500, 3)
        r2 = descent_inequality_sampler(shifted, model.phi, model.L, 500, 3, shift=a)
        assert r2.worst_violation == pytest.approx(r1.worst_violation, abs=1e-12)

    def test_boundary_gradient_is_skipped(self):
        class Flat:
            @staticmethod
            def value(x):
                return float(x[0])

            @staticmethod
            def grad(x):
                return np.array([1.0])

        rep = descent_inequality_sampler(Flat, SymLogistic(1), 1.0, 10, 0)
        assert rep.skipped == 10 and rep.evaluated == 0


class TestStrongConvexity:
    grid = np.linspace(-0.99, 0.99, 199)

    def test_quadratic_valid(self):
        nu = 0.3
        assert strong_convexity_dual_check(lambda t: 1.0 / nu, SymLogistic(1), 2 * nu, self.grid)

    def test_quadratic_too_large(self):
        nu = 0.3
        assert not strong_convexity_dual_check(lambda t: 1.0 / nu, SymLogistic(1), 2 * nu + 0.1, self.grid)

    @pytest.mark.parametrize("mu", [0.1, 1.0, 100.0])
    def test_abs_any_constant(self, mu):
        assert strong_convexity_dual_check(lambda t: 0.0, SymLogistic(1), mu, self.grid)

    def test_grid_outside_interior(self):
        with pytest.raises(DomainError):
            strong_convexity_dual_check(lambda t: 0.0, SymLogistic(1), 1.0, [0.0, 1.0])
