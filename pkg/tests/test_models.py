import math

import numpy as np
import pytest

from aniprox.data import generate_exp_lp
from aniprox.errors import ConfigurationError, ConstraintQualificationError, NumericError
from aniprox.experiments import ot_instance
from aniprox.models import (
    L_FLOOR,
    build_exp_lp,
    build_lifted_exp_lp,
    build_logistic,
    build_ot_dual,
    gradient_check,
    logistic_toy,
    parallel_update_step,
    sinkhorn,
)
from aniprox.prox import L1, Consensus, Linear, SquaredL2, Zero
from aniprox.reference import Exp, SymLogistic
from aniprox.solver import forward_step


class TestLogistic:
    def test_degenerate_row_uses_floor(self):
        model = build_logistic([[0.0]], [1.0])
        assert model.L == L_FLOOR
        assert model.f.value(np.array([3.0])) == pytest.approx(math.log(2), rel=1e-15)
        np.testing.assert_array_equal(model.f.grad(np.array([3.0])), [0.0])

    def test_gradient_at_origin(self):
        model = build_logistic([[1.0]], [1.0])
        np.testing.assert_array_equal(model.f.grad(np.zeros(1)), [-0.5])

    def test_constant_is_max_row_norm(self):
        assert build_logistic([[1.0], [-1.0]], [1.0, 1.0]).L == 1.0

    def test_reference_and_regularizer(self):
        model = build_logistic([[0.5, -0.5]], [1.0], ("l1", 0.2))
        assert isinstance(model.phi, SymLogistic)
        assert isinstance(model.g, L1)
        f, g = model
        assert f is model.f and g is model.g
        assert isinstance(build_logistic([[0.5]], [1.0], ("sql2", 0.2)).g, SquaredL2)
        assert isinstance(build_logistic([[0.5]], [1.0]).g, Zero)

    def test_rejects_out_of_range_entries(self):
        with pytest.raises(ConfigurationError):
            build_logistic([[1.5]], [1.0])

    def test_rejects_bad_labels(self):
        with pytest.raises(ConfigurationError):
            build_logistic([[0.5]], [0.0])

    def test_large_margin_is_stable(self):
        model = build_logistic([[1.0]], [1.0])
        assert model.f.value(np.array([-800.0])) == pytest.approx(800.0, rel=1e-15)
        assert model.f.value(np.array([800.0])) == pytest.approx(0.0, abs=1e-300)

    def test_gradient_inside_open_unit_box(self):
        A, b = logistic_toy(50, 5, 1)
        model = build_logistic(A, b)
        rng = np.random.default_rng(0)
        for _ in range(50):
            d = model.f.grad(rng.normal(0.0, 10.0, 5))
            assert np.all(np.abs(d) < 1)

    def test_toy_is_deterministic(self):
        A1, b1 = logistic_toy(20, 3, 7)
        A2, b2 = logistic_toy(20, 3, 7)
        assert A1.tobytes() == A2.tobytes() and b1.tobytes() == b2.tobytes()


class TestExpLp:
    def test_scalar_stationary_point(self):
        model = build_exp_lp([[1.0]], [0.0], [-1.0], 1.0)
        x = np.zeros(1)
        np.testing.assert_array_equal(model.f.grad(x), [1.0])
        assert model.f.value(x) + model.g.value(x) == 1.0

    def test_epi_scaled_value_at_zero(self):
        model = build_exp_lp([[1.0]], [0.0], [-1.0], 2.0)
        assert model.f.value(np.zeros(1)) == 2.0

    def test_constant(self):
        model = build_exp_lp([[0.5, 0.5]], [0.0], [-1.0, -1.0], 0.1)
        assert model.L == pytest.approx(10.0, rel=1e-15)
        assert isinstance(model.phi, Exp) and isinstance(model.g, Linear)

    def test_zero_column(self):
        with pytest.raises(ConstraintQualificationError, match="column 1"):
            build_exp_lp([[1.0, 0.0]], [0.0], [-1.0, -1.0], 1.0)

    def test_nonnegative_cost(self):
        with pytest.raises(ConstraintQualificationError):
            build_exp_lp([[1.0]], [0.0], [0.0], 1.0)

    def test_negative_matrix_entry(self):
        with pytest.raises(ConfigurationError):
            build_exp_lp([[-1.0]], [0.0], [-1.0], 1.0)

    def test_overflow_value_is_infinite(self):
        model = build_exp_lp([[1.0]], [0.0], [-1.0], 1e-3)
        assert model.f.value(np.array([10.0])) == math.inf
        with pytest.raises(NumericError):
            model.f.grad(np.array([10.0]))


class TestLiftedExpLp:
    def test_zero_column_needs_shift(self):
        with pytest.raises(ConstraintQualificationError, match="A-"):
            build_lifted_exp_lp([[1.0]], [0.0], [-1.0], 1.0, eps=0.0)

    def test_shifted_split(self):
        eps = 1e-8
        model = build_lifted_exp_lp([[1.0, -1.0]], [0.0], [0.0, 0.0], 1.0, eps=eps)
        np.testing.assert_array_equal(model.A_plus, [[1 + eps, eps]])
        np.testing.assert_array_equal(model.A_minus, [[eps, 1 + eps]])
        np.testing.assert_allclose(model.A_plus - model.A_minus, [[1.0, -1.0]], atol=1e-15)
        assert model.L == pytest.approx(2 + 4 * eps, rel=1e-15)

    def test_structure(self):
        model = build_lifted_exp_lp([[0.5, -0.25]], [0.1], [-1.0, 2.0], 0.5)
        assert isinstance(model.g, Consensus)
        z = model.lift([1.0, 2.0])
        np.testing.assert_array_equal(z, [1.0, 2.0, -1.0, -2.0])
        np.testing.assert_array_equal(model.unlift(z), [1.0, 2.0])

    def test_lifted_objective_restricts_to_original(self):
        A = np.array([[0.5, -0.25], [-0.3, 0.2]])
        b, c = np.array([0.1, -0.2]), np.array([-1.0, 2.0])
        model = build_lifted_exp_lp(A, b, c, 0.5, eps=0.0, force=True)
        x = np.array([0.3, -0.7])
        expected = 0.5 * float(np.exp((A @ x - b) / 0.5).sum()) + float(c @ x)
        assert model.f.value(model.lift(x)) == pytest.approx(expected, rel=1e-14)
        assert model.total_objective().value(x) == pytest.approx(expected, rel=1e-14)

    def test_symmetric_factors_fix_point(self):
        model = build_lifted_exp_lp([[1.0], [-1.0]], [0.0, 0.0], [0.0], 1.0, eps=1e-8)
        np.testing.assert_allclose(parallel_update_step(model, 1.0, np.zeros(1)), [0.0], atol=1e-15)

    @pytest.mark.parametrize("x", [-2.0, 0.0, 0.7, 5.0])
    def test_boosting_special_case(self, x):
        model = build_lifted_exp_lp([[1.0], [-1.0]], [0.0, 0.0], [0.0], 1.0, eps=0.0, force=True)
        np.testing.assert_allclose(parallel_update_step(model, 1.0, np.array([x])), [0.0], atol=1e-14)

    def test_floor_events_counted(self):
        model = build_lifted_exp_lp([[1.0]], [0.0], [0.0], 1.0, eps=0.0, force=True)
        parallel_update_step(model, 1.0, np.zeros(1))
        assert model.floor_events[0] == 1

    def test_parallel_equals_lifted_path(self):
        A, b, c, sigma = generate_exp_lp(30, 10, 0, 0.05)
        model = build_lifted_exp_lp(A, b, c, sigma)
        lam = 1.0 / model.L
        x = np.zeros(10)
        z = model.lift(x)
        for _ in range(50):
            x = parallel_update_step(model, lam, x)
            y = forward_step(model.f, lam, z)
            z = model.g.backward_step(model.phi, lam, y).point
            np.testing.assert_allclose(model.unlift(z), x, atol=1e-10)
            np.testing.assert_allclose(z[10:], -z[:10], atol=0)

    def test_generated_scalar_instance(self):
        A, b, c, sigma = generate_exp_lp(1, 1, 0)
        model = build_lifted_exp_lp(A, b, c, sigma)
        assert model.L > 0


class TestOtDual:
    def test_one_by_one(self):
        model = build_ot_dual([[0.0]], [1.0], [1.0], 1.0, "gauss_seidel")
        (alpha, beta), = model.run_gauss_seidel(1, alpha0=[0.4], beta0=[0.3])
        assert alpha[0] + beta[0] == pytest.approx(0.0, abs=1e-15)
        np.testing.assert_allclose(alpha, [-0.3], atol=1e-15)

    def test_constants(self):
        C, r, s = ot_instance(3, 4, 0)
        joint = build_ot_dual(C, r, s, 0.1, "joint")
        gs = build_ot_dual(C, r, s, 0.1, "gauss_seidel")
        assert joint.L == pytest.approx(20.0) and joint.lam == pytest.approx(0.05)
        assert gs.L == pytest.approx(10.0) and gs.lam == pytest.approx(0.1)

    def test_rejects_nonpositive_marginal(self):
        with pytest.raises(ConstraintQualificationError):
            build_ot_dual([[0.0, 1.0]], [1.0, 0.0], [1.0], 1.0)

    def test_rejects_bad_shape(self):
        with pytest.raises(ConfigurationError):
            build_ot_dual([[0.0, 1.0]], [1.0], [1.0], 1.0)

    @pytest.mark.parametrize("seed", range(5))
    def test_gauss_seidel_is_sinkhorn(self, seed):
        C, r, s = ot_instance(5, 5, seed)
        model = build_ot_dual(C, r, s, 0.1, "gauss_seidel")
        for (a, b), (u, v) in zip(model.run_gauss_seidel(100), sinkhorn(C, r, s, 0.1, 100)):
            np.testing.assert_allclose(a, 0.1 * np.log(u), atol=1e-8)
            np.testing.assert_allclose(b, 0.1 * np.log(v), atol=1e-8)

    def test_sinkhorn_marginals(self):
        C, r, s = ot_instance(4, 3, 1)
        u, v = sinkhorn(C, r, s, 0.1, 500)[-1]
        P = v[:, None] * np.exp(-C / 0.1) * u[None, :]
        np.testing.assert_allclose(P.sum(axis=1), s, atol=1e-12)
        np.testing.assert_allclose(P.sum(axis=0), r, atol=1e-8)


class TestGradientCheck:
    def test_logistic(self):
        A, b = logistic_toy(100, 10, 0)
        f = build_logistic(A, b).f
        pts = np.random.default_rng(0).normal(0.0, 2.0, (100, 10))
        assert gradient_check(f, pts) <= 1e-5

    def test_exp_lp(self):
        A, b, c, sigma = generate_exp_lp(30, 10, 0, 0.05)
        model = build_lifted_exp_lp(A, b, c, sigma)
        pts = np.random.default_rng(1).normal(0.0, 0.05, (100, 20))
        assert gradient_check(model.f, pts) <= 1e-5

    def test_ot(self):
        C, r, s = ot_instance(5, 5, 0)
        model = build_ot_dual(C, r, s, 0.1, "joint")
        pts = np.random.default_rng(2).normal(0.0, 0.1, (100, 10))
        assert gradient_check(model.f, pts) <= 1e-5

    def test_detects_wrong_gradient(self):
        A, b = logistic_toy(10, 2, 0)
        f = build_logistic(A, b).f

        class Wrong:
            value = f.value

            @staticmethod
            def grad(x):
                return 2.0 * f.grad(x)

        assert gradient_check(Wrong, [np.ones(2)]) > 0.1
