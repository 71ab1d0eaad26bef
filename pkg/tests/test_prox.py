import math

import numpy as np
import pytest
from scipy.optimize import brentq, minimize_scalar

from aniprox.errors import ConfigurationError, ConstraintQualificationError, ProxBoundednessError
from aniprox.prox import (
    L1,
    Consensus,
    Linear,
    ScalarAbs,
    ScalarLinear,
    ScalarQuadratic,
    ScalarZero,
    SeparableCustom,
    SquaredL2,
    Zero,
    backward_step,
    moreau_decomposition_residual,
    prox_consensus_exp,
    prox_l1_symlog,
    prox_linear_exp,
    prox_separable_generic,
    prox_sql2_symlog,
    prox_zero,
)
from aniprox.reference import Euclidean, Exp, Product, SymLogistic


def scalar_oracle(objective, lo=-50.0, hi=50.0):
    """Bounded 1D minimization used as an independent reference."""
    res = minimize_scalar(objective, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
    return res.x


class TestBackwardStepDispatch:
    def test_zero_euclidean(self):
        res = backward_step(Zero(1), Euclidean([1.0]), 0.5, [2.0])
        np.testing.assert_array_equal(res.point, [2.0])

    def test_l1_symlog(self):
        res = backward_step(L1(1, 0.5), SymLogistic(1), 1.0, [2.0])
        np.testing.assert_allclose(res.point, [2 - math.log(3)], atol=1e-15)
        h = SymLogistic(1)
        oracle = scalar_oracle(lambda t: 0.5 * abs(t) + h.value([t - 2.0]))
        assert res.point[0] == pytest.approx(oracle, abs=1e-7)

    def test_linear_exp(self):
        res = backward_step(Linear([-1.0]), Exp(1), 0.7, [3.0])
        np.testing.assert_array_equal(res.point, [3.0])

    def test_envelope_value(self):
        h = SymLogistic(1)
        res = backward_step(L1(1, 0.5), h, 1.0, [2.0])
        x = res.point[0]
        assert res.envelope_value == pytest.approx(0.5 * abs(x) + h.value([x - 2.0]), rel=1e-14)

    def test_step_at_threshold_rejected(self):
        g = L1(1, 0.5, lambda_g=2.0)
        with pytest.raises(ConfigurationError):
            g.backward_step(SymLogistic(1), 2.0, np.array([1.0]))

    def test_nonpositive_step_rejected(self):
        with pytest.raises(ConfigurationError):
            Zero(1).backward_step(Euclidean([1.0]), 0.0, np.array([1.0]))


class TestProxZero:
    def test_euclidean(self):
        np.testing.assert_array_equal(prox_zero(Euclidean([1.0, 1.0]), 1.0, [1.0, 2.0]), [1.0, 2.0])

    def test_symlog(self):
        np.testing.assert_array_equal(prox_zero(SymLogistic(1), 2.0, [0.0]), [0.0])

    def test_exp_violates_cq(self):
        with pytest.raises(ConstraintQualificationError):
            prox_zero(Exp(1), 1.0, [0.3])


class TestProxLinearExp:
    def test_unit_coefficient(self):
        np.testing.assert_array_equal(prox_linear_exp([-1.0], 3.0, [5.0]), [5.0])

    def test_minus_e(self):
        np.testing.assert_allclose(prox_linear_exp([-math.e], 1.0, [0.0]), [1.0], rtol=1e-15)
        oracle = brentq(lambda t: math.exp(t) - math.e, -5, 5, xtol=1e-14)
        assert oracle == pytest.approx(1.0, abs=1e-12)

    def test_half(self):
        np.testing.assert_allclose(prox_linear_exp([-0.5], 2.0, [0.0]), [2 * math.log(0.5)], rtol=1e-15)

    @pytest.mark.parametrize("c", [[0.0], [1.0], [-1.0, 0.5]])
    def test_nonnegative_coefficient(self, c):
        with pytest.raises(ConstraintQualificationError):
            prox_linear_exp(c, 1.0, np.zeros(len(c)))


class TestProxL1Symlog:
    def test_tiny_weight_at_zero(self):
        np.testing.assert_array_equal(prox_l1_symlog(0.001, 1.0, [0.0]), [0.0])

    def test_negative_input(self):
        np.testing.assert_allclose(prox_l1_symlog(0.5, 1.0, [-2.0]), [-(2 - math.log(3))], atol=1e-15)

    def test_weight_at_least_one_gives_zero(self):
        np.testing.assert_array_equal(prox_l1_symlog(2.0, 1.0, [10.0]), [0.0])


class TestProxSql2Symlog:
    def test_zero_fixed_point(self):
        np.testing.assert_array_equal(prox_sql2_symlog(0.7, 1.3, [0.0]), [0.0])

    def test_against_bisection(self):
        oracle = brentq(lambda x: x + math.tanh((x - 2) / 2), -2, 2, xtol=1e-14)
        np.testing.assert_allclose(prox_sql2_symlog(1.0, 1.0, [2.0]), [oracle], atol=1e-10)
        assert oracle == pytest.approx(0.6033147, abs=1e-7)

    def test_huge_weight_pins_zero(self):
        assert abs(prox_sql2_symlog(1e8, 1.0, [5.0])[0]) <= 1e-6


class TestConsensus:
    def test_symmetric_pair(self):
        x, xm = prox_consensus_exp(1.0, ([1.0], [1.0]))
        np.testing.assert_array_equal(x, [0.0])
        np.testing.assert_array_equal(xm, [0.0])

    def test_scalar(self):
        x, xm = prox_consensus_exp(1.0, ([3.0], [1.0]))
        np.testing.assert_array_equal(x, [1.0])
        np.testing.assert_array_equal(xm, [-1.0])

    def test_componentwise(self):
        x, xm = prox_consensus_exp(0.3, ([2.0, 0.0], [0.0, 4.0]))
        np.testing.assert_array_equal(x, [1.0, -2.0])
        np.testing.assert_array_equal(xm, [-1.0, 2.0])

    def test_regularizer_needs_identical_blocks(self):
        g = Consensus(1)
        with pytest.raises(ConstraintQualificationError):
            g.backward_step(Product([(Exp(1), 1.0), (Exp(1), 2.0)]), 1.0, np.array([1.0, 2.0]))

    def test_regularizer_value(self):
        g = Consensus(2)
        assert g.value([1.0, 2.0, -1.0, -2.0]) == 0.0
        assert g.value([1.0, 2.0, 1.0, -2.0]) == math.inf


class TestSeparableGeneric:
    def test_zero_euclidean(self):
        y = np.array([0.3, -2.0])
        x = prox_separable_generic([ScalarZero(), ScalarZero()], Euclidean([1.0, 1.0]), 0.7, y)
        np.testing.assert_allclose(x, y, atol=1e-12)

    def test_abs_matches_closed_form(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            nu, lam = rng.uniform(0.05, 0.95), rng.uniform(0.1, 3.0)
            y = rng.normal(0.0, 3.0, 4)
            x = prox_separable_generic([ScalarAbs(nu)] * 4, SymLogistic(4), lam, y)
            np.testing.assert_allclose(x, prox_l1_symlog(nu, lam, y), atol=1e-8)

    def test_linear_matches_closed_form(self):
        c = np.array([-0.3, -2.0])
        y = np.array([1.0, -4.0])
        x = prox_separable_generic([ScalarLinear(v) for v in c], Exp(2), 0.8, y)
        np.testing.assert_allclose(x, prox_linear_exp(c, 0.8, y), atol=1e-8)

    def test_quadratic_matches_newton(self):
        y = np.array([2.0, -0.5, 7.0])
        x = prox_separable_generic([ScalarQuadratic(1.5)] * 3, SymLogistic(3), 0.9, y)
        np.testing.assert_allclose(x, prox_sql2_symlog(1.5, 0.9, y), atol=1e-8)

    def test_unbounded_objective_raises(self):
        # slope 3 exceeds the range (-1, 1) of the symlog gradient: unbounded below
        with pytest.raises(ProxBoundednessError):
            prox_separable_generic([ScalarLinear(-3.0)], SymLogistic(1), 1.0, np.array([0.0]))

    def test_custom_regularizer(self):
        g = SeparableCustom([ScalarAbs(0.5)])
        res = g.backward_step(SymLogistic(1), 1.0, np.array([2.0]))
        np.testing.assert_allclose(res.point, [2 - math.log(3)], atol=1e-8)


class TestRegularizerFastPaths:
    def test_l1_euclidean_soft_threshold(self):
        x = L1(2, 0.5).backward_step(Euclidean([1.0, 2.0]), 2.0, np.array([3.0, -0.2])).point
        np.testing.assert_array_equal(x, [2.0, 0.0])

    def test_l1_exp_generic_branch(self):
        phi = Exp(1)
        x = L1(1, 0.5).backward_step(phi, 1.0, np.array([2.0])).point[0]
        oracle = scalar_oracle(lambda t: 0.5 * abs(t) + math.exp(t - 2.0))
        assert x == pytest.approx(oracle, abs=1e-7)

    def test_sql2_exp_generic_branch(self):
        x = SquaredL2(1, 1.0).backward_step(Exp(1), 1.0, np.array([0.0])).point[0]
        oracle = brentq(lambda t: t + math.exp(t), -5, 5, xtol=1e-14)
        assert x == pytest.approx(oracle, abs=1e-10)

    def test_sql2_euclidean(self):
        x = SquaredL2(1, 1.0).backward_step(Euclidean([1.0]), 1.0, np.array([4.0])).point
        np.testing.assert_allclose(x, [2.0])


class TestMoreauDecomposition:
    def test_example_point(self):
        assert moreau_decomposition_residual(L1(1, 0.5), SymLogistic(1), 1.0, [2.0]) <= 1e-8

    def test_origin(self):
        assert moreau_decomposition_residual(L1(1, 0.5), SymLogistic(1), 1.0, [0.0]) <= 1e-12

    def test_two_coordinates(self):
        assert moreau_decomposition_residual(L1(2, 0.25), SymLogistic(2), 0.5, [-3.0, 0.1]) <= 1e-8

    def test_unsupported_pair(self):
        with pytest.raises(NotImplementedError):
            moreau_decomposition_residual(SquaredL2(1, 1.0), SymLogistic(1), 1.0, [1.0])
