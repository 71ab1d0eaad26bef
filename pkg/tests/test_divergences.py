import math

import numpy as np
import pytest

from aniprox.divergences import (
    BregmanValue,
    bregman_dual,
    bregman_primal,
    dual_identity_residual,
    kl_divergence,
)
from aniprox.errors import DomainError
from aniprox.reference import Euclidean, Exp, SymLogistic


class TestBregmanValue:
    def test_infinite_compares_above_finite(self):
        assert BregmanValue(1e300) < BregmanValue.inf()
        assert BregmanValue.inf() == BregmanValue.inf()
        assert not BregmanValue.inf().finite

    def test_float_conversion(self):
        assert float(BregmanValue(2.5)) == 2.5
        assert float(BregmanValue.inf()) == math.inf


class TestBregmanDual:
    def test_equal_arguments(self):
        assert float(bregman_dual(Exp(1), [0.5], [0.5])) == 0.0

    def test_kl_value(self):
        assert float(bregman_dual(Exp(1), [1.0], [2.0])) == pytest.approx(1 - math.log(2), abs=1e-15)

    def test_outside_domain_is_infinite(self):
        d = bregman_dual(Exp(1), [-1.0], [1.0])
        assert d.infinite

    def test_boundary_second_argument_is_infinite(self):
        assert bregman_dual(Exp(1), [1.0], [0.0]).infinite

    def test_boundary_first_argument_is_finite(self):
        # x = 0 lies in dom Exp* (0 ln 0 = 0)
        assert float(bregman_dual(Exp(1), [0.0], [2.0])) == pytest.approx(2.0)

    def test_matches_independent_kl(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            x, y = rng.uniform(0.01, 4.0, 5), rng.uniform(0.01, 4.0, 5)
            assert float(bregman_dual(Exp(5), x, y)) == pytest.approx(kl_divergence(x, y), abs=1e-12)


class TestBregmanPrimal:
    def test_equal_arguments(self):
        assert float(bregman_primal(SymLogistic(2), [0.3, 1.0], [0.3, 1.0])) == 0.0

    def test_euclidean(self):
        assert float(bregman_primal(Euclidean([1.0]), [1.0], [0.0])) == 0.5

    def test_exp(self):
        assert float(bregman_primal(Exp(1), [1.0], [0.0])) == pytest.approx(math.e - 2, abs=1e-15)


class TestDualIdentity:
    def test_equal_points(self):
        assert dual_identity_residual(Exp(1), [2.0], [2.0]) == 0.0

    def test_exp_pair(self):
        assert dual_identity_residual(Exp(1), [1.0], [2.0]) <= 1e-12

    def test_symlog_pair(self):
        assert dual_identity_residual(SymLogistic(1), [0.3], [-0.4]) <= 1e-10

    def test_rejects_boundary_points(self):
        with pytest.raises(DomainError):
            dual_identity_residual(SymLogistic(1), [1.0], [0.0])
