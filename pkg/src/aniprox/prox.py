"""Regularizers and their anisotropic backward steps.

The backward step of ``g`` at ``y`` with step ``lam`` under a reference ``phi``
is ``argmin_x g(x) + (lam * phi)(x - y)``. For the separable references in
:mod:`aniprox.reference` the stationarity condition reads
``0 in dg(x) + phi'((x - y) / lam)`` coordinatewise, which is what the
closed forms below solve.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConfigurationError,
    ConstraintQualificationError,
    NumericError,
    ProxBoundednessError,
)
from .reference import Euclidean, Exp, Product, SymLogistic

__all__ = [
    "ProxResult",
    "Regularizer",
    "Zero",
    "Linear",
    "L1",
    "SquaredL2",
    "Consensus",
    "SeparableCustom",
    "ScalarZero",
    "ScalarLinear",
    "ScalarAbs",
    "ScalarQuadratic",
    "backward_step",
    "prox_zero",
    "prox_linear_exp",
    "prox_l1_symlog",
    "prox_sql2_symlog",
    "prox_consensus_exp",
    "prox_separable_generic",
    "soft_threshold",
    "moreau_decomposition_residual",
]

BISECTION_WIDTH = 1e-14
NEWTON_TOL = 1e-12


@dataclass(frozen=True)
class ProxResult:
    point: np.ndarray
    #: left anisotropic Moreau envelope at ``y``: ``g(point) + (lam * phi)(point - y)``
    envelope_value: float


def _envelope(g, phi, lam, y, x):
    return g.value(x) + lam * phi.value((x - y) / lam)


def _conj_grad_where_interior(phi, v):
    """``grad phi*(v)`` on interior coordinates, ``nan`` elsewhere."""
    mask = phi.conj_interior_mask(v)
    lo, hi = phi.conj_bounds()
    inner = np.where(
        np.isfinite(lo) & np.isfinite(hi),
        0.5 * (lo + hi),
        np.where(np.isfinite(lo), lo + 1.0, np.where(np.isfinite(hi), hi - 1.0, 0.0)),
    )
    out = phi._conj_grad(np.where(mask, v, inner))
    return np.where(mask, out, np.nan), mask


# ---------------------------------------------------------------------------
# closed-form operators
# ---------------------------------------------------------------------------

def prox_zero(phi, lam, y):
    """Backward step of ``g = 0``: ``y + lam * grad phi*(0)``."""
    y = np.asarray(y, dtype=float)
    zero = np.zeros(phi.dim)
    if not phi.in_conj_interior(zero):
        raise ConstraintQualificationError(
            f"g = 0 needs 0 in int dom phi*, which fails for the {phi.kind} reference"
        )
    return y + lam * phi.conj_grad(zero)


def prox_linear_exp(c, lam, y):
    """Backward step of ``<c, .>`` under ``Exp``: ``x_j = y_j + lam * ln(-c_j)``.

    Requires ``c < 0`` componentwise.
    """
    c = np.asarray(c, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(~(c < 0)):
        j = int(np.flatnonzero(~(c < 0))[0])
        raise ConstraintQualificationError(
            f"linear term under exp needs c < 0 componentwise (c[{j}] = {c[j]!r})"
        )
    return y + lam * np.log(-c)


def soft_threshold(y, threshold):
    return np.sign(y) * np.maximum(np.abs(y) - threshold, 0.0)


def prox_l1_symlog(nu, lam, y):
    """Soft thresholding at ``rho = lam * ln((1 + nu) / (1 - nu))``; zero for ``nu >= 1``."""
    y = np.asarray(y, dtype=float)
    if not nu > 0:
        raise ConfigurationError("l1 weight must be positive")
    if nu >= 1.0:
        return np.zeros_like(y)
    rho = lam * 2.0 * math.atanh(nu)
    return soft_threshold(y, rho)


def _safeguarded_newton(F, dF, lo, hi, x0=None, tol=NEWTON_TOL, max_iter=200):
    """Vectorized root finding for increasing ``F`` on brackets ``F(lo) <= 0 <= F(hi)``."""
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    x = 0.5 * (lo + hi) if x0 is None else np.clip(np.array(x0, dtype=float), lo, hi)
    for _ in range(max_iter):
        fx = F(x)
        done = np.abs(fx) <= tol
        if np.all(done):
            return x
        lo = np.where(fx < 0, x, lo)
        hi = np.where(fx > 0, x, hi)
        d = dF(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = x - fx / d
        bad = ~np.isfinite(step) | (step <= lo) | (step >= hi)
        x_new = np.where(bad, 0.5 * (lo + hi), step)
        x = np.where(done, x, x_new)
        if np.all(done | (hi - lo <= BISECTION_WIDTH * np.maximum(1.0, np.abs(x)))):
            return x
    fx = F(x)
    if np.any(np.abs(fx) > 1e3 * tol):
        j = int(np.argmax(np.abs(fx)))
        raise NumericError("safeguarded Newton did not converge", index=j)
    return x


def prox_sql2_symlog(nu, lam, y):
    """Backward step of ``nu/2 ||.||^2`` under the symmetrized logistic reference.

    Solves ``nu * x + tanh((x - y) / (2 lam)) = 0`` per coordinate. The root
    lies between 0 and ``y`` since the left side is increasing and changes
    sign there.
    """
    y = np.asarray(y, dtype=float)
    if not nu > 0:
        raise ConfigurationError("squared-l2 weight must be positive")
    lo = np.minimum(0.0, y)
    hi = np.maximum(0.0, y)
    # |x| < 1/nu because |tanh| < 1
    lo = np.maximum(lo, -1.0 / nu)
    hi = np.minimum(hi, 1.0 / nu)

    def F(x):
        return nu * x + np.tanh((x - y) / (2.0 * lam))

    def dF(x):
        t = np.tanh((x - y) / (2.0 * lam))
        return nu + (1.0 - t * t) / (2.0 * lam)

    x = _safeguarded_newton(F, dF, lo, hi, x0=y / (1.0 + 2.0 * lam * nu))
    if np.any(np.abs(F(x)) > 1e-10):
        raise NumericError("bracket failure in squared-l2 prox", index=int(np.argmax(np.abs(F(x)))))
    return x


def prox_consensus_exp(lam, y_pair):
    """Backward step of the indicator of ``{(x, x_-) : x_- = -x}`` under ``Exp + Exp``.

    The Bregman projection of the dual variable onto the diagonal is the
    geometric mean, which in primal terms subtracts the average of ``y`` and
    ``y_-`` from both blocks.
    """
    y, y_minus = (np.asarray(v, dtype=float) for v in y_pair)
    if y.shape != y_minus.shape:
        raise ValueError("consensus blocks must have equal length")
    x = 0.5 * (y - y_minus)
    return x, -x


# ---------------------------------------------------------------------------
# generic separable hook
# ---------------------------------------------------------------------------

class ScalarZero:
    convex = True

    def value(self, t):
        return 0.0

    def subgrad(self, t):
        return 0.0, 0.0

    def second(self, t):
        return 0.0


class ScalarLinear:
    convex = True

    def __init__(self, c):
        self.c = float(c)

    def value(self, t):
        return self.c * t

    def subgrad(self, t):
        return self.c, self.c

    def second(self, t):
        return 0.0


class ScalarAbs:
    convex = True

    def __init__(self, nu):
        self.nu = float(nu)

    def value(self, t):
        return self.nu * abs(t)

    def subgrad(self, t):
        if t > 0:
            return self.nu, self.nu
        if t < 0:
            return -self.nu, -self.nu
        return -self.nu, self.nu

    def second(self, t):
        return 0.0


class ScalarQuadratic:
    convex = True

    def __init__(self, nu):
        self.nu = float(nu)

    def value(self, t):
        return 0.5 * self.nu * t * t

    def subgrad(self, t):
        return self.nu * t, self.nu * t

    def second(self, t):
        return self.nu


def _bracket_inclusion(S_lo, S_hi, y, max_doublings=200):
    """Find ``lo <= hi`` with ``S_hi(lo) < 0`` or equality, and ``S_lo(hi) > 0``-side.

    ``S_lo``/``S_hi`` are the lower/upper ends of the (monotone) stationarity map.
    """
    width = np.maximum(1.0, np.abs(y))
    lo = y - width
    hi = y + width
    for _ in range(max_doublings):
        need_lo = S_hi(lo) > 0
        need_hi = S_lo(hi) < 0
        if not (np.any(need_lo) or np.any(need_hi)):
            return lo, hi
        width = np.where(need_lo | need_hi, 2.0 * width, width)
        lo = np.where(need_lo, y - width, lo)
        hi = np.where(need_hi, y + width, hi)
    j = int(np.flatnonzero(need_lo | need_hi)[0])
    raise ProxBoundednessError(
        "could not bracket the backward-step stationarity condition; "
        "the step-size may exceed the prox-boundedness threshold",
        index=j,
    )


def prox_separable_generic(g_scalars, phi, lam, y):
    """Per-coordinate backward step by bisection on ``0 in dg_j(x) + phi_j'((x - y_j)/lam)``.

    ``g_scalars`` is a sequence of convex scalar oracles with ``value``,
    ``subgrad`` (returning the left/right derivative) and optionally ``second``.
    Bisection runs to width ``1e-14``; two Newton steps polish the result
    where ``g_j`` is differentiable and the step stays inside the bracket.
    """
    y = np.asarray(y, dtype=float)
    if len(g_scalars) != y.shape[0] or phi.dim != y.shape[0]:
        raise ValueError("dimension mismatch between scalars, reference and point")

    def sub(x):
        pairs = [g.subgrad(float(t)) for g, t in zip(g_scalars, x)]
        return np.array([p[0] for p in pairs]), np.array([p[1] for p in pairs])

    def S_lo(x):
        return sub(x)[0] + phi.grad((x - y) / lam)

    def S_hi(x):
        return sub(x)[1] + phi.grad((x - y) / lam)

    lo, hi = _bracket_inclusion(S_lo, S_hi, y)
    exact = np.full(y.shape, np.nan)
    for _ in range(2000):
        mid = 0.5 * (lo + hi)
        active = np.isnan(exact) & (hi - lo > BISECTION_WIDTH) & (mid > lo) & (mid < hi)
        if not np.any(active):
            break
        s_lo, s_hi = sub(mid)
        d = phi.grad((mid - y) / lam)
        go_right = active & (s_hi + d < 0)
        go_left = active & (s_lo + d > 0)
        hit = active & ~go_right & ~go_left
        exact = np.where(hit, mid, exact)
        lo = np.where(go_right, mid, lo)
        hi = np.where(go_left, mid, hi)
    x = np.where(np.isnan(exact), 0.5 * (lo + hi), exact)

    for _ in range(2):
        s_lo, s_hi = sub(x)
        smooth = s_lo == s_hi
        if not np.any(smooth):
            break
        residual = s_lo + phi.grad((x - y) / lam)
        curv = np.array([getattr(g, "second", lambda t: 0.0)(float(t)) for g, t in zip(g_scalars, x)])
        curv = curv + phi.hess_diag((x - y) / lam) / lam
        with np.errstate(divide="ignore", invalid="ignore"):
            cand = x - residual / curv
        ok = smooth & np.isfinite(cand) & (cand >= lo) & (cand <= hi)
        x = np.where(ok, cand, x)
    return x


# ---------------------------------------------------------------------------
# regularizer objects
# ---------------------------------------------------------------------------

class Regularizer:
    """Nonsmooth part ``g`` of the composite objective.

    ``lambda_g`` is the user-asserted threshold of prox-boundedness; the
    backward step refuses step-sizes at or above it.
    """

    kind = "abstract"
    convex = True

    def __init__(self, dim, lambda_g=math.inf):
        self.dim = int(dim)
        self.lambda_g = float(lambda_g)

    def value(self, x):
        raise NotImplementedError

    def check_cq(self, phi):
        """Raise :class:`ConstraintQualificationError` unless ``dom g* meets int dom phi_-*``."""

    def _prox(self, phi, lam, y):
        raise NotImplementedError

    def backward_step(self, phi, lam, y):
        y = np.asarray(y, dtype=float)
        if y.shape != (self.dim,) or phi.dim != self.dim:
            raise ValueError(f"dimension mismatch: g has dim {self.dim}, phi {phi.dim}, y {y.shape}")
        if not lam > 0:
            raise ConfigurationError("step-size must be positive")
        if lam >= self.lambda_g:
            raise ConfigurationError(
                f"step-size {lam!r} is not below the asserted prox-boundedness threshold {self.lambda_g!r}"
            )
        self.check_cq(phi)
        x = self._prox(phi, lam, y)
        if not np.all(np.isfinite(x)):
            raise NumericError("backward step produced non-finite values",
                               index=int(np.flatnonzero(~np.isfinite(x))[0]))
        return ProxResult(x, _envelope(self, phi, lam, y, x))

    def __repr__(self):
        return f"{type(self).__name__}(dim={self.dim})"


class Zero(Regularizer):
    kind = "zero"

    def value(self, x):
        return 0.0

    def check_cq(self, phi):
        if not phi.in_conj_interior(np.zeros(phi.dim)):
            raise ConstraintQualificationError(
                f"g = 0 needs 0 in int dom phi*, which fails for the {phi.kind} reference"
            )

    def _prox(self, phi, lam, y):
        return prox_zero(phi, lam, y)


class Linear(Regularizer):
    """``g(x) = <c, x>``; the backward step is ``y + lam * grad phi*(-c)``."""

    kind = "linear"

    def __init__(self, c, lambda_g=math.inf):
        c = np.array(c, dtype=float)
        c.setflags(write=False)
        super().__init__(c.shape[0], lambda_g)
        self.c = c

    def value(self, x):
        return float(self.c @ np.asarray(x, dtype=float))

    def check_cq(self, phi):
        if not phi.in_conj_interior(-self.c):
            mask = phi.conj_interior_mask(-self.c)
            j = int(np.flatnonzero(~mask)[0])
            raise ConstraintQualificationError(
                f"linear term needs -c in int dom phi* (fails at coordinate {j}, c = {self.c[j]!r})"
            )

    def _prox(self, phi, lam, y):
        if type(phi) is Exp:
            return prox_linear_exp(self.c, lam, y)
        return y + lam * phi.conj_grad(-self.c)


class L1(Regularizer):
    """``g(x) = nu ||x||_1``."""

    kind = "l1"

    def __init__(self, dim, nu, lambda_g=math.inf):
        super().__init__(dim, lambda_g)
        if not nu > 0:
            raise ConfigurationError("l1 weight must be positive")
        self.nu = float(nu)

    def value(self, x):
        return self.nu * float(np.sum(np.abs(x)))

    def check_cq(self, phi):
        # dom g* = [-nu, nu]^n must meet -int dom phi* coordinatewise
        lo, hi = phi.conj_bounds()
        if np.any((-hi >= self.nu) | (-lo <= -self.nu)):
            raise ConstraintQualificationError("[-nu, nu]^n does not meet int dom phi_-*")

    def _prox(self, phi, lam, y):
        if type(phi) is SymLogistic:
            return prox_l1_symlog(self.nu, lam, y)
        if type(phi) is Euclidean:
            return soft_threshold(y, lam * (self.nu / phi.weights))
        # positive branch needs phi'(u) = -nu, negative branch phi'(u) = nu
        nu = np.full(self.dim, self.nu)
        up, up_ok = _conj_grad_where_interior(phi, -nu)
        dn, dn_ok = _conj_grad_where_interior(phi, nu)
        pos = y + lam * up
        neg = y + lam * dn
        x = np.zeros_like(y)
        take_pos = up_ok & (pos > 0)
        take_neg = dn_ok & (neg < 0)
        x[take_pos] = pos[take_pos]
        x[take_neg] = neg[take_neg]
        return x


class SquaredL2(Regularizer):
    """``g(x) = nu/2 ||x||^2``."""

    kind = "squared_l2"

    def __init__(self, dim, nu, lambda_g=math.inf):
        super().__init__(dim, lambda_g)
        if not nu > 0:
            raise ConfigurationError("squared-l2 weight must be positive")
        self.nu = float(nu)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return 0.5 * self.nu * float(x @ x)

    def _prox(self, phi, lam, y):
        if type(phi) is SymLogistic:
            return prox_sql2_symlog(self.nu, lam, y)
        if type(phi) is Euclidean:
            w = phi.weights
            return w * y / (w + lam * self.nu)
        nu = self.nu

        def F(x):
            return nu * x + phi.grad((x - y) / lam)

        def dF(x):
            return nu + phi.hess_diag((x - y) / lam) / lam

        lo, hi = _bracket_inclusion(F, F, y)
        return _safeguarded_newton(F, dF, lo, hi)


class Consensus(Regularizer):
    """Indicator of ``{(x, x_-) : x_- = -x}`` on a vector of length ``2n``."""

    kind = "consensus_lifted"

    def __init__(self, n, lambda_g=math.inf):
        super().__init__(2 * int(n), lambda_g)
        self.n = int(n)

    def value(self, z):
        z = np.asarray(z, dtype=float)
        x, x_minus = z[: self.n], z[self.n:]
        if np.all(np.abs(x + x_minus) <= 1e-12 * (1.0 + np.abs(x))):
            return 0.0
        return math.inf

    def check_cq(self, phi):
        ok = (
            isinstance(phi, Product)
            and len(phi.blocks) == 2
            and phi.blocks[0][0].dim == phi.blocks[1][0].dim == self.n
            and repr(phi.blocks[0]) == repr(phi.blocks[1])
        )
        if not ok:
            raise ConstraintQualificationError(
                "the consensus backward step needs a product of two identical blocks"
            )
        # g* is the indicator of the diagonal {(v, v)}; it must meet int dom phi_-*
        lo, hi = phi.conj_bounds()
        lo1, hi1 = -hi[: self.n], -lo[: self.n]
        lo2, hi2 = -hi[self.n:], -lo[self.n:]
        if np.any(np.maximum(lo1, lo2) >= np.minimum(hi1, hi2)):
            raise ConstraintQualificationError("the diagonal does not meet int dom phi_-*")

    def _prox(self, phi, lam, y):
        x, x_minus = prox_consensus_exp(lam, (y[: self.n], y[self.n:]))
        return np.concatenate([x, x_minus])


class SeparableCustom(Regularizer):
    """``g(x) = sum_j g_j(x_j)`` from convex scalar oracles; uses the bisection hook."""

    kind = "separable_custom"

    def __init__(self, scalars, lambda_g=math.inf):
        super().__init__(len(scalars), lambda_g)
        self.scalars = tuple(scalars)

    def value(self, x):
        return float(sum(g.value(float(t)) for g, t in zip(self.scalars, x)))

    def _prox(self, phi, lam, y):
        return prox_separable_generic(self.scalars, phi, lam, y)


def backward_step(g, phi, lam, y):
    """Left anisotropic proximal step ``argmin_x g(x) + (lam * phi)(x - y)``."""
    return g.backward_step(phi, lam, y)


def moreau_decomposition_residual(g, phi, lam, y):
    """``||y - [aprox(y) + lam grad phi*(bprox(grad phi(y / lam)))]||_inf``.

    Implemented for ``g = nu ||.||_1`` under the symmetrized logistic or a
    Euclidean reference, where the Bregman prox of ``g* = indicator([-nu, nu]^n)``
    is the clipping map.
    """
    y = np.asarray(y, dtype=float)
    if not isinstance(g, L1) or type(phi) not in (SymLogistic, Euclidean):
        raise NotImplementedError(
            f"no Bregman-prox oracle for the pair ({type(g).__name__}, {type(phi).__name__})"
        )
    primal = g.backward_step(phi, lam, y).point
    lo, hi = phi.conj_bounds()
    w = phi.grad(y / lam)
    projected = np.clip(w, np.maximum(-g.nu, lo), np.minimum(g.nu, hi))
    # where the clip is inactive grad phi* undoes grad phi exactly; using y there
    # avoids inverting a gradient that has rounded onto the boundary of dom phi*
    bind = projected != w
    dual = y.copy()
    if np.any(bind):
        dual[bind] = lam * phi.conj_grad(np.where(bind, projected, 0.0))[bind]
    return float(np.max(np.abs(y - (primal + dual))))
