"""Problem builders with their anisotropic smoothness constants.

* regularized logistic regression under the symmetrized logistic reference,
* exponentially smoothed linear programs under ``Exp`` (plain and lifted),
* the entropically regularized optimal-transport dual under ``Exp``.

Each builder returns an immutable model object exposing ``f`` (a
:class:`~aniprox.solver.SmoothObjective`), ``g`` (a regularizer), ``phi``
and ``L``. Models unpack as ``f, g = model``.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, log_expit

from .errors import ConfigurationError, ConstraintQualificationError, NumericError
from .prox import L1, Consensus, Linear, Regularizer, SquaredL2, Zero
from .reference import Exp, Product, SymLogistic
from .solver import SmoothObjective, forward_step

__all__ = [
    "L_FLOOR",
    "DELTA_FLOOR",
    "LogisticModel",
    "ExpLpModel",
    "LiftedExpLpModel",
    "OtDualModel",
    "build_logistic",
    "build_exp_lp",
    "build_lifted_exp_lp",
    "build_ot_dual",
    "make_regularizer",
    "parallel_update_step",
    "sinkhorn",
    "logistic_toy",
    "gradient_check",
]

#: smallest smoothness constant a builder will declare (keeps ``1/L`` finite)
L_FLOOR = 1e-12
#: floor applied to the parallel-update scaling factors
DELTA_FLOOR = 1e-300


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


class _Model:
    def __iter__(self):
        return iter((self.f, self.g))


def make_regularizer(reg, dim):
    """Turn ``None``, ``("l1", nu)``, ``("sql2", nu)`` or a regularizer into a regularizer."""
    if reg is None:
        return Zero(dim)
    if isinstance(reg, Regularizer):
        if reg.dim != dim:
            raise ConfigurationError(f"regularizer dimension {reg.dim} != {dim}")
        return reg
    kind, nu = reg
    if kind in ("none", "zero"):
        return Zero(dim)
    if kind == "l1":
        return L1(dim, nu)
    if kind in ("sql2", "squared_l2"):
        return SquaredL2(dim, nu)
    raise ConfigurationError(f"unknown regularizer {kind!r}")


# ---------------------------------------------------------------------------
# logistic regression
# ---------------------------------------------------------------------------

class _LogisticLoss(SmoothObjective):
    def __init__(self, A, b, L):
        super().__init__(reference=SymLogistic(A.shape[1]), L=L, convex=True, name="logistic")
        self.A, self.b = A, b
        self.m = A.shape[0]

    def value(self, x):
        z = self.b * (self.A @ x)
        # ln(1 + exp(-z)) = -ln(sigmoid(z))
        return float(-np.sum(log_expit(z)) / self.m)

    def grad(self, x):
        z = self.b * (self.A @ x)
        return self.A.T @ (-self.b * expit(-z)) / self.m


@dataclass(frozen=True, eq=False)
class LogisticModel(_Model):
    A: np.ndarray
    b: np.ndarray
    f: SmoothObjective
    g: Regularizer
    L: float

    @property
    def phi(self):
        return self.f.reference


def build_logistic(A, b, reg=None):
    """``f(x) = (1/m) sum ln(1 + exp(-b_i <a_i, x>))`` relative to the symmetrized logistic.

    The constant is ``L = max_i ||a_i||^2`` (floored at :data:`L_FLOOR`).
    """
    A = _frozen(np.atleast_2d(A))
    b = _frozen(np.ravel(b))
    if A.shape[0] != b.shape[0]:
        raise ConfigurationError("A and b have different numbers of rows")
    if not np.all(np.isfinite(A)) or np.any(np.abs(A) > 1):
        raise ConfigurationError("logistic model needs entries of A in [-1, 1]")
    if not np.all(np.isin(b, (-1.0, 1.0))):
        raise ConfigurationError("logistic model needs labels in {-1, +1}")
    L = max(float(np.max(np.sum(A * A, axis=1))), L_FLOOR) if A.shape[0] else L_FLOOR
    f = _LogisticLoss(A, b, L)
    return LogisticModel(A, b, f, make_regularizer(reg, A.shape[1]), L)


def logistic_toy(m=100, n=10, seed=0, noise=0.1):
    """Synthetic classification data: ``A`` uniform in ``[-1, 1]``, noisy linear labels."""
    rng = np.random.default_rng(seed)
    A = rng.uniform(-1.0, 1.0, size=(m, n))
    w = rng.standard_normal(n)
    b = np.where(A @ w + noise * rng.standard_normal(m) >= 0, 1.0, -1.0)
    return A, b


# ---------------------------------------------------------------------------
# exponentially smoothed LP
# ---------------------------------------------------------------------------

def _exp_weights(A, x, b, sigma):
    t = (A @ x - b) / sigma
    with np.errstate(over="raise"):
        try:
            return np.exp(t)
        except FloatingPointError:
            raise NumericError("exponent overflow in sigma * exp term",
                               index=int(np.argmax(t))) from None


class _ExpSum(SmoothObjective):
    """``sum_i sigma exp((<a_i, x> - b_i) / sigma) + <tilt, x>``."""

    def __init__(self, A, b, sigma, L, reference, tilt=None, name="exp_sum"):
        super().__init__(reference=reference, L=L, convex=True, name=name)
        self.A, self.b, self.sigma = A, b, sigma
        self.tilt = tilt

    def value(self, x):
        try:
            v = self.sigma * float(np.sum(_exp_weights(self.A, x, self.b, self.sigma)))
        except NumericError:
            # overflow means the value is +inf; backtracking rejects such trials
            return math.inf
        if self.tilt is not None:
            v += float(self.tilt @ x)
        return v

    def grad(self, x):
        d = self.A.T @ _exp_weights(self.A, x, self.b, self.sigma)
        if self.tilt is not None:
            d = d + self.tilt
        return d


@dataclass(frozen=True, eq=False)
class ExpLpModel(_Model):
    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    sigma: float
    f: SmoothObjective
    g: Regularizer
    L: float

    @property
    def phi(self):
        return self.f.reference


def _exp_constant(A, sigma):
    return max(float(np.max(np.sum(np.abs(A), axis=1))) / sigma, L_FLOOR)


def build_exp_lp(A, b, c, sigma):
    """``f(x) = sum_i sigma exp((<a_i, x> - b_i) / sigma)``, ``g = <c, .>``, reference ``Exp``.

    Needs ``A >= 0`` with a positive entry in every column and ``c < 0``.
    The constant is ``L = max_i ||a_i||_1 / sigma``.
    """
    A = _frozen(np.atleast_2d(A))
    b, c = _frozen(np.ravel(b)), _frozen(np.ravel(c))
    sigma = float(sigma)
    if not sigma > 0:
        raise ConfigurationError("sigma must be positive")
    if b.shape[0] != A.shape[0] or c.shape[0] != A.shape[1]:
        raise ConfigurationError("shapes of A, b, c do not match")
    if np.any(A < 0):
        raise ConfigurationError("the plain exp-LP model needs a nonnegative A; use the lifted model")
    empty = np.flatnonzero(~np.any(A > 0, axis=0))
    if empty.size:
        raise ConstraintQualificationError(
            f"column {int(empty[0])} of A has no positive entry, so grad f leaves int dom Exp*"
        )
    if np.any(c >= 0):
        raise ConstraintQualificationError("the linear term needs c < 0 componentwise")
    L = _exp_constant(A, sigma)
    f = _ExpSum(A, b, sigma, L, Exp(A.shape[1]), name="exp_lp")
    return ExpLpModel(A, b, c, sigma, f, Linear(c), L)


@dataclass(frozen=True, eq=False)
class LiftedExpLpModel(_Model):
    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    sigma: float
    eps: float
    A_plus: np.ndarray
    A_minus: np.ndarray
    c_plus: np.ndarray
    c_minus: np.ndarray
    f: SmoothObjective
    g: Regularizer
    L: float
    floor_events: list = field(default_factory=lambda: [0])

    @property
    def phi(self):
        return self.f.reference

    @property
    def n(self):
        return self.A.shape[1]

    def lift(self, x):
        x = np.asarray(x, dtype=float)
        return np.concatenate([x, -x])

    def unlift(self, z):
        return np.asarray(z, dtype=float)[: self.n].copy()

    def total_objective(self):
        """``x -> f(x, -x)``: the original smooth total cost, for Euclidean baselines."""
        A, b, c, sigma = self.A, self.b, self.c, self.sigma
        return _ExpSum(A, b, sigma, None, None, tilt=c, name="exp_lp_total")


def _split(M):
    return np.where(M >= 0, M, 0.0), np.where(M < 0, -M, 0.0)


def build_lifted_exp_lp(A, b, c, sigma, eps=1e-8, force=False):
    """Lifted exp-LP over ``(x, x_-)`` with the consensus constraint ``x_- = -x``.

    ``A = A+ - A-`` and ``c = c+ - c-`` are split by sign and then shifted by
    ``eps`` uniformly. With ``eps == 0`` a split column without a positive entry
    is an error unless ``force`` is set (then :func:`parallel_update_step`
    floors the corresponding factors).
    """
    A = _frozen(np.atleast_2d(A))
    b, c = _frozen(np.ravel(b)), _frozen(np.ravel(c))
    sigma, eps = float(sigma), float(eps)
    if not sigma > 0:
        raise ConfigurationError("sigma must be positive")
    if eps < 0:
        raise ConfigurationError("eps must be nonnegative")
    if b.shape[0] != A.shape[0] or c.shape[0] != A.shape[1]:
        raise ConfigurationError("shapes of A, b, c do not match")
    Ap, Am = _split(A)
    cp, cm = _split(c)
    if not (np.array_equal(Ap - Am, A) and np.array_equal(cp - cm, c)):
        raise NumericError("sign split does not reconstruct A and c")
    Ap, Am, cp, cm = Ap + eps, Am + eps, cp + eps, cm + eps
    if not force:
        for name, M in (("A+", Ap), ("A-", Am)):
            bad = np.flatnonzero(~np.any(M > 0, axis=0))
            if bad.size:
                raise ConstraintQualificationError(
                    f"column {int(bad[0])} of {name} is zero; a positive shift eps is required"
                )
    n = A.shape[1]
    stacked = np.hstack([Ap, Am])
    L = _exp_constant(stacked, sigma)
    phi = Product([(Exp(n), 1.0), (Exp(n), 1.0)])
    f = _ExpSum(_frozen(stacked), b, sigma, L, phi, tilt=_frozen(np.concatenate([cp, cm])),
                name="lifted_exp_lp")
    return LiftedExpLpModel(A, b, c, sigma, eps, _frozen(Ap), _frozen(Am), _frozen(cp), _frozen(cm),
                            f, Consensus(n), L)


def parallel_update_step(model, lam, x):
    """Eliminated form of one lifted step: ``x - (lam/2) (ln D - ln D_-)``.

    ``D = A+^T w + c+`` and ``D_- = A-^T w + c-`` with ``w = exp((Ax - b)/sigma)``.
    Factors are floored at :data:`DELTA_FLOOR`; the model counts floored entries
    in ``model.floor_events[0]``. A floor hit with ``eps > 0`` means the split is
    inconsistent and raises instead.
    """
    x = np.asarray(x, dtype=float)
    w = _exp_weights(model.A, x, model.b, model.sigma)
    d_plus = model.A_plus.T @ w + model.c_plus
    d_minus = model.A_minus.T @ w + model.c_minus
    low = (d_plus < DELTA_FLOOR) | (d_minus < DELTA_FLOOR)
    if np.any(low):
        if model.eps > 0:
            raise NumericError("parallel-update factor vanished", index=int(np.flatnonzero(low)[0]))
        model.floor_events[0] += int(np.count_nonzero(low))
        d_plus = np.maximum(d_plus, DELTA_FLOOR)
        d_minus = np.maximum(d_minus, DELTA_FLOOR)
    return x - 0.5 * lam * (np.log(d_plus) - np.log(d_minus))


# ---------------------------------------------------------------------------
# optimal-transport dual
# ---------------------------------------------------------------------------

class _OtJoint(SmoothObjective):
    """``f(alpha, beta) = sum_ij sigma exp((alpha_j + beta_i - C_ij) / sigma)``."""

    def __init__(self, C, sigma, L, tilt=None, name="ot_dual"):
        m, n = C.shape
        super().__init__(reference=Exp(n + m), L=L, convex=True, name=name)
        self.C, self.sigma, self.n = C, sigma, n
        self.tilt = tilt

    def _plan(self, z):
        alpha, beta = z[: self.n], z[self.n:]
        return np.exp((alpha[None, :] + beta[:, None] - self.C) / self.sigma)

    def value(self, z):
        v = self.sigma * float(np.sum(self._plan(z)))
        if self.tilt is not None:
            v += float(self.tilt @ z)
        return v

    def grad(self, z):
        P = self._plan(z)
        d = np.concatenate([P.sum(axis=0), P.sum(axis=1)])
        return d if self.tilt is None else d + self.tilt


class _OtBlock(SmoothObjective):
    """One block of the OT dual with the other block frozen; constant ``1/sigma``."""

    def __init__(self, C, sigma, other, which):
        self.which = which
        self.Ct = C if which == "alpha" else C.T
        self.other = other
        self.sigma = sigma
        super().__init__(reference=Exp(self.Ct.shape[1]), L=1.0 / sigma, convex=True,
                         name=f"ot_{which}_block")

    def _plan(self, x):
        return np.exp((x[None, :] + self.other[:, None] - self.Ct) / self.sigma)

    def value(self, x):
        return self.sigma * float(np.sum(self._plan(x)))

    def grad(self, x):
        return self._plan(x).sum(axis=0)


@dataclass(frozen=True, eq=False)
class OtDualModel(_Model):
    C: np.ndarray
    r: np.ndarray
    s: np.ndarray
    sigma: float
    mode: str
    f: SmoothObjective
    g: Regularizer
    L: float
    lam: float

    @property
    def phi(self):
        return self.f.reference

    @property
    def n(self):
        return self.r.shape[0]

    def split(self, z):
        z = np.asarray(z, dtype=float)
        return z[: self.n], z[self.n:]

    def block(self, which, other):
        """Smooth block objective in ``alpha`` (``beta`` frozen) or vice versa."""
        return _OtBlock(self.C, self.sigma, np.asarray(other, dtype=float), which)

    def gauss_seidel_sweep(self, alpha, beta):
        """One alternating pass: an anisotropic PG step in ``alpha``, then in ``beta``.

        Each block step uses ``lam = sigma`` (the inverse block constant).
        """
        lam = self.sigma
        f_a = self.block("alpha", beta)
        y = forward_step(f_a, lam, alpha)
        alpha = Linear(-self.r).backward_step(f_a.reference, lam, y).point
        f_b = self.block("beta", alpha)
        y = forward_step(f_b, lam, beta)
        beta = Linear(-self.s).backward_step(f_b.reference, lam, y).point
        return alpha, beta

    def run_gauss_seidel(self, iterations, alpha0=None, beta0=None):
        """Return the list of ``(alpha, beta)`` after each sweep."""
        alpha = np.zeros(self.n) if alpha0 is None else np.asarray(alpha0, dtype=float)
        beta = np.zeros(self.s.shape[0]) if beta0 is None else np.asarray(beta0, dtype=float)
        out = []
        for _ in range(iterations):
            alpha, beta = self.gauss_seidel_sweep(alpha, beta)
            out.append((alpha, beta))
        return out

    def folded_objective(self):
        """Smooth total cost ``f + g`` (linear terms folded in); for Euclidean baselines only."""
        return _OtJoint(self.C, self.sigma, None, tilt=np.concatenate([-self.r, -self.s]),
                        name="ot_dual_total")


def build_ot_dual(C, r, s, sigma, mode="joint"):
    """Entropic OT dual ``min f(alpha, beta) - <r, alpha> - <s, beta>`` under ``Exp``.

    ``C`` is ``m x n``; ``r`` has length ``n`` (paired with ``alpha``), ``s``
    length ``m``. ``mode="joint"`` declares ``L = 2/sigma`` (step ``sigma/2``);
    ``mode="gauss_seidel"`` uses block constants ``1/sigma`` (step ``sigma``).
    """
    C = _frozen(np.atleast_2d(C))
    r, s = _frozen(np.ravel(r)), _frozen(np.ravel(s))
    sigma = float(sigma)
    if not sigma > 0:
        raise ConfigurationError("sigma must be positive")
    if C.shape != (s.shape[0], r.shape[0]):
        raise ConfigurationError(f"C must be {s.shape[0]} x {r.shape[0]}, got {C.shape}")
    if np.any(r <= 0) or np.any(s <= 0):
        raise ConstraintQualificationError("marginals r and s must be strictly positive")
    if mode == "joint":
        L, lam = 2.0 / sigma, sigma / 2.0
    elif mode == "gauss_seidel":
        L, lam = 1.0 / sigma, sigma
    else:
        raise ConfigurationError(f"unknown OT mode {mode!r}")
    f = _OtJoint(C, sigma, 2.0 / sigma)
    g = Linear(np.concatenate([-r, -s]))
    return OtDualModel(C, r, s, sigma, mode, f, g, L, lam)


def sinkhorn(C, r, s, sigma, iterations, v0=None):
    """Classical Sinkhorn scaling; returns the list of ``(u, v)`` after each sweep.

    ``u`` pairs with the columns of ``C`` (marginal ``r``), ``v`` with its rows.
    """
    C = np.asarray(C, dtype=float)
    K = np.exp(-C / sigma)
    v = np.ones(C.shape[0]) if v0 is None else np.asarray(v0, dtype=float)
    out = []
    for _ in range(iterations):
        u = r / (K.T @ v)
        v = s / (K @ u)
        out.append((u, v))
    return out


# ---------------------------------------------------------------------------
# gradient check
# ---------------------------------------------------------------------------

def gradient_check(f, points, h=1e-6):
    """Worst relative error between ``f.grad`` and central differences of ``f.value``.

    The error at ``x`` is ``||g - g_fd||_inf / max(||g||_inf, ||g_fd||_inf, 1e-8)``
    with per-coordinate step ``h (1 + |x_j|)``.
    """
    worst = 0.0
    for x in points:
        x = np.asarray(x, dtype=float)
        g = f.grad(x)
        fd = np.empty_like(x)
        for j in range(x.shape[0]):
            step = h * (1.0 + abs(x[j]))
            e = np.zeros_like(x)
            e[j] = step
            fd[j] = (f.value(x + e) - f.value(x - e)) / (2.0 * step)
        scale = max(float(np.max(np.abs(g))), float(np.max(np.abs(fd))), 1e-8)
        err = float(np.max(np.abs(g - fd))) / scale
        if not math.isfinite(err):
            raise NumericError("non-finite gradient or finite difference")
        worst = max(worst, err)
    return worst
