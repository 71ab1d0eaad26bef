"""Legendre reference functions with full domain and their convex conjugates.

Every reference here is separable and its conjugate domain is a box
``[lo, hi]`` (possibly unbounded), which keeps the domain predicates cheap.
Instances are immutable after construction.
"""

import numpy as np
from scipy.special import xlogy

from .errors import ConfigurationError, DomainError

__all__ = [
    "ReferenceFunction",
    "Euclidean",
    "Exp",
    "SymLogistic",
    "Product",
    "TiltScaled",
    "EpiScaled",
    "make_euclidean",
    "make_exp",
    "make_sym_logistic",
    "make_reference",
    "product",
    "tilt_scale",
    "legendre_roundtrip_check",
]


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _as_vector(x, dim):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != dim:
        raise ValueError(f"expected a vector of length {dim}, got shape {x.shape}")
    return x


class ReferenceFunction:
    """Base class for a Legendre function ``phi`` with ``dom phi = R^n``.

    Subclasses implement the ``_value``/``_grad``/``_conj_*`` hooks; the
    public methods add shape validation and the conjugate-domain checks.
    """

    kind = "abstract"
    #: ``D_{phi*}`` is jointly convex (admits the averaging rule for constants).
    jointly_convex_dual = False

    def __init__(self, dim):
        dim = int(dim)
        if dim < 1:
            raise ConfigurationError("reference dimension must be >= 1")
        self.dim = dim

    # -- primal side -----------------------------------------------------
    def value(self, x):
        return float(self._value(_as_vector(x, self.dim)))

    def grad(self, x):
        return self._grad(_as_vector(x, self.dim))

    def hess_diag(self, x):
        """Diagonal of the Hessian (all references here are separable)."""
        return self._hess_diag(_as_vector(x, self.dim))

    def scaled_value(self, lam, x):
        """Epi-scaled value ``(lam * phi)(x) = lam * phi(x / lam)``."""
        return lam * self.value(np.asarray(x, dtype=float) / lam)

    # -- dual side -------------------------------------------------------
    def conj_bounds(self):
        """Return ``(lo, hi)`` with ``dom phi* = [lo, hi]`` componentwise."""
        raise NotImplementedError

    def in_conj_domain(self, y):
        y = _as_vector(y, self.dim)
        lo, hi = self.conj_bounds()
        return bool(np.all((y >= lo) & (y <= hi)))

    def conj_interior_mask(self, y, margin=0.0):
        y = _as_vector(y, self.dim)
        lo, hi = self.conj_bounds()
        return (y > lo + margin) & (y < hi - margin)

    def in_conj_interior(self, y, margin=0.0):
        return bool(np.all(self.conj_interior_mask(y, margin)))

    def boundary_distance(self, y):
        """Smallest distance of ``y`` to the boundary of ``dom phi*`` (negative outside)."""
        y = _as_vector(y, self.dim)
        lo, hi = self.conj_bounds()
        return float(np.min(np.minimum(y - lo, hi - y)))

    def clamp_to_conj_interior(self, y, eta):
        """Move coordinates outside the open conjugate domain to ``eta`` inside it.

        Returns the clamped vector and the number of coordinates moved.
        """
        y = np.array(_as_vector(y, self.dim), dtype=float)
        lo, hi = self.conj_bounds()
        low = ~(y > lo)
        high = ~(y < hi)
        y[low] = (lo + eta)[low]
        y[high] = (hi - eta)[high]
        return y, int(np.count_nonzero(low | high))

    def conj_value(self, y):
        """``phi*(y)``; ``+inf`` outside the conjugate domain."""
        y = _as_vector(y, self.dim)
        if not self.in_conj_domain(y):
            return np.inf
        return float(self._conj_value(y))

    def conj_grad(self, y, margin=0.0):
        """``grad phi*(y)``, defined on the open interior of ``dom phi*``."""
        y = _as_vector(y, self.dim)
        self._check_interior(y, margin)
        return self._conj_grad(y)

    def conj_hess_diag(self, y, margin=0.0):
        y = _as_vector(y, self.dim)
        self._check_interior(y, margin)
        return self._conj_hess_diag(y)

    def _check_interior(self, y, margin):
        mask = self.conj_interior_mask(y, margin)
        if not np.all(mask):
            j = int(np.flatnonzero(~mask)[0])
            raise DomainError(
                f"{self.kind}: argument {y[j]!r} outside the interior of dom phi*", index=j
            )

    def epi(self, lam):
        return EpiScaled(self, lam)

    def __repr__(self):
        return f"{type(self).__name__}(dim={self.dim})"


class Euclidean(ReferenceFunction):
    """``phi(x) = 1/2 sum_j w_j x_j^2``."""

    kind = "euclidean"
    jointly_convex_dual = True

    def __init__(self, weights):
        w = np.atleast_1d(np.asarray(weights, dtype=float))
        if w.ndim != 1 or not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise ConfigurationError("euclidean weights must be finite and positive")
        super().__init__(w.shape[0])
        self.weights = _frozen(w)
        self._lo = _frozen(np.full(self.dim, -np.inf))
        self._hi = _frozen(np.full(self.dim, np.inf))

    def _value(self, x):
        return 0.5 * np.sum(self.weights * x * x)

    def _grad(self, x):
        return self.weights * x

    def _hess_diag(self, x):
        return np.array(self.weights)

    def conj_bounds(self):
        return self._lo, self._hi

    def _conj_value(self, y):
        return 0.5 * np.sum(y * y / self.weights)

    def _conj_grad(self, y):
        return y / self.weights

    def _conj_hess_diag(self, y):
        return 1.0 / self.weights

    def __repr__(self):
        return f"Euclidean(weights={self.weights.tolist()})"


class Exp(ReferenceFunction):
    """``phi(x) = sum_j exp(x_j)``; the conjugate is the (von Neumann) entropy."""

    kind = "exp"
    # KL is jointly convex, but the averaging rule is only certified for the
    # Euclidean and symmetrized-logistic families; exp uses the conic rule.
    jointly_convex_dual = False

    def __init__(self, dim):
        super().__init__(dim)
        self._lo = _frozen(np.zeros(self.dim))
        self._hi = _frozen(np.full(self.dim, np.inf))

    def _value(self, x):
        return np.sum(np.exp(x))

    def _grad(self, x):
        return np.exp(x)

    def _hess_diag(self, x):
        return np.exp(x)

    def conj_bounds(self):
        return self._lo, self._hi

    def _conj_value(self, y):
        return np.sum(xlogy(y, y) - y)

    def _conj_grad(self, y):
        return np.log(y)

    def _conj_hess_diag(self, y):
        return 1.0 / y


class SymLogistic(ReferenceFunction):
    """Symmetrized logistic loss ``h(t) = 2 ln(1 + e^t) - t`` summed over coordinates.

    ``h`` is a smooth approximation of ``|t|``; ``dom h* = [-1, 1]``.
    """

    kind = "symlog"
    jointly_convex_dual = True

    def __init__(self, dim):
        super().__init__(dim)
        self._lo = _frozen(np.full(self.dim, -1.0))
        self._hi = _frozen(np.full(self.dim, 1.0))

    def _value(self, x):
        a = np.abs(x)
        return np.sum(a + 2.0 * np.logaddexp(0.0, -a))

    def _grad(self, x):
        return np.tanh(0.5 * x)

    def _hess_diag(self, x):
        t = np.tanh(0.5 * x)
        return 0.5 * (1.0 - t * t)

    def conj_bounds(self):
        return self._lo, self._hi

    def _conj_value(self, y):
        p, q = 1.0 + y, 1.0 - y
        return np.sum(xlogy(p, 0.5 * p) + xlogy(q, 0.5 * q))

    def _conj_grad(self, y):
        # ln((1 + t) / (1 - t))
        return 2.0 * np.arctanh(y)

    def _conj_hess_diag(self, y):
        return 2.0 / (1.0 - y * y)


class EpiScaled(ReferenceFunction):
    """``(lam * base)(x) = lam * base(x / lam)`` with conjugate ``lam * base*``."""

    def __init__(self, base, lam):
        lam = float(lam)
        if not lam > 0 or not np.isfinite(lam):
            raise ConfigurationError("epi-scaling parameter must be positive and finite")
        super().__init__(base.dim)
        self.base = base
        self.lam = lam
        self.kind = base.kind
        self.jointly_convex_dual = base.jointly_convex_dual

    def _value(self, x):
        return self.lam * self.base._value(x / self.lam)

    def _grad(self, x):
        return self.base._grad(x / self.lam)

    def _hess_diag(self, x):
        return self.base._hess_diag(x / self.lam) / self.lam

    def conj_bounds(self):
        return self.base.conj_bounds()

    def _conj_value(self, y):
        return self.lam * self.base._conj_value(y)

    def _conj_grad(self, y):
        return self.lam * self.base._conj_grad(y)

    def _conj_hess_diag(self, y):
        return self.lam * self.base._conj_hess_diag(y)

    def __repr__(self):
        return f"EpiScaled({self.base!r}, lam={self.lam!r})"


class Product(ReferenceFunction):
    """Block-separable reference ``phi(x) = sum_i (lam_i * phi_i)(x_i)``.

    With ``lam_i = 1 / L_i`` this is the reference under which a block-separable
    sum of functions with constants ``L_i`` has constant 1.
    """

    kind = "product"

    def __init__(self, blocks):
        blocks = [(ref, float(lam)) for ref, lam in blocks]
        if not blocks:
            raise ConfigurationError("product needs at least one block")
        for _, lam in blocks:
            if not lam > 0 or not np.isfinite(lam):
                raise ConfigurationError("block scales must be positive and finite")
        super().__init__(sum(ref.dim for ref, _ in blocks))
        self.blocks = tuple(blocks)
        self._scaled = tuple(ref if lam == 1.0 else EpiScaled(ref, lam) for ref, lam in blocks)
        offsets = np.cumsum([0] + [ref.dim for ref, _ in blocks])
        self.slices = tuple(slice(int(a), int(b)) for a, b in zip(offsets[:-1], offsets[1:]))
        lo = np.concatenate([r.conj_bounds()[0] for r in self._scaled])
        hi = np.concatenate([r.conj_bounds()[1] for r in self._scaled])
        self._lo, self._hi = _frozen(lo), _frozen(hi)
        self.jointly_convex_dual = all(r.jointly_convex_dual for r in self._scaled)

    def split(self, x):
        x = _as_vector(x, self.dim)
        return [x[s] for s in self.slices]

    def _blockwise(self, method, x):
        return np.concatenate([getattr(r, method)(x[s]) for r, s in zip(self._scaled, self.slices)])

    def _value(self, x):
        return sum(r._value(x[s]) for r, s in zip(self._scaled, self.slices))

    def _grad(self, x):
        return self._blockwise("_grad", x)

    def _hess_diag(self, x):
        return self._blockwise("_hess_diag", x)

    def conj_bounds(self):
        return self._lo, self._hi

    def _conj_value(self, y):
        return sum(r._conj_value(y[s]) for r, s in zip(self._scaled, self.slices))

    def _conj_grad(self, y):
        return self._blockwise("_conj_grad", y)

    def _conj_hess_diag(self, y):
        return self._blockwise("_conj_hess_diag", y)

    def __repr__(self):
        inner = ", ".join(f"({r!r}, {lam!r})" for r, lam in self.blocks)
        return f"Product([{inner}])"


class TiltScaled(ReferenceFunction):
    """``alpha * base + <c, .>``; conjugate ``alpha * base*((. - c) / alpha)``."""

    def __init__(self, base, alpha, c):
        alpha = float(alpha)
        if not alpha > 0 or not np.isfinite(alpha):
            raise ConfigurationError("tilt/scale factor alpha must be positive")
        super().__init__(base.dim)
        self.base = base
        self.alpha = alpha
        self.c = _frozen(_as_vector(np.broadcast_to(np.asarray(c, float), (base.dim,)), base.dim))
        self.kind = base.kind
        self.jointly_convex_dual = base.jointly_convex_dual
        lo, hi = base.conj_bounds()
        self._lo = _frozen(self.c + alpha * lo)
        self._hi = _frozen(self.c + alpha * hi)

    def _value(self, x):
        return self.alpha * self.base._value(x) + float(self.c @ x)

    def _grad(self, x):
        return self.alpha * self.base._grad(x) + self.c

    def _hess_diag(self, x):
        return self.alpha * self.base._hess_diag(x)

    def conj_bounds(self):
        return self._lo, self._hi

    def _conj_value(self, y):
        return self.alpha * self.base._conj_value((y - self.c) / self.alpha)

    def _conj_grad(self, y):
        return self.base._conj_grad((y - self.c) / self.alpha)

    def _conj_hess_diag(self, y):
        return self.base._conj_hess_diag((y - self.c) / self.alpha) / self.alpha

    def __repr__(self):
        return f"TiltScaled({self.base!r}, alpha={self.alpha!r}, c={self.c.tolist()})"


def make_euclidean(weights):
    return Euclidean(weights)


def make_exp(dim):
    return Exp(dim)


def make_sym_logistic(dim):
    return SymLogistic(dim)


def product(blocks):
    return Product(blocks)


def tilt_scale(base, alpha, c):
    return TiltScaled(base, alpha, c)


REFERENCE_KEYS = ("euclidean", "exp", "symlog")


def make_reference(key, dim, weights=None):
    """Build a reference from its CLI/config string key."""
    if key == "euclidean":
        return Euclidean(np.ones(dim) if weights is None else weights)
    if key == "exp":
        return Exp(dim)
    if key in ("symlog", "sym_logistic"):
        return SymLogistic(dim)
    raise ConfigurationError(f"unknown reference key {key!r}; expected one of {REFERENCE_KEYS}")


def legendre_roundtrip_check(phi, sample_count, seed, scale=2.0):
    """Max over random ``x`` of ``||conj_grad(grad(x)) - x||_inf``."""
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(sample_count):
        x = scale * rng.standard_normal(phi.dim)
        worst = max(worst, float(np.max(np.abs(phi.conj_grad(phi.grad(x)) - x))))
    return worst
