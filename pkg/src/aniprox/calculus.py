"""Combination rules for anisotropic smoothness constants and numeric verifiers."""

from dataclasses import dataclass

import numpy as np

from .errors import CalculusError, DomainError
from .reference import Exp, Product, ReferenceFunction, TiltScaled

__all__ = [
    "CombinedConstant",
    "SamplerReport",
    "combine_constants",
    "descent_inequality_sampler",
    "strong_convexity_dual_check",
]

RULES = ("separable", "relax", "average", "conic_exp", "tilt_scale")


@dataclass(frozen=True)
class CombinedConstant:
    rule: str
    L: float
    #: reference the constant is relative to, when the rule changes it
    reference: ReferenceFunction = None


def _base_kind(phi):
    while hasattr(phi, "base"):
        phi = phi.base
    return type(phi)


def combine_constants(rule, **inputs):
    """Constant of a combined function from the constants of its parts.

    ``separable``: ``blocks=[(phi_i, L_i), ...]`` gives ``L = 1`` relative to the
    product of the ``(1/L_i) * phi_i``.
    ``relax``: ``L1, L2`` gives ``L2`` when ``L2 >= L1``.
    ``average``: ``weights, constants, reference`` with weights summing to one;
    the reference must have a jointly convex dual distance. Gives ``max L_i``.
    ``conic_exp``: ``weights, constants, reference`` with nonnegative weights of
    positive sum and an ``Exp`` reference. Gives ``max L_i``.
    ``tilt_scale``: ``L, reference, alpha, c``; ``alpha h + <c, .>`` keeps ``L``
    relative to ``alpha phi + <c, .>``.
    """
    if rule == "separable":
        blocks = inputs["blocks"]
        if not blocks:
            raise CalculusError("separable rule needs at least one block")
        for _, L in blocks:
            if not L > 0:
                raise CalculusError("block constants must be positive")
        return CombinedConstant(rule, 1.0, Product([(phi, 1.0 / L) for phi, L in blocks]))
    if rule == "relax":
        L1, L2 = float(inputs["L1"]), float(inputs["L2"])
        if not L1 > 0 or L2 < L1:
            raise CalculusError(f"cannot relax constant {L1!r} to the smaller {L2!r}")
        return CombinedConstant(rule, L2)
    if rule in ("average", "conic_exp"):
        w = np.asarray(inputs["weights"], dtype=float)
        Ls = np.asarray(inputs["constants"], dtype=float)
        phi = inputs["reference"]
        if w.shape != Ls.shape or w.size == 0:
            raise CalculusError("weights and constants must be nonempty and of equal length")
        if np.any(w < 0) or np.any(Ls <= 0):
            raise CalculusError("weights must be nonnegative and constants positive")
        if rule == "average":
            if not phi.jointly_convex_dual:
                raise CalculusError(f"the averaging rule needs a jointly convex dual distance; "
                                    f"{phi!r} is not flagged as such")
            if abs(float(w.sum()) - 1.0) > 1e-12:
                raise CalculusError("averaging weights must sum to one")
        else:
            if _base_kind(phi) is not Exp:
                raise CalculusError("the conic rule is only available for the Exp reference")
            if not w.sum() > 0:
                raise CalculusError("conic weights need a positive sum")
        return CombinedConstant(rule, float(Ls.max()), phi)
    if rule == "tilt_scale":
        L = float(inputs["L"])
        if not L > 0:
            raise CalculusError("constant must be positive")
        return CombinedConstant(rule, L, TiltScaled(inputs["reference"], inputs["alpha"], inputs["c"]))
    raise CalculusError(f"unknown rule {rule!r}; expected one of {RULES}")


@dataclass(frozen=True)
class SamplerReport:
    worst_violation: float
    tight_residual: float
    evaluated: int
    skipped: int

    def passed(self, tol=1e-8):
        return self.worst_violation <= tol and self.tight_residual <= 1e-12


def _majorizer(f, phi, L, xbar, fbar, v, x):
    lam = 1.0 / L
    return fbar + lam * (phi.value(L * (x - xbar) + v) - phi.value(v))


def descent_inequality_sampler(f, phi, L, pair_count, seed, scale=1.0, shift=None):
    """Largest violation of the anisotropic descent inequality over random pairs.

    Pairs are ``xbar = shift + scale * N(0, I)`` and ``x = xbar + scale * N(0, I)``.
    The majorizer is ``f(xbar) + (1/L) * phi(L (x - xbar) + v) - (1/L) * phi(v)``
    with ``v = grad phi*(grad f(xbar))``. Pairs whose ``grad f(xbar)`` leaves
    ``int dom phi*`` are skipped and counted. ``tight_residual`` is the largest
    ``|majorizer - f|`` at ``x = xbar``.
    """
    rng = np.random.default_rng(seed)
    shift = np.zeros(phi.dim) if shift is None else np.asarray(shift, dtype=float)
    worst = -np.inf
    tight = 0.0
    skipped = 0
    for _ in range(pair_count):
        xbar = shift + scale * rng.standard_normal(phi.dim)
        x = xbar + scale * rng.standard_normal(phi.dim)
        d = f.grad(xbar)
        try:
            v = phi.conj_grad(d)
        except DomainError:
            skipped += 1
            continue
        fbar = f.value(xbar)
        worst = max(worst, f.value(x) - _majorizer(f, phi, L, xbar, fbar, v, x))
        tight = max(tight, abs(_majorizer(f, phi, L, xbar, fbar, v, xbar) - fbar))
    return SamplerReport(float(worst), float(tight), pair_count - skipped, skipped)


def strong_convexity_dual_check(g_conj_second, phi, mu, grid, tol=1e-12):
    """Check ``(phi*)''(t) / mu - (g*)''(t) >= -tol`` on a grid (scalar ``phi``).

    This is the pointwise surrogate for convexity of ``phi*/mu - g*`` on the
    interior of ``dom phi*``.
    """
    if phi.dim != 1:
        raise ValueError("strong_convexity_dual_check works with a scalar reference")
    if not mu > 0:
        raise ValueError("mu must be positive")
    grid = np.asarray(grid, dtype=float).ravel()
    mask = np.array([bool(phi.conj_interior_mask(np.array([t]))[0]) for t in grid])
    if not np.all(mask):
        raise DomainError("grid point outside int dom phi*", int(np.flatnonzero(~mask)[0]))
    lhs = np.array([phi.conj_hess_diag(np.array([t]))[0] for t in grid]) / mu
    rhs = np.array([float(g_conj_second(t)) for t in grid])
    return bool(np.all(lhs - rhs >= -tol))
