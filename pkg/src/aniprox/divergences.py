"""Bregman distances generated by a reference ``phi`` and by its conjugate."""

import functools
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

__all__ = ["BregmanValue", "bregman_dual", "bregman_primal", "dual_identity_residual", "kl_divergence"]


@functools.total_ordering
@dataclass(frozen=True)
class BregmanValue:
    """Extended-real distance value: either finite or ``+inf``.

    Comparisons treat the infinite value as larger than every finite one and
    equal only to itself.
    """

    value: float = 0.0
    infinite: bool = False

    @classmethod
    def inf(cls):
        return cls(math.inf, True)

    @property
    def finite(self):
        return not self.infinite

    def __float__(self):
        return math.inf if self.infinite else float(self.value)

    def _key(self, other):
        if isinstance(other, BregmanValue):
            return float(other)
        return float(other)

    def __eq__(self, other):
        try:
            return float(self) == self._key(other)
        except (TypeError, ValueError):
            return NotImplemented

    def __lt__(self, other):
        return float(self) < self._key(other)

    def __hash__(self):
        return hash(float(self))


def bregman_dual(phi, x, y):
    """``D_{phi*}(x, y)``; ``+inf`` unless ``x in dom phi*`` and ``y in int dom phi*``.

    For ``phi = Exp`` this is the Kullback-Leibler divergence.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if not phi.in_conj_domain(x) or not phi.in_conj_interior(y):
        return BregmanValue.inf()
    d = phi.conj_value(x) - phi.conj_value(y) - float(phi.conj_grad(y) @ (x - y))
    return BregmanValue(max(d, 0.0))


def bregman_primal(phi, u, v):
    """``D_phi(u, v) = phi(u) - phi(v) - <grad phi(v), u - v>`` (finite: ``dom phi = R^n``)."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    d = phi.value(u) - phi.value(v) - float(phi.grad(v) @ (u - v))
    return BregmanValue(max(d, 0.0))


def dual_identity_residual(phi, x, y):
    """``|D_{phi*}(x, y) - D_phi(grad phi*(y), grad phi*(x))|`` for interior ``x, y``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    for arg in (x, y):
        if not phi.in_conj_interior(arg):
            mask = phi.conj_interior_mask(arg)
            raise DomainError("dual identity needs interior arguments", int(np.flatnonzero(~mask)[0]))
    lhs = bregman_dual(phi, x, y)
    rhs = bregman_primal(phi, phi.conj_grad(y), phi.conj_grad(x))
    return abs(float(lhs) - float(rhs))


def kl_divergence(x, y):
    """Generalized KL divergence ``sum x ln(x/y) - x + y`` written out directly.

    Kept independent of the reference machinery so it can serve as an oracle.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(x < 0) or np.any(y <= 0):
        return math.inf
    total = 0.0
    for xi, yi in zip(x.tolist(), y.tolist()):
        total += (xi * math.log(xi / yi) if xi > 0 else 0.0) - xi + yi
    return total
