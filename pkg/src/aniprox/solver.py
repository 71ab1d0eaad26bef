"""Anisotropic proximal gradient iterations and their convergence monitors.

One iteration is a forward step ``y = x - lam * grad phi*(grad f(x))``
followed by the backward step of ``g`` at ``y`` (see :mod:`aniprox.prox`).
The regularized gap ``(F(x) - F_lam(x)) / lam`` comes for free from the
same two steps, so every trace row carries it.
"""

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import AniproxError, ConfigurationError, ConstraintQualificationError, LinesearchError
from .prox import L1, Linear, SquaredL2, Zero

__all__ = [
    "SmoothObjective",
    "SolverConfig",
    "TraceRecord",
    "IterateTrace",
    "RateEstimate",
    "forward_step",
    "fbe",
    "gap",
    "run",
    "run_fixed",
    "run_linesearch",
    "run_euclidean_baseline",
    "run_armijo_gd",
    "rate_monitor",
    "read_trace_csv",
]

TRACE_HEADER = ("k", "F", "gap", "lambda", "grad_evals", "time_s")


class SmoothObjective:
    """Smooth part ``f`` together with the reference it is smooth relative to.

    Either subclass and override :meth:`value`/:meth:`grad`, or pass callables.
    ``L`` is the declared anisotropic smoothness constant (``None`` if unknown).
    """

    def __init__(self, value=None, grad=None, reference=None, L=None, convex=False, name="f"):
        self._value_fn = value
        self._grad_fn = grad
        self.reference = reference
        self.L = None if L is None else float(L)
        self.convex = convex
        self.name = name

    def value(self, x):
        return float(self._value_fn(x))

    def grad(self, x):
        return np.asarray(self._grad_fn(x), dtype=float)

    @property
    def dim(self):
        return self.reference.dim

    def shifted(self, a):
        """``x -> f(x - a)`` with the same reference and constant."""
        a = np.asarray(a, dtype=float)
        return SmoothObjective(
            lambda x: self.value(np.asarray(x) - a),
            lambda x: self.grad(np.asarray(x) - a),
            self.reference,
            self.L,
            self.convex,
            f"{self.name}(.-a)",
        )


@dataclass
class SolverConfig:
    """Step-size policy and stopping rule.

    ``mode`` is ``"fixed"`` (uses ``lam``), ``"linesearch"`` (backtracks from
    ``lam_max``) or ``"warmstart"`` (backtracks from the previous step divided
    by ``alpha``, starting at ``lam_init``; reaching ``lam_min`` accepts it).
    """

    mode: str = "fixed"
    lam: float = None
    lam_max: float = None
    lam_init: float = None
    alpha: float = 0.5
    lam_min: float = 1e-12
    max_iter: int = 10000
    gap_tol: float = 1e-9
    domain_policy: str = "clamp"
    eta: float = 1e-12
    gap_lambda: float = None
    ls_rtol: float = 1e-13
    tau: float = 1e-4
    store_iterates: bool = False

    def __post_init__(self):
        if self.mode not in ("fixed", "linesearch", "warmstart"):
            raise ConfigurationError(f"unknown solver mode {self.mode!r}")
        if self.domain_policy not in ("clamp", "error"):
            raise ConfigurationError("domain_policy must be 'clamp' or 'error'")
        if self.max_iter < 0:
            raise ConfigurationError("max_iter must be nonnegative")
        if self.mode == "fixed":
            if self.lam is None or not self.lam > 0:
                raise ConfigurationError("fixed mode needs a positive step-size lam")
        else:
            if not 0 < self.alpha < 1:
                raise ConfigurationError("backtracking factor alpha must lie in (0, 1)")
            start = self.lam_max if self.mode == "linesearch" else self.lam_init
            if start is None or not start > 0:
                raise ConfigurationError(f"{self.mode} mode needs a positive initial step-size")
            if not 0 < self.lam_min <= start:
                raise ConfigurationError("need 0 < lam_min <= initial step-size")

    def echo(self):
        return {k: v for k, v in asdict(self).items() if v is not None}


@dataclass
class TraceRecord:
    k: int
    F: float
    gap: float
    lam: float
    grad_evals: int
    time_s: float


@dataclass
class IterateTrace:
    solver: str = ""
    records: list = field(default_factory=list)
    status: str = "running"
    message: str = ""
    x: np.ndarray = None
    iterates: list = None
    clamp_events: int = 0
    ls_trials: int = 0
    config: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.records)

    def column(self, name):
        key = "lam" if name == "lambda" else name
        return np.array([getattr(r, key) for r in self.records], dtype=float)

    @property
    def F(self):
        return self.column("F")

    @property
    def gaps(self):
        return self.column("gap")

    @property
    def lams(self):
        return self.column("lam")

    @property
    def grad_evals(self):
        return self.records[-1].grad_evals if self.records else 0

    def to_csv(self, include_time=True):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for r in self.records:
            w.writerow([r.k, repr(r.F), repr(r.gap), repr(r.lam), r.grad_evals,
                        repr(r.time_s if include_time else 0.0)])
        return buf.getvalue()

    def summary(self):
        last = self.records[-1] if self.records else None
        return {
            "solver": self.solver,
            "status": self.status,
            "message": self.message,
            "iterations": (last.k if last else 0),
            "grad_evals": self.grad_evals,
            "linesearch_trials": self.ls_trials,
            "final_F": (last.F if last else None),
            "final_gap": (last.gap if last else None),
            "clamp_events": self.clamp_events,
            "config": self.config,
        }

    def summary_json(self):
        return json.dumps(_jsonable(self.summary()), indent=2, sort_keys=True)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def read_trace_csv(text):
    """Parse the CSV produced by :meth:`IterateTrace.to_csv` back into records."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != TRACE_HEADER:
        raise ValueError("not a trace CSV (unexpected header)")
    return [TraceRecord(int(r[0]), float(r[1]), float(r[2]), float(r[3]), int(r[4]), float(r[5]))
            for r in rows[1:]]


# ---------------------------------------------------------------------------
# single steps
# ---------------------------------------------------------------------------

def _dual_direction(f, phi, x, policy="error", eta=1e-12):
    """Return ``(grad f(x), grad phi*(grad f(x)), clamp count)``."""
    d = f.grad(x)
    if not np.all(np.isfinite(d)):
        raise ConstraintQualificationError("gradient of f is not finite")
    clamps = 0
    if not phi.in_conj_interior(d):
        if policy == "error":
            raise ConstraintQualificationError(
                f"range condition violated: grad f(x) leaves int dom phi* "
                f"(boundary distance {phi.boundary_distance(d):.3e})"
            )
        d, clamps = phi.clamp_to_conj_interior(d, eta)
    return d, phi.conj_grad(d), clamps


def forward_step(f, lam, x, phi=None, policy="error", eta=1e-12):
    """Anisotropic forward step ``x - lam * grad phi*(grad f(x))``."""
    phi = f.reference if phi is None else phi
    x = np.asarray(x, dtype=float)
    _, v, _ = _dual_direction(f, phi, x, policy, eta)
    return x - lam * v


def _envelope_parts(f, g, phi, lam, x, v):
    y = x - lam * v
    res = g.backward_step(phi, lam, y)
    return y, res


def fbe(f, g, phi, lam, x):
    """Anisotropic forward-backward envelope ``F_lam(x)``."""
    x = np.asarray(x, dtype=float)
    _, v, _ = _dual_direction(f, phi, x)
    _, res = _envelope_parts(f, g, phi, lam, x, v)
    return f.value(x) + res.envelope_value - lam * phi.value(v)


def _gap_from_step(g, phi, lam, x, y, v, x_next):
    # (F(x) - F_lam(x)) / lam without forming F: the f(x) terms cancel exactly
    return (g.value(x) - g.value(x_next)) / lam + phi.value(v) - phi.value((x_next - y) / lam)


def gap(f, g, phi, lam, x):
    """Regularized gap ``(F(x) - F_lam(x)) / lam``; nonnegative, zero exactly at stationary points."""
    x = np.asarray(x, dtype=float)
    _, v, _ = _dual_direction(f, phi, x)
    y, res = _envelope_parts(f, g, phi, lam, x, v)
    return _gap_from_step(g, phi, lam, x, y, v, res.point)


# ---------------------------------------------------------------------------
# iteration drivers
# ---------------------------------------------------------------------------

class _Recorder:
    def __init__(self, name, config, x0):
        self.trace = IterateTrace(solver=name, config=config.echo())
        self.t0 = time.perf_counter()
        self.store = config.store_iterates
        if self.store:
            self.trace.iterates = [np.array(x0, dtype=float)]

    def record(self, k, F, gap_value, lam, grad_evals):
        self.trace.records.append(
            TraceRecord(k, float(F), float(gap_value), float(lam), int(grad_evals),
                        time.perf_counter() - self.t0)
        )

    def push(self, x):
        if self.store:
            self.trace.iterates.append(np.array(x, dtype=float))

    def finish(self, x, status, message=""):
        self.trace.x = np.array(x, dtype=float)
        self.trace.status = status
        self.trace.message = message
        return self.trace


def _converged(gap_value, F, tol):
    return gap_value <= tol * (1.0 + abs(F))


def run_fixed(f, g, phi, config, x0, name="aniso_fixed"):
    """Anisotropic proximal gradient with constant step-size ``config.lam``.

    Stops once ``gap <= gap_tol * (1 + |F|)`` or after ``max_iter`` steps.
    Domain/CQ failures end the run with ``status == "error"`` and the trace so far.
    """
    if config.mode != "fixed":
        raise ConfigurationError("run_fixed needs a fixed-mode config")
    lam = config.lam
    if f.L is not None and lam > (1.0 / f.L) * (1.0 + 1e-12):
        raise ConfigurationError(f"step-size {lam!r} exceeds 1/L = {1.0 / f.L!r}")
    rec = _Recorder(name, config, x0)
    x = np.array(x0, dtype=float)
    try:
        F = f.value(x) + g.value(x)
        for k in range(config.max_iter + 1):
            _, v, clamps = _dual_direction(f, phi, x, config.domain_policy, config.eta)
            rec.trace.clamp_events += clamps
            y = x - lam * v
            x_next = g.backward_step(phi, lam, y).point
            gap_k = _gap_from_step(g, phi, lam, x, y, v, x_next)
            if config.gap_lambda is not None and config.gap_lambda != lam:
                gap_k = gap(f, g, phi, config.gap_lambda, x)
            rec.record(k, F, gap_k, lam, k + 1)
            if _converged(gap_k, F, config.gap_tol):
                return rec.finish(x, "converged")
            if k == config.max_iter:
                break
            x = x_next
            F = f.value(x) + g.value(x)
            rec.push(x)
    except AniproxError as exc:
        return rec.finish(x, "error", f"{type(exc).__name__}: {exc}")
    return rec.finish(x, "max_iter")


def run_linesearch(f, g, phi, config, x0, name=None):
    """Backtracking anisotropic proximal gradient.

    ``config.mode == "linesearch"`` tries ``lam_max, alpha*lam_max, ...`` and
    fails below ``lam_min``. ``"warmstart"`` starts each iteration from the
    previous accepted step divided by ``alpha`` (``lam_init`` at ``k = 0``) and
    accepts ``lam_min`` once the backtracking reaches it.

    The acceptance test is the descent inequality at ``(x, x_next)`` with
    constant ``1/lam``, up to ``ls_rtol`` times the magnitude of its terms.
    """
    if config.mode not in ("linesearch", "warmstart"):
        raise ConfigurationError("run_linesearch needs a linesearch or warmstart config")
    warm = config.mode == "warmstart"
    name = name or ("aniso_warmstart" if warm else "aniso_linesearch")
    rec = _Recorder(name, config, x0)
    x = np.array(x0, dtype=float)
    lam_prev = None
    try:
        fx = f.value(x)
        F = fx + g.value(x)
        for k in range(config.max_iter + 1):
            _, v, clamps = _dual_direction(f, phi, x, config.domain_policy, config.eta)
            rec.trace.clamp_events += clamps
            phi_v = phi.value(v)
            if warm:
                lam = config.lam_init if lam_prev is None else lam_prev / config.alpha
                if config.lam_max is not None:
                    lam = min(lam, config.lam_max)
            else:
                lam = config.lam_max
            while True:
                forced = False
                if lam < config.lam_min:
                    if not warm:
                        raise LinesearchError(
                            f"step-size fell below lam_min = {config.lam_min!r} at iteration {k}; "
                            "the reference/constant pairing is probably wrong"
                        )
                    lam, forced = config.lam_min, True
                rec.trace.ls_trials += 1
                y = x - lam * v
                x_next = g.backward_step(phi, lam, y).point
                f_next = f.value(x_next)
                phi_u = phi.value((x_next - y) / lam)
                bound = fx + lam * (phi_u - phi_v)
                slack = config.ls_rtol * (abs(fx) + lam * (abs(phi_u) + abs(phi_v)))
                if forced or f_next <= bound + slack:
                    break
                lam *= config.alpha
            lam_prev = lam
            gap_k = _gap_from_step(g, phi, lam, x, y, v, x_next)
            if config.gap_lambda is not None and config.gap_lambda != lam:
                gap_k = gap(f, g, phi, config.gap_lambda, x)
            rec.record(k, F, gap_k, lam, k + 1)
            if _converged(gap_k, F, config.gap_tol):
                return rec.finish(x, "converged")
            if k == config.max_iter:
                break
            x, fx = x_next, f_next
            F = fx + g.value(x)
            rec.push(x)
    except AniproxError as exc:
        return rec.finish(x, "error", f"{type(exc).__name__}: {exc}")
    return rec.finish(x, "max_iter")


def run(f, g, phi, config, x0, name=None):
    """Dispatch on ``config.mode``."""
    if config.mode == "fixed":
        return run_fixed(f, g, phi, config, x0, name=name or "aniso_fixed")
    return run_linesearch(f, g, phi, config, x0, name=name)


# ---------------------------------------------------------------------------
# baselines
# ---------------------------------------------------------------------------

def _euclidean_prox(g, lam, y, w):
    """Classical scaled proximal map of ``g`` with metric ``diag(w) / lam``."""
    if isinstance(g, Zero):
        return y
    if isinstance(g, L1):
        t = lam * (g.nu / w)
        return np.sign(y) * np.maximum(np.abs(y) - t, 0.0)
    if isinstance(g, SquaredL2):
        return w * y / (w + lam * g.nu)
    if isinstance(g, Linear):
        return y - lam * (g.c / w)
    raise ConfigurationError(f"no Euclidean prox for {type(g).__name__}")


def run_euclidean_baseline(f, g, config, x0, weights=None, name="euclidean"):
    """Scaled Euclidean proximal gradient (fixed step or warm-started backtracking).

    Written independently of the anisotropic driver; with unit weights it
    reproduces the anisotropic iterates under the Euclidean reference.
    """
    x = np.array(x0, dtype=float)
    w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=float)
    rec = _Recorder(name, config, x0)
    warm = config.mode == "warmstart"
    lam_prev = None
    try:
        fx = f.value(x)
        F = fx + g.value(x)
        for k in range(config.max_iter + 1):
            d = f.grad(x)
            v = d / w
            half_v = 0.5 * float(np.sum(w * v * v))
            if config.mode == "fixed":
                lam = config.lam
                y = x - lam * v
                x_next = _euclidean_prox(g, lam, y, w)
            else:
                if warm:
                    lam = config.lam_init if lam_prev is None else lam_prev / config.alpha
                else:
                    lam = config.lam_max
                while True:
                    forced = False
                    if lam < config.lam_min:
                        if not warm:
                            raise LinesearchError("Euclidean linesearch step underflow")
                        lam, forced = config.lam_min, True
                    rec.trace.ls_trials += 1
                    y = x - lam * v
                    x_next = _euclidean_prox(g, lam, y, w)
                    step = x_next - x
                    f_next = f.value(x_next)
                    bound = fx + float(d @ step) + 0.5 * float(np.sum(w * step * step)) / lam
                    slack = config.ls_rtol * (abs(fx) + abs(bound - fx))
                    if forced or f_next <= bound + slack:
                        break
                    lam *= config.alpha
                lam_prev = lam
            u = (x_next - y) / lam
            gap_k = (g.value(x) - g.value(x_next)) / lam + half_v - 0.5 * float(np.sum(w * u * u))
            rec.record(k, F, gap_k, lam, k + 1)
            if _converged(gap_k, F, config.gap_tol):
                return rec.finish(x, "converged")
            if k == config.max_iter:
                break
            x = x_next
            fx = f.value(x)
            F = fx + g.value(x)
            rec.push(x)
    except AniproxError as exc:
        return rec.finish(x, "error", f"{type(exc).__name__}: {exc}")
    return rec.finish(x, "max_iter")


def run_armijo_gd(f, config, x0, tau=None, gap_fn=None, name="armijo_gd"):
    """Gradient descent with Armijo backtracking on a smooth total objective.

    Each iteration takes the largest ``lam`` in ``lam_init * alpha^t`` with
    ``f(x - lam grad) <= f(x) - tau * lam * ||grad||^2``. ``gap_fn`` supplies the
    stationarity measure recorded in the trace (default ``||grad||^2 / 2``).
    """
    tau = config.tau if tau is None else tau
    lam_init = config.lam_init if config.lam_init is not None else config.lam_max
    if lam_init is None:
        raise ConfigurationError("Armijo needs lam_init")
    rec = _Recorder(name, config, x0)
    x = np.array(x0, dtype=float)
    fx = f.value(x)
    for k in range(config.max_iter + 1):
        d = f.grad(x)
        # ||d||^2 can overflow far from the solution while lam * ||d||^2 does not
        top = float(np.max(np.abs(d)))
        norm = top * float(np.linalg.norm(d / top)) if top > 0 else 0.0
        gap_k = 0.5 * norm * norm if gap_fn is None else float(gap_fn(x))
        if norm == 0.0:
            rec.record(k, fx, gap_k, 0.0, k + 1)
            return rec.finish(x, "converged", "zero gradient")
        lam = lam_init
        while True:
            rec.trace.ls_trials += 1
            x_next = x - lam * d
            f_next = f.value(x_next)
            if f_next <= fx - tau * (lam * norm) * norm:
                break
            lam *= config.alpha
            if lam < config.lam_min:
                rec.record(k, fx, gap_k, lam, k + 1)
                return rec.finish(x, "step_underflow", "Armijo step fell below lam_min")
        rec.record(k, fx, gap_k, lam, k + 1)
        if _converged(gap_k, fx, config.gap_tol):
            return rec.finish(x, "converged")
        if k == config.max_iter:
            break
        x, fx = x_next, f_next
        rec.push(x)
    return rec.finish(x, "max_iter")


# ---------------------------------------------------------------------------
# rate monitor
# ---------------------------------------------------------------------------

@dataclass
class RateEstimate:
    slope: float
    residual: float
    n_points: int
    defined: bool
    reason: str = ""

    @property
    def factor(self):
        return math.exp(self.slope) if self.defined else math.nan


def rate_monitor(trace, inf_F_estimate, tail_fraction=0.5, floor=None):
    """Fit ``ln(F_k - inf F) ~ a + slope * k`` over the tail of a trace.

    ``trace`` is an :class:`IterateTrace` or a sequence of objective values.
    Points whose excess drops below ``floor`` (default ``1e-12 (1 + |inf F|)``)
    are treated as round-off and excluded. ``residual`` is the RMS deviation
    of the fit in log space. A nonnegative slope or fewer than three usable
    points yields ``defined == False``.
    """
    values = trace.F if isinstance(trace, IterateTrace) else np.asarray(trace, dtype=float)
    if values.shape[0] < 10:
        raise ValueError("rate_monitor needs a trace of length >= 10")
    excess = values - inf_F_estimate
    if floor is None:
        floor = 1e-12 * (1.0 + abs(inf_F_estimate))
    if np.any(excess <= 0):
        return RateEstimate(math.nan, math.nan, 0, False, "nonpositive excess values")
    ks = np.flatnonzero(excess > floor)
    if ks.size < 3:
        return RateEstimate(math.nan, math.nan, int(ks.size), False, "too few points above floor")
    # stop at the first point below the floor so the fit window is contiguous
    cut = int(np.argmax(excess <= floor)) if np.any(excess <= floor) else values.shape[0]
    ks = ks[ks < cut]
    start = ks[int(len(ks) * (1.0 - tail_fraction))] if len(ks) >= 6 else ks[0]
    ks = ks[ks >= start]
    if ks.size < 3:
        return RateEstimate(math.nan, math.nan, int(ks.size), False, "too few points in tail")
    logs = np.log(excess[ks])
    coef = np.polyfit(ks.astype(float), logs, 1)
    fit = np.polyval(coef, ks.astype(float))
    residual = float(np.sqrt(np.mean((logs - fit) ** 2)))
    slope = float(coef[0])
    if not slope < 0:
        return RateEstimate(slope, residual, int(ks.size), False, "no decrease (flat trace)")
    return RateEstimate(slope, residual, int(ks.size), True)
