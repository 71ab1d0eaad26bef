"""Experiment configuration, batch comparison runs and invariant check suites.

Configuration files are INI-style (``[section]`` headers, ``key = value``
lines). Recognized keys, with defaults:

``[problem]``
    ``kind`` (``logistic`` | ``exp_lp`` | ``ot``), ``m``, ``n``, ``seed``,
    ``reg`` (``l1`` | ``sql2`` | ``none``), ``nu``, ``sigma``, ``eps``,
    ``data`` (LIBSVM file for ``logistic``, ``.npz`` with ``A, b, c`` for ``exp_lp``).
``[solvers]``
    ``names`` (comma list of ``aniso_fixed``, ``aniso_linesearch``,
    ``aniso_warmstart``, ``euclidean``, ``armijo``), ``reference``,
    ``lam`` (fixed step, default ``1/L``), ``lam_max``, ``lam_init``, ``alpha``,
    ``lam_min``, ``tau``, ``max_iter``, ``gap_tol``.
``[grid]``
    ``enabled``, ``alphas``, ``lam_inits``.
``[output]``
    ``timing`` (write wall-clock times; off by default so reruns are byte-identical).
"""

import configparser
import io
import json
import math
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import models
from .calculus import descent_inequality_sampler
from .data import generate_exp_lp, parse_libsvm, serialize_libsvm, to_dense
from .divergences import dual_identity_residual
from .errors import ConfigurationError
from .prox import L1, moreau_decomposition_residual
from .reference import Euclidean, Exp, SymLogistic, legendre_roundtrip_check, make_reference
from .solver import (
    SmoothObjective,
    SolverConfig,
    _jsonable,
    gap,
    run_armijo_gd,
    run_euclidean_baseline,
    run_fixed,
    run_linesearch,
)

__all__ = [
    "ExperimentConfig",
    "Problem",
    "load_config",
    "build_problem",
    "run_experiment",
    "check_suites",
    "SUITES",
    "atomic_write",
    "rank_one_logistic_toy",
    "ot_instance",
]

SOLVER_NAMES = ("aniso_fixed", "aniso_linesearch", "aniso_warmstart", "euclidean", "armijo")
DEFAULT_ALPHAS = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
DEFAULT_LAM_INITS = (1.0, 5.0, 10.0, 15.0)


def _floats(text):
    return tuple(float(t) for t in text.replace(" ", "").split(",") if t)


@dataclass
class ExperimentConfig:
    kind: str = "logistic"
    m: int = 100
    n: int = 10
    seed: int = 0
    reg: str = "l1"
    nu: float = 0.01
    sigma: float = 0.001
    eps: float = 1e-8
    data: str = ""
    solvers: tuple = ("aniso_fixed", "aniso_warmstart", "euclidean")
    reference: str = ""
    lam: float = None
    lam_max: float = None
    lam_init: float = 10.0
    alpha: float = 0.5
    lam_min: float = None
    tau: float = 1e-4
    max_iter: int = 10000
    gap_tol: float = 1e-9
    grid: bool = False
    alphas: tuple = DEFAULT_ALPHAS
    lam_inits: tuple = DEFAULT_LAM_INITS
    timing: bool = False

    def __post_init__(self):
        if self.kind not in ("logistic", "exp_lp", "ot"):
            raise ConfigurationError(f"unknown problem kind {self.kind!r}")
        unknown = [s for s in self.solvers if s not in SOLVER_NAMES]
        if unknown or not self.solvers:
            raise ConfigurationError(f"unknown or empty solver list {unknown or self.solvers}")
        if not self.alphas or not self.lam_inits:
            raise ConfigurationError("grid lists must be nonempty")
        if any(not 0 < a < 1 for a in self.alphas) or not 0 < self.alpha < 1:
            raise ConfigurationError("alpha values must lie in (0, 1)")
        if any(v <= 0 for v in self.lam_inits) or self.lam_init <= 0:
            raise ConfigurationError("initial step-sizes must be positive")
        if self.m < 1 or self.n < 1 or self.max_iter < 0:
            raise ConfigurationError("m, n must be >= 1 and max_iter >= 0")

    def as_dict(self):
        return _jsonable({k: (list(v) if isinstance(v, tuple) else v)
                          for k, v in self.__dict__.items()})


def load_config(text):
    """Parse INI text into an :class:`ExperimentConfig`."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f"config: {exc}") from None
    kw = {}
    conv = {
        "problem": {"kind": str, "m": int, "n": int, "seed": int, "reg": str, "nu": float,
                    "sigma": float, "eps": float, "data": str},
        "solvers": {"names": None, "reference": str, "lam": float, "lam_max": float,
                    "lam_init": float, "alpha": float, "lam_min": float, "tau": float,
                    "max_iter": int, "gap_tol": float},
        "grid": {"enabled": None, "alphas": _floats, "lam_inits": _floats},
        "output": {"timing": None},
    }
    for section in cp.sections():
        if section not in conv:
            raise ConfigurationError(f"config: unknown section [{section}]")
        for key, raw in cp.items(section):
            if key not in conv[section]:
                raise ConfigurationError(f"config: unknown key {key!r} in [{section}]")
            try:
                if key == "names":
                    kw["solvers"] = tuple(s.strip() for s in raw.split(",") if s.strip())
                elif key == "enabled":
                    kw["grid"] = cp.getboolean(section, key)
                elif key == "timing":
                    kw["timing"] = cp.getboolean(section, key)
                else:
                    kw[key] = conv[section][key](raw)
            except ValueError as exc:
                raise ConfigurationError(f"config: bad value for {key!r}: {exc}") from None
    return ExperimentConfig(**kw)


# ---------------------------------------------------------------------------
# problem assembly
# ---------------------------------------------------------------------------

@dataclass
class Problem:
    """Everything a solver run needs; ``total`` is the smooth total cost if one exists."""

    name: str
    f: SmoothObjective
    g: object
    phi: object
    L: float
    x0: np.ndarray
    total: SmoothObjective = None
    total_x0: np.ndarray = None
    gap_fn: object = None
    euclidean_L: float = None
    info: dict = field(default_factory=dict)


def rank_one_logistic_toy():
    """Four fixed rows with collinear ``b_i a_i``; the declared constant is tight here."""
    A = np.array([[1.0, 1.0], [-1.0, -1.0], [0.5, 0.5], [1.0, 1.0]])
    b = np.array([1.0, -1.0, 1.0, 1.0])
    return A, b


def ot_instance(n, m, seed):
    """Random OT instance: costs uniform in ``[0, 1]``, positive normalized marginals."""
    rng = np.random.default_rng(seed)
    C = rng.uniform(0.0, 1.0, size=(m, n))
    r = rng.uniform(0.5, 1.5, size=n)
    s = rng.uniform(0.5, 1.5, size=m)
    return C, r / r.sum(), s / s.sum()


def _logistic_problem(cfg):
    if cfg.data:
        with open(cfg.data, encoding="utf-8") as fh:
            A, b = to_dense(parse_libsvm(fh.read()))
    else:
        A, b = models.logistic_toy(cfg.m, cfg.n, cfg.seed)
    reg = None if cfg.reg == "none" else (cfg.reg, cfg.nu)
    mdl = models.build_logistic(A, b, reg)
    n = A.shape[1]
    x0 = np.zeros(n)
    euclidean_L = max(float(np.linalg.norm(A, 2)) ** 2 / (4.0 * A.shape[0]), models.L_FLOOR)
    f, phi = mdl.f, mdl.phi
    if cfg.reference and cfg.reference != "symlog":
        phi = make_reference(cfg.reference, n)
        f = SmoothObjective(mdl.f.value, mdl.f.grad, phi,
                            euclidean_L if cfg.reference == "euclidean" else None, True, "logistic")
    total = None
    if cfg.reg in ("none", "sql2"):
        g = mdl.g
        total = SmoothObjective(lambda x: mdl.f.value(x) + g.value(x),
                                lambda x: mdl.f.grad(x) + (g.nu * x if cfg.reg == "sql2" else 0.0),
                                None, None, True, "logistic_total")
    return Problem("logistic", f, mdl.g, phi, f.L if f.L is not None else mdl.L, x0, total, x0,
                   euclidean_L=euclidean_L, info={"m": A.shape[0], "n": n, "L": mdl.L})


def _exp_lp_problem(cfg):
    if cfg.data:
        with np.load(cfg.data) as z:
            A, b, c = z["A"], z["b"], z["c"]
        sigma = cfg.sigma
    else:
        A, b, c, sigma = generate_exp_lp(cfg.m, cfg.n, cfg.seed, cfg.sigma)
    mdl = models.build_lifted_exp_lp(A, b, c, sigma, cfg.eps)
    lam_ref = 1.0 / mdl.L

    def gap_fn(x):
        return gap(mdl.f, mdl.g, mdl.phi, lam_ref, mdl.lift(x))

    n = A.shape[1]
    return Problem("exp_lp", mdl.f, mdl.g, mdl.phi, mdl.L, mdl.lift(np.zeros(n)),
                   mdl.total_objective(), np.zeros(n), gap_fn,
                   info={"m": A.shape[0], "n": n, "sigma": sigma, "eps": cfg.eps, "L": mdl.L})


def _ot_problem(cfg):
    C, r, s = ot_instance(cfg.n, cfg.m, cfg.seed)
    mdl = models.build_ot_dual(C, r, s, cfg.sigma, "joint")

    def gap_fn(z):
        return gap(mdl.f, mdl.g, mdl.phi, mdl.lam, z)

    x0 = np.zeros(cfg.n + cfg.m)
    return Problem("ot", mdl.f, mdl.g, mdl.phi, mdl.L, x0, mdl.folded_objective(), x0, gap_fn,
                   info={"m": cfg.m, "n": cfg.n, "sigma": cfg.sigma, "L": mdl.L})


def build_problem(cfg):
    return {"logistic": _logistic_problem, "exp_lp": _exp_lp_problem, "ot": _ot_problem}[cfg.kind](cfg)


def _solver_config(cfg, prob, name, alpha=None, lam_init=None):
    alpha = cfg.alpha if alpha is None else alpha
    lam_init = cfg.lam_init if lam_init is None else lam_init
    common = dict(max_iter=cfg.max_iter, gap_tol=cfg.gap_tol, alpha=alpha, tau=cfg.tau)
    if name == "aniso_fixed":
        return SolverConfig(mode="fixed", lam=cfg.lam or 1.0 / prob.L, **common)
    if name == "euclidean":
        if cfg.grid or cfg.lam is None:
            lam_min = cfg.lam_min or 1e-12
            return SolverConfig(mode="warmstart", lam_init=lam_init, lam_min=min(lam_min, lam_init),
                                **common)
        return SolverConfig(mode="fixed", lam=cfg.lam, **common)
    if name == "armijo":
        return SolverConfig(mode="warmstart", lam_init=lam_init, lam_min=cfg.lam_min or 1e-300,
                            **common)
    # exp-type problems terminate the warm-started search safely at 1/L
    default_min = 1.0 / prob.L if prob.name in ("exp_lp", "ot") else 1e-12
    lam_min = cfg.lam_min or default_min
    if name == "aniso_linesearch":
        lam_max = cfg.lam_max or lam_init
        return SolverConfig(mode="linesearch", lam_max=lam_max, lam_min=min(lam_min, lam_max), **common)
    return SolverConfig(mode="warmstart", lam_init=lam_init, lam_min=min(lam_min, lam_init), **common)


def _run_one(prob, name, scfg):
    if name == "aniso_fixed":
        return run_fixed(prob.f, prob.g, prob.phi, scfg, prob.x0, name=name)
    if name in ("aniso_linesearch", "aniso_warmstart"):
        return run_linesearch(prob.f, prob.g, prob.phi, scfg, prob.x0, name=name)
    if name == "euclidean":
        if prob.name != "logistic":
            raise ConfigurationError("the Euclidean proximal baseline needs a Lipschitz smooth f")
        f = SmoothObjective(prob.f.value, prob.f.grad, Euclidean(np.ones(prob.x0.shape[0])),
                            prob.euclidean_L, True)
        return run_euclidean_baseline(f, prob.g, scfg, prob.x0, name=name)
    if prob.total is None:
        raise ConfigurationError("Armijo gradient descent needs a smooth total objective")
    return run_armijo_gd(prob.total, scfg, prob.total_x0, gap_fn=prob.gap_fn, name=name)


def _safe_run(prob, name, scfg):
    try:
        return _run_one(prob, name, scfg), None
    except Exception as exc:  # recorded in the summary; one failure must not abort the batch
        return None, f"{type(exc).__name__}: {exc}"


def atomic_write(path, text):
    """Write ``text`` to ``path`` via a temporary file in the same directory."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _grid_search(cfg, prob, name, workers):
    combos = [(a, l) for a in cfg.alphas for l in cfg.lam_inits]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(lambda al: _safe_run(prob, name, _solver_config(cfg, prob, name, *al)),
                                combos))
    table = []
    best = None
    for (a, l), (trace, err) in zip(combos, results):
        row = {"alpha": a, "lam_init": l,
               "status": trace.status if trace else "failed",
               "grad_evals": trace.grad_evals if trace else None}
        if err:
            row["error"] = err
        table.append(row)
        if trace is not None and trace.status == "converged":
            if best is None or trace.grad_evals < best[1].grad_evals:
                best = ((a, l), trace)
    entry = {"table": table}
    if best:
        entry["best"] = {"alpha": best[0][0], "lam_init": best[0][1], "grad_evals": best[1].grad_evals}
    return entry, (best[1] if best else None)


def run_experiment(cfg, out_dir, workers=1):
    """Run every configured solver, write traces, a summary and plot data into ``out_dir``.

    Returns the summary dictionary.
    """
    prob = build_problem(cfg)
    summary = {"problem": {"kind": cfg.kind, **prob.info}, "config": cfg.as_dict(),
               "runs": {}, "grid": {}}
    traces = {}
    grid_names = [s for s in cfg.solvers if cfg.grid and s in ("aniso_warmstart", "aniso_linesearch",
                                                                 "euclidean", "armijo")]
    plain = [s for s in cfg.solvers if s not in grid_names]
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        results = list(pool.map(lambda s: _safe_run(prob, s, _solver_config(cfg, prob, s)), plain))
    for name, (trace, err) in zip(plain, results):
        if err:
            summary["runs"][name] = {"solver": name, "status": "failed", "message": err}
        else:
            traces[name] = trace
    for name in grid_names:
        entry, trace = _grid_search(cfg, prob, name, max(1, workers))
        summary["grid"][name] = entry
        if trace is None:
            summary["runs"][name] = {"solver": name, "status": "failed",
                                     "message": "no grid configuration converged"}
        else:
            traces[name] = trace
    finals = [t.records[-1].F for t in traces.values() if t.records and math.isfinite(t.records[-1].F)]
    f_star = min(finals) if finals else math.nan
    summary["F_star_est"] = f_star
    summary["F_star_note"] = "minimum final objective over all runs (no extrapolation)"
    plot = io.StringIO()
    plot.write("solver,k,F_minus_Fstar\n")
    for name in cfg.solvers:
        if name not in traces:
            continue
        trace = traces[name]
        summary["runs"][name] = trace.summary()
        atomic_write(os.path.join(out_dir, "traces", f"{name}.csv"),
                     trace.to_csv(include_time=cfg.timing))
        for r in trace.records:
            plot.write(f"{name},{r.k},{r.F - f_star!r}\n")
    atomic_write(os.path.join(out_dir, "plot_data.csv"), plot.getvalue())
    atomic_write(os.path.join(out_dir, "summary.json"),
                 json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n")
    return summary


# ---------------------------------------------------------------------------
# check suites
# ---------------------------------------------------------------------------

@dataclass
class SuiteResult:
    name: str
    passed: bool
    worst: float
    tol: float
    detail: str = ""


def _suite_legendre(L_scale):
    worst = 0.0
    for phi in (Euclidean(np.linspace(0.5, 2.0, 5)), Exp(5), SymLogistic(5)):
        worst = max(worst, legendre_roundtrip_check(phi, 1000, 0))
    return SuiteResult("legendre", worst <= 1e-9, worst, 1e-9, "3 references x 1000 samples")


def _suite_bregman(L_scale):
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(1000):
        x, y = rng.uniform(0.05, 3.0, 4), rng.uniform(0.05, 3.0, 4)
        worst = max(worst, dual_identity_residual(Exp(4), x, y))
        x, y = rng.uniform(-0.95, 0.95, 4), rng.uniform(-0.95, 0.95, 4)
        worst = max(worst, dual_identity_residual(SymLogistic(4), x, y))
    return SuiteResult("bregman", worst <= 1e-9, worst, 1e-9, "1000 pairs per reference")


def _suite_moreau(L_scale):
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(500):
        n = int(rng.integers(1, 6))
        g = L1(n, float(rng.uniform(0.05, 0.95)))
        worst = max(worst, moreau_decomposition_residual(g, SymLogistic(n), float(rng.uniform(0.1, 5.0)),
                                                         rng.normal(0.0, 3.0, n)))
    return SuiteResult("moreau", worst <= 1e-8, worst, 1e-8, "500 l1/symlog instances")


def _suite_descent(L_scale):
    worst = -math.inf
    cases = []
    A, b = models.logistic_toy(100, 10, 0)
    cases.append(models.build_logistic(A, b))
    A, b = rank_one_logistic_toy()
    cases.append(models.build_logistic(A, b))
    rng = np.random.default_rng(0)
    cases.append(models.build_exp_lp(rng.uniform(0.0, 1.0, (6, 3)), rng.standard_normal(6),
                                     -rng.uniform(0.5, 1.0, 3), 1.0))
    for mdl in cases:
        for seed in range(2):
            rep = descent_inequality_sampler(mdl.f, mdl.phi, mdl.L * L_scale, 2000, seed, scale=3.0)
            worst = max(worst, rep.worst_violation)
    return SuiteResult("descent", worst <= 1e-8, worst, 1e-8,
                       f"logistic, rank-one logistic, exp-sum; L scaled by {L_scale!r}")


def _suite_sinkhorn(L_scale):
    worst = 0.0
    for seed in range(5):
        C, r, s = ot_instance(5, 5, seed)
        mdl = models.build_ot_dual(C, r, s, 0.1, "gauss_seidel")
        for (a, bb), (u, v) in zip(mdl.run_gauss_seidel(100), models.sinkhorn(C, r, s, 0.1, 100)):
            worst = max(worst, float(np.max(np.abs(a - 0.1 * np.log(u)))),
                        float(np.max(np.abs(bb - 0.1 * np.log(v)))))
    return SuiteResult("sinkhorn", worst <= 1e-8, worst, 1e-8, "5x5, sigma 0.1, seeds 0-4, 100 sweeps")


def sufficient_decrease_problems():
    """The four shipped problems as ``(label, f, g, phi, lam, x0)``."""
    out = []
    A, b = models.logistic_toy(100, 10, 0)
    for reg in (("l1", 0.01), ("sql2", 0.1)):
        mdl = models.build_logistic(A, b, reg)
        out.append((f"logistic+{reg[0]}", mdl.f, mdl.g, mdl.phi, 1.0 / mdl.L, np.zeros(10)))
    A, b, c, sigma = generate_exp_lp(30, 10, 0, 0.05)
    mdl = models.build_lifted_exp_lp(A, b, c, sigma)
    out.append(("exp_lp_lifted", mdl.f, mdl.g, mdl.phi, 1.0 / mdl.L, mdl.lift(np.zeros(10))))
    C, r, s = ot_instance(5, 5, 0)
    mdl = models.build_ot_dual(C, r, s, 0.1, "joint")
    out.append(("ot_joint", mdl.f, mdl.g, mdl.phi, mdl.lam, np.zeros(10)))
    return out


def sufficient_decrease_violation(trace, lam):
    """Worst ``(F_{k+1} - F_k + lam gap_k) / (1 + |F_k|)`` along a trace."""
    F, G = trace.F, trace.gaps
    if len(F) < 2:
        return -math.inf
    return float(np.max((F[1:] - F[:-1] + lam * G[:-1]) / (1.0 + np.abs(F[:-1]))))


def _suite_sufficient_decrease(L_scale):
    worst = -math.inf
    for label, f, g, phi, lam, x0 in sufficient_decrease_problems():
        trace = run_fixed(f, g, phi, SolverConfig(mode="fixed", lam=lam, max_iter=300, gap_tol=0.0), x0)
        if trace.status == "error":
            return SuiteResult("sufficient-decrease", False, math.inf, 1e-10, f"{label}: {trace.message}")
        worst = max(worst, sufficient_decrease_violation(trace, lam))
    return SuiteResult("sufficient-decrease", worst <= 1e-10, worst, 1e-10, "4 problems x 300 iterations")


SUITES = {
    "legendre": _suite_legendre,
    "bregman": _suite_bregman,
    "moreau": _suite_moreau,
    "descent": _suite_descent,
    "sinkhorn": _suite_sinkhorn,
    "sufficient-decrease": _suite_sufficient_decrease,
}


def check_suites(selector="all", L_scale=1.0, stream=None):
    """Run the selected suites and print a tab-separated table.

    ``selector`` is ``"all"`` or a comma list of suite names. ``L_scale``
    multiplies every declared constant in the descent suite (a mutation knob).
    Returns ``(all_passed, results)``.
    """
    stream = sys.stdout if stream is None else stream
    names = list(SUITES) if selector == "all" else [s.strip() for s in selector.split(",") if s.strip()]
    unknown = [s for s in names if s not in SUITES]
    if unknown or not names:
        raise ConfigurationError(f"unknown suite(s) {unknown}; available: {', '.join(SUITES)}")
    results = [SUITES[name](L_scale) for name in names]
    stream.write("suite\tstatus\tworst\ttol\tdetail\n")
    for r in results:
        stream.write(f"{r.name}\t{'pass' if r.passed else 'FAIL'}\t{r.worst:.3e}\t{r.tol:.0e}\t{r.detail}\n")
    return all(r.passed for r in results), results


def write_generated(kind, m, n, seed, path, sigma=0.001):
    """``gen`` subcommand backend: LIBSVM text for ``logistic``, ``.npz`` for ``exp_lp``."""
    if kind == "logistic":
        from .data import SparseDataset

        A, b = models.logistic_toy(m, n, seed)
        rows = [[(j + 1, float(v)) for j, v in enumerate(row) if v != 0.0] for row in A]
        ds = SparseDataset(rows, b.tolist(), b.tolist(), n)
        atomic_write(path, serialize_libsvm(ds))
    elif kind == "exp_lp":
        A, b, c, sigma = generate_exp_lp(m, n, seed, sigma)
        directory = os.path.dirname(os.path.abspath(path))
        os.makedirs(directory, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".npz")
        os.close(fd)
        np.savez(tmp, A=A, b=b, c=c, sigma=sigma)
        os.replace(tmp, path)
    else:
        raise ConfigurationError(f"cannot generate data of kind {kind!r}")
