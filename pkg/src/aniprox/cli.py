"""Command-line entry point: ``aniprox {solve,compare,bench,check,gen}``."""

import argparse
import json
import sys

from .errors import AniproxError
from .experiments import SUITES, ExperimentConfig, check_suites, load_config, run_experiment, write_generated

CONFIG_HELP = """\
configuration file (INI). Sections and keys:
  [problem]  kind=logistic|exp_lp|ot, m, n, seed, reg=l1|sql2|none, nu, sigma, eps, data
  [solvers]  names=aniso_fixed,aniso_linesearch,aniso_warmstart,euclidean,armijo,
             reference, lam, lam_max, lam_init, alpha, lam_min, tau, max_iter, gap_tol
  [grid]     enabled, alphas, lam_inits
  [output]   timing
"""


def _load(args):
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            cfg = load_config(fh.read())
    else:
        cfg = ExperimentConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def build_parser():
    parser = argparse.ArgumentParser(
        prog="aniprox",
        description="Anisotropic proximal gradient solvers and experiment harness.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=CONFIG_HELP,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def run_args(p):
        p.add_argument("--config", metavar="PATH", help="INI configuration file (see aniprox -h)")
        p.add_argument("--out", metavar="DIR", default="out", help="output directory (default: out)")
        p.add_argument("--seed", type=int, help="override the problem seed")
        p.add_argument("--workers", type=int, default=1, help="concurrent runs (default: 1)")

    p = sub.add_parser("solve", help="run a single solver (first name, or --solver)")
    run_args(p)
    p.add_argument("--solver", help="solver name to run")
    p = sub.add_parser("compare", help="run all configured solvers and write plot data")
    run_args(p)
    p = sub.add_parser("bench", help="grid search over alpha and lam_init, then compare")
    run_args(p)
    p = sub.add_parser("check", help="run invariant suites; nonzero exit on failure")
    p.add_argument("--suite", default="all",
                   help=f"'all' or a comma list of: {', '.join(SUITES)}")
    p.add_argument("--l-scale", type=float, default=1.0,
                   help="multiply declared constants in the descent suite (mutation check)")
    p = sub.add_parser("gen", help="generate a synthetic data file")
    p.add_argument("--kind", choices=("logistic", "exp_lp"), default="logistic")
    p.add_argument("--m", type=int, default=100)
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sigma", type=float, default=0.001)
    p.add_argument("--out", metavar="PATH", required=True, help="output file")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "check":
            ok, _ = check_suites(args.suite, args.l_scale)
            return 0 if ok else 1
        if args.command == "gen":
            write_generated(args.kind, args.m, args.n, args.seed, args.out, args.sigma)
            return 0
        cfg = _load(args)
        if args.command == "solve":
            cfg.solvers = (args.solver or cfg.solvers[0],)
            cfg.grid = False
        elif args.command == "compare":
            cfg.grid = False
        else:
            cfg.grid = True
        cfg.__post_init__()
        summary = run_experiment(cfg, args.out, args.workers)
    except (AniproxError, OSError) as exc:
        print(f"aniprox: error: {exc}", file=sys.stderr)
        return 2
    for name, run in summary["runs"].items():
        print(f"{name}\t{run['status']}\tgrad_evals={run.get('grad_evals')}\tF={run.get('final_F')}")
    if summary["grid"]:
        print(json.dumps({k: v.get("best") for k, v in summary["grid"].items()}, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
