"""Anisotropic (dual-space preconditioned) proximal gradient methods."""

from .calculus import combine_constants, descent_inequality_sampler, strong_convexity_dual_check
from .divergences import BregmanValue, bregman_dual, bregman_primal, dual_identity_residual
from .errors import (
    AniproxError,
    CalculusError,
    ConfigurationError,
    ConstraintQualificationError,
    DomainError,
    LinesearchError,
    NumericError,
    ParseError,
    ProxBoundednessError,
)
from .models import (
    build_exp_lp,
    build_lifted_exp_lp,
    build_logistic,
    build_ot_dual,
    gradient_check,
    logistic_toy,
    parallel_update_step,
    sinkhorn,
)
from .prox import L1, Consensus, Linear, SeparableCustom, SquaredL2, Zero, backward_step
from .reference import Euclidean, Exp, Product, SymLogistic, TiltScaled, make_reference
from .solver import (
    SmoothObjective,
    SolverConfig,
    fbe,
    forward_step,
    gap,
    rate_monitor,
    run_armijo_gd,
    run_euclidean_baseline,
    run_fixed,
    run_linesearch,
)

__version__ = "0.1.0"
