"""Adaptive dual-free coordinate ascent for l2-regularized ERM."""

from .data import (
    Dataset,
    LibsvmParseError,
    load_dataset,
    make_dataset,
    parse_libsvm,
    scale_features,
    synthetic_dataset,
    to_libsvm,
)
from .losses import BoundLoss, LossModel, make_loss
from .probability import (
    CaseParams,
    EsoParams,
    ResidueVector,
    ZeroResidueError,
    case_params,
    compute_residues,
    contraction_certificate,
    eso_v,
    optimal_probabilities,
    theta_lower_bound,
    theta_of,
)
from .samplers import (
    AliasTable,
    CdfSampler,
    SamplingPlan,
    TreeSampler,
    marginals_of,
    plan_build,
    plan_draw,
    plan_draw_many,
)
from .solver import (
    GapReport,
    Reference,
    SolverConfig,
    SolverResult,
    SolverState,
    TraceRecord,
    VarianceReport,
    cap_marginals,
    compute_gap,
    primal_gradient,
    primal_value,
    residue_gradient,
    run,
    run_adfsdca,
    run_adfsdca_plus,
    run_dfsdca_uniform,
    run_minibatch,
    run_reference,
    step_serial,
    trace_to_csv,
    variance_check,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
