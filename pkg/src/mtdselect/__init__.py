"""Sparse lag selection and estimation for high-order MTD Markov models."""

from .model import (
    Alphabet,
    BINARY,
    LagSet,
    MtdModel,
    ModelDiagnostics,
    SymbolSequence,
    diagnostics,
    load_model,
    model_from_dict,
    model_to_dict,
    save_model,
    simulate,
    transition_prob,
    validate_model,
)
from .counting import (
    ContextCounts,
    count_contexts,
    count_joint,
    empirical_marginal,
    empirical_transition,
    load_sequence,
)
from .thresholds import ThresholdParams, noise_levels, pair_threshold, psi, s_n, v_hat
from .selection import (
    NuStatistics,
    SelectionTrace,
    algorithm2_select,
    cut_step,
    fs_only_select,
    fs_step,
    fsc_select,
    nu_hat,
    nu_hat_all,
    pcp_select,
)
from .estimation import EstimatedKernel, estimate_kernel, marginal_estimate
from .oracle import (
    ExactLaw,
    OracleReport,
    ell_xi_star,
    exact_cov_abs,
    exact_law,
    exact_nu_bar,
    kl_bound_check,
    lemma_residual,
    oracle_report,
    verify_structure,
    verify_weak_dependence,
)
from .experiments import (
    ExperimentConfig,
    coverage_check,
    experiment1_model,
    experiment2_model,
    grid_search_c,
    iid_model,
    random_model,
    run_experiment,
)

__version__ = "0.1.0"
