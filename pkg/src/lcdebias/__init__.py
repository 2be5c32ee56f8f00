"""Bias-reduced estimation of smooth functionals in log-concave location families."""

from .biasreduce import (
    BootstrapDebiasedEstimator,
    FkEstimate,
    estimate_bk,
    estimate_fk,
    estimate_fk_at,
    run_chains,
    simulate_chain,
)
from .config import RunConfig, parse_config
from .diagnostics import (
    ExperimentConfig,
    RiskReport,
    concentration_diagnostic,
    mean_based_estimator,
    normality_diagnostic,
    run_risk_experiment,
)
from .functionals import FunctionalSpec, builtin_functional, functional_from_spec, holder_order_k
from .lowerbound import (
    BoundReport,
    Prior1D,
    bump_prior,
    cos3_prior,
    global_minimax_rate,
    local_minimax_bound,
    prior_fisher_info,
    van_trees_functional,
    van_trees_theta,
)
from .mle import LocationMLE, MleResult, fit_mle
from .model import (
    GaussianPotential,
    Potential,
    ProductPotential,
    RadialSmoothPotential,
    check_potential,
    family_from_spec,
    fisher_information,
    kl_divergence_mc,
    sigma_f,
)
from .sampler import make_sampler, sample_data, sample_noise

__version__ = "0.1.0"

__all__ = [
    "BootstrapDebiasedEstimator", "BoundReport", "ExperimentConfig", "FkEstimate", "FunctionalSpec",
    "GaussianPotential", "LocationMLE", "MleResult", "Potential", "Prior1D", "ProductPotential",
    "RadialSmoothPotential", "RiskReport", "RunConfig", "builtin_functional", "bump_prior", "check_potential",
    "concentration_diagnostic", "cos3_prior", "estimate_bk", "estimate_fk", "estimate_fk_at", "family_from_spec",
    "fisher_information", "fit_mle", "functional_from_spec", "global_minimax_rate", "holder_order_k",
    "kl_divergence_mc", "local_minimax_bound", "make_sampler", "mean_based_estimator", "normality_diagnostic",
    "parse_config", "prior_fisher_info", "run_chains", "run_risk_experiment", "sample_data", "sample_noise",
    "sigma_f", "simulate_chain", "van_trees_functional", "van_trees_theta",
]
