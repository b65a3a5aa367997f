"""Probabilistic model families: scenarios, generators, densities."""

from .conjugate import AnalyticPosterior, analytic_posterior_nig
from .distributions import (
    Bernoulli,
    Categorical,
    Dirichlet,
    Gamma,
    InverseGamma,
    Laplace,
    Normal,
)
from .generators import (
    sample_covariates,
    sample_dataset,
    sample_fa_dataset,
    sample_glm_dataset,
    sample_gmm_dataset,
)
from .logjoint import log_joint, make_gaussian_linreg_logjoint, make_log_joint
from .scenarios import (
    SCENARIOS,
    ContextDataset,
    CovariateSource,
    FaPriors,
    LatentLayout,
    LatentVector,
    LayoutEntry,
    PriorSpec,
    ScenarioConfig,
    get_scenario,
    list_scenarios,
)

__all__ = [
    "AnalyticPosterior",
    "analytic_posterior_nig",
    "Bernoulli",
    "Categorical",
    "Dirichlet",
    "Gamma",
    "InverseGamma",
    "Laplace",
    "Normal",
    "sample_covariates",
    "sample_dataset",
    "sample_fa_dataset",
    "sample_glm_dataset",
    "sample_gmm_dataset",
    "log_joint",
    "make_gaussian_linreg_logjoint",
    "make_log_joint",
    "SCENARIOS",
    "ContextDataset",
    "CovariateSource",
    "FaPriors",
    "LatentLayout",
    "LatentVector",
    "LayoutEntry",
    "PriorSpec",
    "ScenarioConfig",
    "get_scenario",
    "list_scenarios",
]
