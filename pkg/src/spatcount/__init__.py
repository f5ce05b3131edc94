"""Bayesian density estimation for unmarked or partially marked
populations observed as spatially referenced trap counts."""

__version__ = "0.1.0"

from .model import (
    AugmentedState,
    ConfigError,
    CountData,
    DataError,
    GammaPrior,
    MarkedObservations,
    ModelParams,
    PriorSpec,
    StateSpace,
    TrapArray,
    UniformPrior,
    conditional_loglik,
    distance_matrix,
    kernel,
    marginal_loglik,
    poisson_logpmf,
    state_space_from_traps,
    trap_intensity,
)
from .simulate import (
    Scenario,
    SimulatedTruth,
    preset,
    preset_names,
    preset_scenarios,
    simulate_counts_given_centers,
    simulate_dataset,
)
from .mcmc import ChainOutput, McmcConfig, initialize, run_chain, run_chains
from .posterior import (
    CalibrationReport,
    DensityRaster,
    ParameterSummary,
    PosteriorSummary,
    calibrate,
    density_surface,
    rhat,
    summarize,
)
from .oracle import (
    BudgetError,
    GewekeReport,
    GridPosterior,
    allocation_marginal_check,
    brute_force_N_posterior,
    geweke_style_joint_check,
)

__all__ = [
    "AugmentedState",
    "BudgetError",
    "CalibrationReport",
    "ChainOutput",
    "ConfigError",
    "CountData",
    "DataError",
    "DensityRaster",
    "GammaPrior",
    "GewekeReport",
    "GridPosterior",
    "MarkedObservations",
    "McmcConfig",
    "ModelParams",
    "ParameterSummary",
    "PosteriorSummary",
    "PriorSpec",
    "Scenario",
    "SimulatedTruth",
    "StateSpace",
    "TrapArray",
    "UniformPrior",
    "allocation_marginal_check",
    "brute_force_N_posterior",
    "calibrate",
    "conditional_loglik",
    "density_surface",
    "distance_matrix",
    "geweke_style_joint_check",
    "initialize",
    "kernel",
    "marginal_loglik",
    "poisson_logpmf",
    "preset",
    "preset_names",
    "preset_scenarios",
    "rhat",
    "run_chain",
    "run_chains",
    "simulate_counts_given_centers",
    "simulate_dataset",
    "state_space_from_traps",
    "summarize",
    "trap_intensity",
    "__version__",
]
