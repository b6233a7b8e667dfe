//! Stability and Picard-convergence experiments on coupled ensembles, and
//! the coefficient mollifier.

mod config;
mod mollify;
mod report;
mod runners;

pub use config::{
    shifted_schedule, CoefficientPerturbation, Experiment, ExperimentConfig, ExperimentKind, ParameterFamily, Threshold,
};
pub use mollify::mollify_coefficient;
pub use report::{LemmaChain, PicardTable, SlopeFit, StabilityReport, StabilityRow, MIN_FIT_POINTS};
pub use runners::{
    fit_j_power, run_coefficient_stability, run_experiment, run_noise_stability, run_parameter_continuity,
    run_picard_convergence,
};
