//! Spectral measures and synthesis of Gaussian noise that is white in time
//! and spatially correlated.

mod field;
mod functional;
mod measure;

pub use field::{mode_variances, perturb_noise, sample_noise, NoiseField};
pub use functional::{
    covariance_functional, empirical_covariance, pair, CovarianceEstimate, TestFunction, MIN_REPLICAS,
};
pub use measure::{riesz_constant, RadialDensity, RadialFn, SpectralMeasure, SpectralModel};
pub use crate::io::Coupling;
