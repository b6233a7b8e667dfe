//! Norms, moments, Hölder exponents and the Gronwall-type inequalities as
//! executable calculators.

mod gronwall;
mod holder;
mod moments;

pub use gronwall::{
    gronwall_factorial_bound, gronwall_iterates, gronwall_series_bound, verify_gronwall_instance,
    weighted_power_mean_check, GronwallCheck, GronwallFailure, GronwallKernel, GronwallParams, GronwallReport,
    PowerMeanCheck, SeriesBound, GRONWALL_TOLERANCE,
};
pub use holder::{
    estimate_holder_exponents, holder_norm, Direction, HolderEstimate, HolderNorm, IncrementRow, SpatialBox, MIN_DYADIC_LAGS,
};
pub use moments::{check_ensemble, lp_moment, MomentEstimate};
