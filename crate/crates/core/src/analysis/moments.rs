use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::MIN_REPLICAS;
use crate::solver::SolutionField;
use crate::stats::mean_se;

/// Monte Carlo `E|u(t,x)|^p` over an ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub p: f64,
    pub replicas: usize,
    /// Row-major in (time, point), like the fields.
    pub values: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub sup: f64,
    pub sup_se: f64,
    /// (time row, flat point) where the supremum sits.
    pub sup_at: (usize, usize),
}

impl MomentEstimate {
    pub fn at(&self, row: usize, point: usize, points_per_row: usize) -> (f64, f64) {
        let i = row * points_per_row + point;
        (self.values[i], self.standard_errors[i])
    }
}

/// Checks that the fields describe one experiment: same grid, same kernel,
/// measure and coefficients, differing only in noise seed.
pub fn check_ensemble(fields: &[SolutionField]) -> Result<()> {
    let first = fields.first().ok_or_else(|| Error::invalid("empty ensemble"))?;
    for (r, f) in fields.iter().enumerate().skip(1) {
        if f.grid != first.grid || !f.provenance.same_experiment(&first.provenance) {
            return Err(Error::MixedProvenance(format!(
                "replica {r} ({} / sigma '{}', b '{}') differs from replica 0 ({} / sigma '{}', b '{}')",
                f.provenance.measure,
                f.provenance.sigma,
                f.provenance.b,
                first.provenance.measure,
                first.provenance.sigma,
                first.provenance.b
            )));
        }
    }
    Ok(())
}

/// Pointwise `E|u|^p` with standard errors and its grid supremum.
pub fn lp_moment(fields: &[SolutionField], p: f64) -> Result<MomentEstimate> {
    if !(p >= 2.0) || !p.is_finite() {
        return Err(Error::invalid(format!("moment order must be at least 2, got {p}")));
    }
    if fields.len() < MIN_REPLICAS {
        return Err(Error::invalid(format!(
            "need at least {MIN_REPLICAS} replicas for a moment estimate, got {}",
            fields.len()
        )));
    }
    check_ensemble(fields)?;
    let len = fields[0].values().len();
    let (values, standard_errors): (Vec<f64>, Vec<f64>) = (0..len)
        .into_par_iter()
        .map(|i| {
            let xs: Vec<f64> = fields.iter().map(|f| f.values()[i].abs().powf(p)).collect();
            let (m, se) = mean_se(&xs);
            (m, se)
        })
        .unzip();
    let (best, _) = values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) });
    let m = fields[0].grid.spatial_len();
    Ok(MomentEstimate {
        p,
        replicas: fields.len(),
        sup: values[best],
        sup_se: standard_errors[best],
        sup_at: (best / m, best % m),
        values,
        standard_errors,
    })
}
