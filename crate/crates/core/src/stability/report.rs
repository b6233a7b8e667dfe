use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::config::{ExperimentKind, Threshold};
use crate::error::Result;
use crate::stats::fit_line;

/// Metrics for one schedule entry (index `n`, `λ`, `ε`, or Picard step).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRow {
    pub index: f64,
    /// `‖σ_n−σ‖_{T,∞} + ‖b_n−b‖_{T,∞}`, `|λ−λ₀|` or `ε`.
    pub distance: f64,
    /// `sup_{t,x} E|Δ|^p` and its standard error at the maximizer.
    pub sup_moment: f64,
    pub sup_moment_se: f64,
    /// `E‖Δ‖^p_{γ,T,K}`.
    pub holder_moment: f64,
    pub holder_moment_se: f64,
    /// Largest `E|Δ(z)−Δ(z')|^p / |z−z'|^{pγ}` over neighbouring grid pairs.
    pub increment_moment: f64,
    /// `E‖Δ‖²_{T,∞}`.
    pub sup_norm_sq: f64,
    pub sup_norm_sq_se: f64,
    /// `P(‖Δ‖_{γ,T,K} > threshold)`, noise stability only.
    pub exceedance: Option<f64>,
    /// Replicas whose Picard iteration stopped at `max_iter`.
    pub non_converged: usize,
}

/// Least-squares slope of `ln error` against `ln distance`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub standard_error: f64,
    /// 95% Student-t interval.
    pub ci_low: f64,
    pub ci_high: f64,
    pub points: usize,
}

/// Fewest schedule points for which a slope is reported.
pub const MIN_FIT_POINTS: usize = 4;

impl SlopeFit {
    /// `None` with fewer than [`MIN_FIT_POINTS`] usable (positive) pairs.
    pub fn from_pairs(distance: &[f64], error: &[f64]) -> Option<Self> {
        let (xs, ys): (Vec<f64>, Vec<f64>) = distance
            .iter()
            .zip(error)
            .filter(|(d, e)| **d > 0.0 && **e > 0.0 && d.is_finite() && e.is_finite())
            .map(|(d, e)| (d.ln(), e.ln()))
            .unzip();
        if xs.len() < MIN_FIT_POINTS {
            return None;
        }
        let fit = fit_line(&xs, &ys);
        let t = StudentsT::new(0.0, 1.0, (xs.len() - 2) as f64)
            .map(|d| d.inverse_cdf(0.975))
            .unwrap_or(f64::NAN);
        Some(SlopeFit {
            slope: fit.slope,
            standard_error: fit.slope_se,
            ci_low: fit.slope - t * fit.slope_se,
            ci_high: fit.slope + t * fit.slope_se,
            points: xs.len(),
        })
    }
}

/// Picard diagnostics, one entry per iteration `n = 1, 2, ...`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PicardTable {
    /// `D_n = E‖u^n − u^{n−1}‖^p_{γ,T,K}`.
    pub d: Vec<f64>,
    /// `E_n = E‖u^n − u*‖^p_{γ,T,K}`.
    pub e: Vec<f64>,
    /// `S_n = sup_{t,x} E|u^n − u^{n−1}|^p`.
    pub s: Vec<f64>,
    /// `gronwall_factorial_bound(0, β, θ, D_1, n−1, T)` for `n ≥ 2`.
    pub profile: Vec<Option<f64>>,
    /// `max(beta_theory, β₂)`, `β₂` the smallest value covering `D_2`.
    pub beta: f64,
    /// Contraction constant of the pointwise moments, when every nonzero
    /// coefficient declares a Lipschitz constant.
    pub beta_theory: Option<f64>,
    pub theta: f64,
    /// `J(s) ≤ c_J s^{θ−1}` on `(0, T]`.
    pub c_j: f64,
    /// `D_n ≤ profile_n` for every `n ≥ 3`; `n = 2` holds by construction.
    pub below_profile: bool,
    pub monotone_from_2: bool,
    pub ratio_6_1: Option<f64>,
    /// `D_n → 0 ⇒ E_n → 0` on the computed iterates.
    pub implication_holds: bool,
}

impl PicardTable {
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "n,d_n,e_n,s_n,profile")?;
        for i in 0..self.d.len() {
            let profile = self.profile[i].map_or(String::new(), |p| format!("{p:e}"));
            writeln!(w, "{},{:e},{:e},{:e},{profile}", i + 1, self.d[i], self.e[i], self.s[i])?;
        }
        Ok(())
    }
}

/// The convolution-Gronwall chain for coefficient stability:
/// `sup_x E|u_n−u|^p(t) ≤ Σ_k G^k h` with `h = c‖σ_n−σ‖^p ν(t)^{p/2}` and
/// `g = c·c_J s^{θ−1}`, `c` fitted on the coarsest index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaChain {
    pub c: f64,
    pub fitted_index: f64,
    /// Largest measured/bound ratio over the remaining indices.
    pub worst_ratio: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub kind: ExperimentKind,
    pub p: f64,
    pub gamma: (f64, f64),
    pub replicas: usize,
    pub master_seed: u64,
    pub rows: Vec<StabilityRow>,
    pub fit: Option<SlopeFit>,
    /// Errors nondecreasing in the distance, up to two standard errors.
    pub monotone: Option<bool>,
    pub picard: Option<PicardTable>,
    pub lemma_chain: Option<LemmaChain>,
    /// Threshold actually used by noise stability.
    pub threshold: Option<f64>,
    pub threshold_rule: Option<Threshold>,
    pub notes: Vec<String>,
}

impl StabilityReport {
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(
            w,
            "index,distance,sup_moment,sup_moment_se,holder_moment,holder_moment_se,increment_moment,sup_norm_sq,sup_norm_sq_se,exceedance,non_converged"
        )?;
        for r in &self.rows {
            let exc = r.exceedance.map_or(String::new(), |e| format!("{e:e}"));
            writeln!(
                w,
                "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{exc},{}",
                r.index,
                r.distance,
                r.sup_moment,
                r.sup_moment_se,
                r.holder_moment,
                r.holder_moment_se,
                r.increment_moment,
                r.sup_norm_sq,
                r.sup_norm_sq_se,
                r.non_converged
            )?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| crate::error::Error::Format(e.to_string()))
    }
}

/// Errors nondecreasing in distance: for consecutive distinct distances,
/// `e_{i+1} ≥ e_i − 2·√(se_i² + se_{i+1}²)`.
pub(crate) fn monotone_in_distance(points: &[(f64, f64, f64)]) -> bool {
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    sorted.windows(2).all(|w| {
        let (d0, e0, s0) = w[0];
        let (d1, e1, s1) = w[1];
        d0 == d1 || e1 >= e0 - 2.0 * (s0 * s0 + s1 * s1).sqrt()
    })
}
