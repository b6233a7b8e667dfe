use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{NoiseField, SpectralMeasure};
use crate::error::{Error, Result};
use crate::radial::{radial_integral, RadialIntegrand};
use crate::special::radial_cos_average;
use crate::stats::mean_se;

/// `φ(t, x) = amplitude · 1{t ∈ window} · N(x; center, width² I)`: a unit-mass
/// Gaussian bump held constant on a time window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub center: Vec<f64>,
    pub width: f64,
    pub amplitude: f64,
    pub window: (f64, f64),
}

impl TestFunction {
    pub fn gaussian(center: Vec<f64>, width: f64, window: (f64, f64)) -> Self {
        Self {
            center,
            width,
            amplitude: 1.0,
            window,
        }
    }

    fn validate(&self, d: usize) -> Result<()> {
        if self.center.len() != d {
            return Err(Error::invalid(format!(
                "test function center has {} coordinates, expected {d}",
                self.center.len()
            )));
        }
        if !(self.width > 0.0) || !(self.window.1 >= self.window.0) {
            return Err(Error::invalid("test function needs width > 0 and an ordered time window"));
        }
        Ok(())
    }

    /// Spatial profile at `x`, using the nearest periodic image of the center
    /// in a box of side `length` (`None` for the whole space).
    pub fn spatial(&self, x: &[f64], length: Option<f64>) -> f64 {
        let d = self.center.len();
        let mut r2 = 0.0;
        for (xi, ci) in x.iter().zip(&self.center) {
            let mut dx = xi - ci;
            if let Some(l) = length {
                dx -= l * (dx / l).round();
            }
            r2 += dx * dx;
        }
        let w2 = self.width * self.width;
        self.amplitude * (2.0 * PI * w2).powf(-(d as f64) / 2.0) * (-r2 / (2.0 * w2)).exp()
    }

    /// Length of `[a, b] ∩ window`.
    pub fn time_overlap(&self, a: f64, b: f64) -> f64 {
        (b.min(self.window.1) - a.max(self.window.0)).max(0.0)
    }
}

/// `J(φ, ψ) = ∫_0^T ds ∫ μ(dξ) Fφ(s)(ξ) conj(Fψ(s)(ξ))` for Gaussian bumps.
pub fn covariance_functional(
    mu: &SpectralMeasure,
    phi: &TestFunction,
    psi: &TestFunction,
    horizon: f64,
) -> Result<f64> {
    let d = mu.dimension;
    phi.validate(d)?;
    psi.validate(d)?;
    let lo = phi.window.0.max(psi.window.0).max(0.0);
    let hi = phi.window.1.min(psi.window.1).min(horizon);
    let time = (hi - lo).max(0.0) * phi.amplitude * psi.amplitude;
    if time == 0.0 {
        return Ok(0.0);
    }
    // Fφ(ξ) conj(Fψ(ξ)) = e^{-(w₁²+w₂²)|ξ|²/2} e^{-i⟨ξ, c₁−c₂⟩}; the
    // angular average of the phase is radial_cos_average(|ξ||c₁−c₂|).
    let s = phi.width.powi(2) + psi.width.powi(2);
    let sep = phi
        .center
        .iter()
        .zip(&psi.center)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let value = |r: f64| (-s * r * r / 2.0).exp() * radial_cos_average(d, r * sep);
    let envelope = |r: f64| (-s * r * r / 2.0).exp();
    let spatial = radial_integral(
        mu,
        &RadialIntegrand {
            value: &value,
            envelope: &envelope,
            oscillations: &[],
            scale: 8.0 / s.sqrt(),
            fast: None,
        },
    )?;
    Ok(time * spatial)
}

/// Grid pairing `M(φ) = Σ_i Σ_j φ̄_i(x_j) W_i(x_j) Δx^d`, with `φ̄_i` the
/// time average of φ over step i.
pub fn pair(noise: &NoiseField, phi: &TestFunction) -> Result<f64> {
    let g = &noise.grid;
    phi.validate(g.dimension)?;
    let m = g.spatial_len();
    let profile: Vec<f64> = (0..m)
        .map(|j| phi.spatial(&g.point(j), Some(g.length)) * g.cell_volume())
        .collect();
    let dt = g.dt();
    let mut total = 0.0;
    for i in 0..g.time_steps {
        let w = phi.time_overlap(g.time(i), g.time(i + 1)) / dt;
        if w == 0.0 {
            continue;
        }
        let row = noise.physical_step(i);
        total += w * row.iter().zip(&profile).map(|(a, b)| a * b).sum::<f64>();
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceEstimate {
    pub estimate: f64,
    pub standard_error: f64,
    pub replicas: usize,
}

pub const MIN_REPLICAS: usize = 100;

/// Monte Carlo estimate of `E[M(φ) M(ψ)]` over independent noise replicas.
pub fn empirical_covariance(fields: &[NoiseField], phi: &TestFunction, psi: &TestFunction) -> Result<CovarianceEstimate> {
    if fields.len() < MIN_REPLICAS {
        return Err(Error::invalid(format!(
            "empirical covariance needs at least {MIN_REPLICAS} replicas, got {}",
            fields.len()
        )));
    }
    for f in &fields[1..] {
        fields[0].check_compatible(f)?;
    }
    use rayon::prelude::*;
    let products: Vec<f64> = fields
        .par_iter()
        .map(|f| Ok(pair(f, phi)? * pair(f, psi)?))
        .collect::<Result<_>>()?;
    let (estimate, standard_error) = mean_se(&products);
    Ok(CovarianceEstimate {
        estimate,
        standard_error,
        replicas: fields.len(),
    })
}
