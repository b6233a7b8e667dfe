use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::special::gamma;

pub type RadialFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A user-supplied radial spectral density `r ↦ g(r)`, kept with the
/// source text it was built from.
#[derive(Clone)]
pub struct RadialDensity {
    pub source: String,
    pub density: RadialFn,
}

impl RadialDensity {
    pub fn new(source: impl Into<String>, density: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            source: source.into(),
            density: Arc::new(density),
        }
    }
}

impl fmt::Debug for RadialDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RadialDensity({})", self.source)
    }
}

#[derive(Debug, Clone)]
pub enum SpectralModel {
    /// Γ = δ₀.
    White,
    /// Γ(dx) = |x|^{-β} dx.
    Riesz { beta: f64 },
    /// Spectral density ∝ (1 + |ξ|²)^{-α/2}.
    Bessel { alpha: f64 },
    CustomRadial(RadialDensity),
}

/// Spectral measure μ of the spatial covariance, given by a radial density
/// with respect to Lebesgue measure on ℝ^d.
///
/// Densities carry the `(2π)^{-d}` factor of the transform convention
/// `Fφ(ξ) = ∫ e^{-i⟨ξ,x⟩} φ(x) dx`, so that white noise has density
/// `(2π)^{-d}`.
#[derive(Debug, Clone)]
pub struct SpectralMeasure {
    pub model: SpectralModel,
    pub dimension: usize,
}

impl SpectralMeasure {
    pub fn new(model: SpectralModel, dimension: usize) -> Result<Self> {
        let m = Self { model, dimension };
        m.validate()?;
        Ok(m)
    }

    pub fn white(dimension: usize) -> Self {
        Self {
            model: SpectralModel::White,
            dimension,
        }
    }

    pub fn riesz(dimension: usize, beta: f64) -> Result<Self> {
        Self::new(SpectralModel::Riesz { beta }, dimension)
    }

    pub fn bessel(dimension: usize, alpha: f64) -> Result<Self> {
        Self::new(SpectralModel::Bessel { alpha }, dimension)
    }

    pub fn custom(dimension: usize, density: RadialDensity) -> Result<Self> {
        Self::new(SpectralModel::CustomRadial(density), dimension)
    }

    /// The zero measure (no noise).
    pub fn zero(dimension: usize) -> Self {
        Self {
            model: SpectralModel::CustomRadial(RadialDensity::new("0", |_| 0.0)),
            dimension,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dimension;
        if !(1..=3).contains(&d) {
            return Err(Error::invalid(format!("measure dimension {d} unsupported")));
        }
        match &self.model {
            SpectralModel::Riesz { beta } => {
                if !(*beta > 0.0 && *beta < d as f64) {
                    return Err(Error::invalid(format!(
                        "Riesz exponent must satisfy 0 < beta < d (beta = {beta}, d = {d})"
                    )));
                }
            }
            SpectralModel::Bessel { alpha } => {
                if !(alpha.is_finite() && *alpha > 0.0) {
                    return Err(Error::invalid(format!(
                        "Bessel exponent must be positive (alpha = {alpha})"
                    )));
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn tag(&self) -> &'static str {
        match self.model {
            SpectralModel::White => "white",
            SpectralModel::Riesz { .. } => "riesz",
            SpectralModel::Bessel { .. } => "bessel",
            SpectralModel::CustomRadial(_) => "custom",
        }
    }

    pub fn describe(&self) -> String {
        match &self.model {
            SpectralModel::White => format!("white(d={})", self.dimension),
            SpectralModel::Riesz { beta } => format!("riesz(d={}, beta={beta})", self.dimension),
            SpectralModel::Bessel { alpha } => format!("bessel(d={}, alpha={alpha})", self.dimension),
            SpectralModel::CustomRadial(c) => format!("custom(d={}, {})", self.dimension, c.source),
        }
    }

    /// Radial density g(|ξ|).
    pub fn density(&self, r: f64) -> f64 {
        let d = self.dimension as f64;
        let norm = (2.0 * PI).powf(-d);
        match &self.model {
            SpectralModel::White => norm,
            SpectralModel::Riesz { beta } => norm * riesz_constant(self.dimension, *beta) * r.powf(beta - d),
            SpectralModel::Bessel { alpha } => norm * (1.0 + r * r).powf(-alpha / 2.0),
            SpectralModel::CustomRadial(c) => (c.density)(r),
        }
    }

    /// Density used for a retained grid mode; the zero mode of a Riesz
    /// measure gets weight 0.
    pub fn mode_density(&self, r: f64) -> f64 {
        if r == 0.0 {
            if let SpectralModel::Riesz { .. } = self.model {
                return 0.0;
            }
        }
        self.density(r)
    }

    /// True when the zero mode was assigned weight 0 instead of the density.
    pub fn zero_mode_suppressed(&self) -> bool {
        matches!(self.model, SpectralModel::Riesz { .. })
    }

    /// Exponent `a` with `g(r) ~ r^a` as r → ∞, when known in closed form.
    pub fn tail_exponent(&self) -> Option<f64> {
        let d = self.dimension as f64;
        match &self.model {
            SpectralModel::White => Some(0.0),
            SpectralModel::Riesz { beta } => Some(beta - d),
            SpectralModel::Bessel { alpha } => Some(-alpha),
            SpectralModel::CustomRadial(_) => None,
        }
    }

    pub fn is_custom(&self) -> bool {
        matches!(self.model, SpectralModel::CustomRadial(_))
    }

    /// Numeric parameter stored in binary headers (β, α, or 0).
    pub fn parameter(&self) -> f64 {
        match &self.model {
            SpectralModel::Riesz { beta } => *beta,
            SpectralModel::Bessel { alpha } => *alpha,
            _ => 0.0,
        }
    }

    pub fn custom_source(&self) -> Option<&str> {
        match &self.model {
            SpectralModel::CustomRadial(c) => Some(&c.source),
            _ => None,
        }
    }
}

/// Constant `c` in `F(|x|^{-β})(ξ) = c |ξ|^{β-d}`.
pub fn riesz_constant(d: usize, beta: f64) -> f64 {
    let d = d as f64;
    PI.powf(d / 2.0) * 2f64.powf(d - beta) * gamma((d - beta) / 2.0) / gamma(beta / 2.0)
}
