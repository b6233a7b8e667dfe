use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::expr::{Expression, Point};
use crate::grid::Grid;

pub type CoefficientClosure = Arc<dyn Fn(f64, &[f64], f64) -> f64 + Send + Sync>;

/// A scalar coefficient `f(t, x, u)` with optional declared constants.
#[derive(Clone)]
pub struct CoefficientFn {
    pub label: String,
    pub f: CoefficientClosure,
    pub declared_lipschitz: Option<f64>,
    pub declared_bound: Option<f64>,
}

impl fmt::Debug for CoefficientFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientFn")
            .field("label", &self.label)
            .field("declared_lipschitz", &self.declared_lipschitz)
            .field("declared_bound", &self.declared_bound)
            .finish()
    }
}

/// Number of random triples used by [`CoefficientFn::spot_check`].
pub const SPOT_CHECK_SAMPLES: usize = 10_000;

impl CoefficientFn {
    pub fn new(label: impl Into<String>, f: impl Fn(f64, &[f64], f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            label: label.into(),
            f: Arc::new(f),
            declared_lipschitz: None,
            declared_bound: None,
        }
    }

    pub fn constant(c: f64) -> Self {
        Self {
            declared_lipschitz: Some(0.0),
            declared_bound: Some(c.abs()),
            ..Self::new(format!("{c:?}"), move |_, _, _| c)
        }
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    /// Wraps a parsed expression, carrying over its derived constants.
    pub fn from_expression(e: Expression) -> Self {
        let (lip, bound) = (e.derived.lipschitz, e.derived.bound);
        let label = e.source.clone();
        Self {
            declared_lipschitz: lip,
            declared_bound: bound,
            ..Self::new(label, move |t, x, u| e.eval(&Point { t, x, u, r: 0.0 }))
        }
    }

    pub fn with_lipschitz(mut self, l: f64) -> Self {
        self.declared_lipschitz = Some(l);
        self
    }

    pub fn with_bound(mut self, b: f64) -> Self {
        self.declared_bound = Some(b);
        self
    }

    #[inline]
    pub fn eval(&self, t: f64, x: &[f64], u: f64) -> f64 {
        (self.f)(t, x, u)
    }

    /// Checks the declared constants on random `(t, x, r, v)` with `t` in
    /// `[0, T]`, `x` in the box and `r, v` in `[-u_range, u_range]`.
    pub fn spot_check(&self, grid: &Grid, u_range: f64, seed: u64) -> Result<()> {
        if self.declared_lipschitz.is_none() && self.declared_bound.is_none() {
            return Ok(());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = vec![0.0; grid.dimension];
        for _ in 0..SPOT_CHECK_SAMPLES {
            let t = rng.random::<f64>() * grid.horizon;
            for xi in x.iter_mut() {
                *xi = rng.random::<f64>() * grid.length;
            }
            let r = (2.0 * rng.random::<f64>() - 1.0) * u_range;
            let v = (2.0 * rng.random::<f64>() - 1.0) * u_range;
            let (fr, fv) = (self.eval(t, &x, r), self.eval(t, &x, v));
            if let Some(l) = self.declared_lipschitz {
                if (fr - fv).abs() > l * (r - v).abs() * (1.0 + 1e-12) + 1e-14 {
                    return Err(Error::invalid(format!(
                        "coefficient '{}' violates declared Lipschitz constant {l} at t={t}, x={x:?}, r={r}, v={v}",
                        self.label
                    )));
                }
            }
            if let Some(b) = self.declared_bound {
                if fr.abs() > b * (1.0 + 1e-12) + 1e-14 {
                    return Err(Error::invalid(format!(
                        "coefficient '{}' exceeds declared bound {b} at t={t}, x={x:?}, u={r}",
                        self.label
                    )));
                }
            }
        }
        Ok(())
    }
}

/// The pair (σ, b).
#[derive(Debug, Clone)]
pub struct Coefficients {
    pub sigma: CoefficientFn,
    pub b: CoefficientFn,
}

impl Coefficients {
    pub fn new(sigma: CoefficientFn, b: CoefficientFn) -> Self {
        Self { sigma, b }
    }

    pub fn zero() -> Self {
        Self::new(CoefficientFn::zero(), CoefficientFn::zero())
    }

    /// Additive noise `σ ≡ c`, `b ≡ 0`.
    pub fn additive(c: f64) -> Self {
        Self::new(CoefficientFn::constant(c), CoefficientFn::zero())
    }

    pub fn spot_check(&self, grid: &Grid, seed: u64) -> Result<()> {
        self.sigma.spot_check(grid, 10.0, seed)?;
        self.b.spot_check(grid, 10.0, seed.wrapping_add(1))
    }
}
