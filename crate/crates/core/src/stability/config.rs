use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::analysis::SpatialBox;
use crate::error::{Error, Result};
use crate::expr::{substitute, Expression, Point};
use crate::grid::Grid;
use crate::kernels::KernelModel;
use crate::noise::{SpectralMeasure, MIN_REPLICAS};
use crate::solver::{CoefficientFn, Coefficients, SolverOptions, DEFAULT_MAX_ITER};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    CoefficientStability,
    ParameterContinuity,
    NoiseStability,
    PicardConvergence,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::CoefficientStability => "coefficient_stability",
            ExperimentKind::ParameterContinuity => "parameter_continuity",
            ExperimentKind::NoiseStability => "noise_stability",
            ExperimentKind::PicardConvergence => "picard_convergence",
        }
    }
}

/// One entry `(σ_n, b_n)` of a coefficient schedule with its distance
/// `‖σ_n − σ‖_{T,∞} + ‖b_n − b‖_{T,∞}` to the base pair.
#[derive(Debug, Clone)]
pub struct CoefficientPerturbation {
    pub index: f64,
    pub coefficients: Coefficients,
    pub distance: f64,
}

/// `σ_n = σ + c/n`, `b_n = b`, whose distance is `|c|/n` exactly.
pub fn shifted_schedule(base: &Coefficients, c: f64, ns: &[usize]) -> Vec<CoefficientPerturbation> {
    ns.iter()
        .map(|&n| {
            let shift = c / n as f64;
            let sigma = base.sigma.clone();
            let f = sigma.f.clone();
            let mut shifted = CoefficientFn::new(format!("{} + {shift:?}", sigma.label), move |t, x, u| f(t, x, u) + shift);
            shifted.declared_lipschitz = sigma.declared_lipschitz;
            shifted.declared_bound = sigma.declared_bound.map(|b| b + shift.abs());
            CoefficientPerturbation {
                index: n as f64,
                coefficients: Coefficients::new(shifted, base.b.clone()),
                distance: shift.abs(),
            }
        })
        .collect()
}

type FamilyFn = dyn Fn(f64) -> Result<(Coefficients, f64)> + Send + Sync;

/// `λ ↦ (σ_λ, b_λ, φ(λ))` with `φ` a constant initial value.
#[derive(Clone)]
pub struct ParameterFamily {
    pub label: String,
    f: Arc<FamilyFn>,
}

impl fmt::Debug for ParameterFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ParameterFamily").field("label", &self.label).finish()
    }
}

impl ParameterFamily {
    pub fn new(label: impl Into<String>, f: impl Fn(f64) -> Result<(Coefficients, f64)> + Send + Sync + 'static) -> Self {
        Self {
            label: label.into(),
            f: Arc::new(f),
        }
    }

    /// A family from expression sources in which `lambda` is a literal
    /// parameter. The initial value may mention only `lambda`.
    pub fn from_sources(sigma: &str, b: &str, initial: &str, dimension: usize) -> Result<Self> {
        for src in [sigma, b] {
            Expression::coefficient(&substitute(src, "lambda", 1.0), dimension)?;
        }
        let init = Expression::coefficient(&substitute(initial, "lambda", 1.0), dimension)?;
        if init.source.contains('u') && !init.independent_of_u() {
            return Err(Error::invalid("the initial value may depend on lambda only"));
        }
        let (sigma, b, initial) = (sigma.to_string(), b.to_string(), initial.to_string());
        let label = format!("sigma = {sigma}; b = {b}; initial = {initial}");
        Ok(Self::new(label, move |lambda| {
            let s = Expression::coefficient(&substitute(&sigma, "lambda", lambda), dimension)?;
            let d = Expression::coefficient(&substitute(&b, "lambda", lambda), dimension)?;
            let i = Expression::coefficient(&substitute(&initial, "lambda", lambda), dimension)?;
            let zero = vec![0.0; dimension];
            let phi = i.eval(&Point {
                t: 0.0,
                x: &zero,
                u: 0.0,
                r: 0.0,
            });
            Ok((
                Coefficients::new(CoefficientFn::from_expression(s), CoefficientFn::from_expression(d)),
                phi,
            ))
        }))
    }

    pub fn at(&self, lambda: f64) -> Result<(Coefficients, f64)> {
        (self.f)(lambda)
    }
}

/// Exceedance threshold for the noise-stability probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Threshold {
    /// A fraction of the median norm of the unperturbed solution.
    MedianFraction(f64),
    Absolute(f64),
}

#[derive(Debug, Clone)]
pub enum Experiment {
    CoefficientStability {
        schedule: Vec<CoefficientPerturbation>,
    },
    ParameterContinuity {
        lambda0: f64,
        lambdas: Vec<f64>,
        family: ParameterFamily,
    },
    NoiseStability {
        epsilons: Vec<f64>,
        threshold: Threshold,
    },
    PicardConvergence {
        iterations: usize,
    },
}

impl Experiment {
    pub fn kind(&self) -> ExperimentKind {
        match self {
            Experiment::CoefficientStability { .. } => ExperimentKind::CoefficientStability,
            Experiment::ParameterContinuity { .. } => ExperimentKind::ParameterContinuity,
            Experiment::NoiseStability { .. } => ExperimentKind::NoiseStability,
            Experiment::PicardConvergence { .. } => ExperimentKind::PicardConvergence,
        }
    }
}

/// Everything a stability run needs.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub kernel: KernelModel,
    pub measure: SpectralMeasure,
    pub grid: Grid,
    /// Base coefficients (ignored by parameter continuity, which takes
    /// them from the family).
    pub coefficients: Coefficients,
    pub experiment: Experiment,
    pub p: f64,
    pub gamma: (f64, f64),
    /// `K` for Hölder norms; the whole cell when `None`.
    pub holder_box: Option<SpatialBox>,
    pub replicas: usize,
    pub master_seed: u64,
    pub solver: SolverOptions,
    /// Picard tolerance; `None` means the solver default.
    pub tol: Option<f64>,
    pub max_iter: usize,
}

impl ExperimentConfig {
    pub fn new(
        kernel: KernelModel,
        measure: SpectralMeasure,
        grid: Grid,
        coefficients: Coefficients,
        experiment: Experiment,
    ) -> Self {
        Self {
            kernel,
            measure,
            grid,
            coefficients,
            experiment,
            p: 2.0,
            gamma: (0.2, 0.4),
            holder_box: None,
            replicas: MIN_REPLICAS,
            master_seed: 0,
            solver: SolverOptions::default(),
            tol: None,
            max_iter: DEFAULT_MAX_ITER,
        }
    }

    pub fn kind(&self) -> ExperimentKind {
        self.experiment.kind()
    }

    pub fn holder_box(&self) -> SpatialBox {
        self.holder_box.clone().unwrap_or_else(|| SpatialBox::whole(&self.grid))
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.kernel.dimension != self.grid.dimension || self.measure.dimension != self.grid.dimension {
            return Err(Error::GridMismatch("kernel, measure and grid dimensions differ".into()));
        }
        if !(self.p >= 2.0) || !self.p.is_finite() {
            return Err(Error::invalid(format!("moment order must be at least 2, got {}", self.p)));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter must be positive"));
        }
        let min_replicas = match self.kind() {
            ExperimentKind::NoiseStability => 1,
            _ => MIN_REPLICAS,
        };
        if self.replicas < min_replicas {
            return Err(Error::invalid(format!(
                "{} needs at least {min_replicas} replicas, got {}",
                self.kind().name(),
                self.replicas
            )));
        }
        match &self.experiment {
            Experiment::CoefficientStability { schedule } => {
                if schedule.is_empty() {
                    return Err(Error::invalid("empty coefficient schedule"));
                }
                if schedule.iter().any(|e| !(e.distance >= 0.0) || !e.distance.is_finite()) {
                    return Err(Error::invalid("schedule distances must be finite and nonnegative"));
                }
                if schedule.windows(2).any(|w| !(w[0].index < w[1].index)) {
                    return Err(Error::invalid("schedule indices must increase"));
                }
            }
            Experiment::ParameterContinuity { lambda0, lambdas, .. } => {
                if lambdas.is_empty() || lambdas.iter().chain(std::iter::once(lambda0)).any(|l| !l.is_finite()) {
                    return Err(Error::invalid("lambda grid must be finite and nonempty"));
                }
            }
            Experiment::NoiseStability { epsilons, threshold } => {
                if epsilons.is_empty() || epsilons.iter().any(|e| !(0.0..=1.0).contains(e)) {
                    return Err(Error::invalid("epsilon grid must be nonempty and inside [0, 1]"));
                }
                let t = match threshold {
                    Threshold::MedianFraction(t) | Threshold::Absolute(t) => *t,
                };
                if !(t >= 0.0) {
                    return Err(Error::invalid("threshold must be nonnegative"));
                }
            }
            Experiment::PicardConvergence { iterations } => {
                if *iterations < 8 {
                    return Err(Error::invalid(format!("need at least 8 Picard iterations, got {iterations}")));
                }
            }
        }
        let (g1, g2) = self.gamma;
        if !(g1 > 0.0 && g1 < 1.0 && g2 > 0.0 && g2 < 1.0) {
            return Err(Error::invalid("Hölder exponents must lie in (0, 1)"));
        }
        Ok(())
    }
}
