use serde::{Deserialize, Serialize};

use crate::analysis::SpatialBox;
use crate::error::{Error, Result};
use crate::expr::{Expression, Point};
use crate::grid::Grid;
use crate::io::density_from_source;
use crate::kernels::{KernelFamily, KernelModel};
use crate::noise::{SpectralMeasure, SpectralModel};
use crate::solver::{CoefficientFn, Coefficients, SolverOptions, DEFAULT_MAX_ITER};
use crate::stability::{shifted_schedule, Experiment, ExperimentConfig, ParameterFamily, Threshold};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    /// `heat` or `wave`.
    pub family: String,
    pub dimension: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureSection {
    /// `white`, `riesz`, `bessel` or `custom`.
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Radial density in the variable `r` (custom model).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub length: f64,
    pub points: usize,
    pub horizon: f64,
    pub steps: usize,
}

/// A number, or an expression (in `lambda` for parameter families).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Number(f64),
    Expr(String),
}

impl Default for Scalar {
    fn default() -> Self {
        Scalar::Number(0.0)
    }
}

impl Scalar {
    fn source(&self) -> String {
        match self {
            Scalar::Number(v) => format!("{v:?}"),
            Scalar::Expr(s) => s.clone(),
        }
    }
}

fn zero_source() -> String {
    "0".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientSection {
    #[serde(default = "zero_source")]
    pub sigma: String,
    #[serde(default = "zero_source")]
    pub b: String,
    #[serde(default)]
    pub initial: Scalar,
    #[serde(default)]
    pub dealias: bool,
}

impl Default for CoefficientSection {
    fn default() -> Self {
        Self {
            sigma: zero_source(),
            b: zero_source(),
            initial: Scalar::default(),
            dealias: false,
        }
    }
}

fn default_p() -> f64 {
    2.0
}
fn default_gamma() -> [f64; 2] {
    [0.2, 0.4]
}
fn default_replicas() -> usize {
    100
}
fn default_max_iter() -> usize {
    DEFAULT_MAX_ITER
}
fn default_iterations() -> usize {
    10
}
fn default_schedule() -> Vec<usize> {
    vec![2, 4, 8, 16, 32]
}
fn default_shift() -> f64 {
    1.0
}
fn default_lambda0() -> f64 {
    1.0
}
fn default_epsilons() -> Vec<f64> {
    vec![0.4, 0.2, 0.1, 0.05, 0.0]
}
fn default_eta() -> f64 {
    0.8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    /// `assumptions`, `noise_check`, `solve`, `holder`, `picard`,
    /// `coefficient_stability`, `parameter_continuity` or `noise_stability`.
    pub kind: String,
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default = "default_gamma")]
    pub gamma: [f64; 2],
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub box_lower: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub box_upper: Option<Vec<f64>>,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    /// Indices `n` of `σ_n = σ + shift/n`.
    #[serde(default = "default_schedule")]
    pub schedule: Vec<usize>,
    #[serde(default = "default_shift")]
    pub shift: f64,
    #[serde(default = "default_lambda0")]
    pub lambda0: f64,
    #[serde(default)]
    pub lambdas: Vec<f64>,
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    /// Exceedance threshold as a fraction of the median `‖u‖_γ`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold_fraction: Option<f64>,
    /// Absolute exceedance threshold.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(default = "default_eta")]
    pub eta: f64,
    /// Exponent bands checked by `holder` when `assert` is set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_band: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub space_band: Option<[f64; 2]>,
    /// Check the experiment's acceptance property; exit 4 when it fails.
    #[serde(default)]
    pub assert: bool,
}

fn default_dir() -> String {
    "out".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_dir")]
    pub dir: String,
    /// Also write a gnuplot script next to the CSV tables.
    #[serde(default = "yes")]
    pub plot: bool,
}

fn yes() -> bool {
    true
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            plot: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub kernel: KernelSection,
    pub measure: MeasureSection,
    pub grid: GridSection,
    #[serde(default)]
    pub coefficients: CoefficientSection,
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub output: OutputSection,
}

/// Experiment kinds accepted in `[experiment] kind`.
pub const KINDS: [&str; 8] = [
    "assumptions",
    "noise_check",
    "solve",
    "holder",
    "picard",
    "coefficient_stability",
    "parameter_continuity",
    "noise_stability",
];

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| {
            let (line, column) = e
                .span()
                .map(|s| line_column(text, s.start))
                .unwrap_or((0, 0));
            Error::Parse {
                line,
                column,
                message: e.message().to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Canonical TOML text; the config hash is taken over this.
    pub fn snapshot(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    /// Schema checks that need no computation.
    pub fn validate(&self) -> Result<()> {
        if !KINDS.contains(&self.experiment.kind.as_str()) {
            return Err(Error::invalid(format!(
                "unknown experiment kind '{}'; expected one of {}",
                self.experiment.kind,
                KINDS.join(", ")
            )));
        }
        self.kernel()?;
        self.measure()?;
        self.grid()?.validate()?;
        if self.experiment.kind != "parameter_continuity" {
            self.coefficients()?;
            self.initial_value()?;
        }
        if self.experiment.threshold.is_some() && self.experiment.threshold_fraction.is_some() {
            return Err(Error::invalid("set either threshold or threshold_fraction, not both"));
        }
        Ok(())
    }

    pub fn kernel(&self) -> Result<KernelModel> {
        let family = match self.kernel.family.as_str() {
            "heat" => KernelFamily::Heat,
            "wave" => KernelFamily::Wave,
            other => return Err(Error::invalid(format!("unknown kernel family '{other}'"))),
        };
        KernelModel::new(family, self.kernel.dimension)
    }

    pub fn measure(&self) -> Result<SpectralMeasure> {
        let d = self.kernel.dimension;
        let m = &self.measure;
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| Error::invalid(format!("measure '{}' needs '{name}'", m.model)))
        };
        let model = match m.model.as_str() {
            "white" => SpectralModel::White,
            "riesz" => SpectralModel::Riesz {
                beta: need(m.beta, "beta")?,
            },
            "bessel" => SpectralModel::Bessel {
                alpha: need(m.alpha, "alpha")?,
            },
            "custom" => {
                let src = m
                    .density
                    .as_deref()
                    .ok_or_else(|| Error::invalid("measure 'custom' needs 'density'"))?;
                SpectralModel::CustomRadial(density_from_source(src)?)
            }
            other => return Err(Error::invalid(format!("unknown measure model '{other}'"))),
        };
        SpectralMeasure::new(model, d)
    }

    pub fn grid(&self) -> Result<Grid> {
        let g = &self.grid;
        Grid::new(self.kernel.dimension, g.length, g.points, g.horizon, g.steps)
    }

    pub fn coefficients(&self) -> Result<Coefficients> {
        let d = self.kernel.dimension;
        Ok(Coefficients::new(
            CoefficientFn::from_expression(Expression::coefficient(&self.coefficients.sigma, d)?),
            CoefficientFn::from_expression(Expression::coefficient(&self.coefficients.b, d)?),
        ))
    }

    /// Constant initial value; expressions may not mention `u`, `t` or `x`.
    pub fn initial_value(&self) -> Result<f64> {
        let src = self.coefficients.initial.source();
        let e = Expression::coefficient(&src, self.kernel.dimension)?;
        if !e.independent_of_u() {
            return Err(Error::invalid("the initial value must be a constant"));
        }
        let zero = [0.0; 3];
        let (a, b) = (
            e.eval(&Point {
                t: 0.0,
                x: &zero,
                u: 0.0,
                r: 0.0,
            }),
            e.eval(&Point {
                t: 1.0,
                x: &[1.0; 3],
                u: 0.0,
                r: 0.0,
            }),
        );
        if a != b {
            return Err(Error::invalid("the initial value must be a constant"));
        }
        Ok(a)
    }

    pub fn solver_options(&self) -> Result<SolverOptions> {
        Ok(SolverOptions {
            dealias: self.coefficients.dealias,
            initial: if self.experiment.kind == "parameter_continuity" {
                0.0
            } else {
                self.initial_value()?
            },
        })
    }

    pub fn holder_box(&self, grid: &Grid) -> Result<SpatialBox> {
        match (&self.experiment.box_lower, &self.experiment.box_upper) {
            (None, None) => Ok(SpatialBox::whole(grid)),
            (Some(lo), Some(hi)) => SpatialBox::new(lo.clone(), hi.clone()),
            _ => Err(Error::invalid("box_lower and box_upper must be given together")),
        }
    }

    /// Warnings attached to the run record.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.measure.model == "custom" {
            out.push(
                "custom spectral density: non-negativity, non-negative definiteness and temperedness are not verified"
                    .into(),
            );
        }
        let d = self.kernel.dimension;
        for (name, src) in [("sigma", &self.coefficients.sigma), ("b", &self.coefficients.b)] {
            let src = crate::expr::substitute(src, "lambda", 1.0);
            if let Ok(e) = Expression::coefficient(&src, d) {
                if e.derived.lipschitz.is_none() {
                    out.push(format!(
                        "{name} = '{}' has no derivable Lipschitz constant; Picard iteration may not converge",
                        self.coefficients_source(name)
                    ));
                }
            }
        }
        out
    }

    fn coefficients_source(&self, name: &str) -> &str {
        if name == "sigma" {
            &self.coefficients.sigma
        } else {
            &self.coefficients.b
        }
    }

    /// The stability experiment described by this config.
    pub fn experiment_config(&self) -> Result<ExperimentConfig> {
        let e = &self.experiment;
        let grid = self.grid()?;
        let experiment = match e.kind.as_str() {
            "coefficient_stability" => {
                let mut ns = e.schedule.clone();
                if ns.contains(&0) {
                    return Err(Error::invalid("schedule indices must be positive"));
                }
                ns.dedup();
                Experiment::CoefficientStability {
                    schedule: shifted_schedule(&self.coefficients()?, e.shift, &ns),
                }
            }
            "parameter_continuity" => {
                if e.lambdas.is_empty() {
                    return Err(Error::invalid("parameter_continuity needs a lambdas grid"));
                }
                Experiment::ParameterContinuity {
                    lambda0: e.lambda0,
                    lambdas: e.lambdas.clone(),
                    family: ParameterFamily::from_sources(
                        &self.coefficients.sigma,
                        &self.coefficients.b,
                        &self.coefficients.initial.source(),
                        self.kernel.dimension,
                    )?,
                }
            }
            "noise_stability" => Experiment::NoiseStability {
                epsilons: e.epsilons.clone(),
                threshold: match (e.threshold, e.threshold_fraction) {
                    (Some(t), None) => Threshold::Absolute(t),
                    (None, Some(f)) => Threshold::MedianFraction(f),
                    _ => Threshold::MedianFraction(0.1),
                },
            },
            "picard" => Experiment::PicardConvergence {
                iterations: e.iterations,
            },
            other => return Err(Error::invalid(format!("'{other}' is not a stability experiment"))),
        };
        let coefficients = if e.kind == "parameter_continuity" {
            Coefficients::zero()
        } else {
            self.coefficients()?
        };
        let mut cfg = ExperimentConfig::new(self.kernel()?, self.measure()?, grid, coefficients, experiment);
        cfg.p = e.p;
        cfg.gamma = (e.gamma[0], e.gamma[1]);
        cfg.holder_box = Some(self.holder_box(&grid)?);
        cfg.replicas = e.replicas;
        cfg.master_seed = e.seed;
        cfg.solver = self.solver_options()?;
        cfg.tol = e.tol;
        cfg.max_iter = e.max_iter;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}
