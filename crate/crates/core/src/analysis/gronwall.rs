use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Convolution kernel `g` for the Gronwall series.
#[derive(Debug, Clone, PartialEq)]
pub enum GronwallKernel {
    /// `g(t_i)` on the same time grid as `h`.
    Sampled(Vec<f64>),
    /// `β (t − s)^{θ−1}`, integrated exactly against piecewise-linear data.
    Power { beta: f64, theta: f64 },
}

/// Linear operator `f ↦ ∫_0^t g(t−s) f(s) ds` on a uniform grid. Cell `c`
/// (the one ending `c` steps before `t_i`) weights `f_{i−c}` by `near[c]`
/// and `f_{i−c−1}` by `far[c]`.
#[derive(Debug, Clone)]
struct Convolution {
    near: Vec<f64>,
    far: Vec<f64>,
}

impl Convolution {
    fn new(kernel: &GronwallKernel, len: usize, dt: f64) -> Result<Self> {
        if len < 2 {
            return Err(Error::invalid("need at least two samples"));
        }
        let cells = len - 1;
        match kernel {
            GronwallKernel::Sampled(g) => {
                if g.len() != len {
                    return Err(Error::invalid(format!("kernel has {} samples, data has {len}", g.len())));
                }
                if g.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                    return Err(Error::invalid("kernel samples must be finite and nonnegative"));
                }
                // Trapezoid rule.
                Ok(Self {
                    near: (0..cells).map(|c| 0.5 * dt * g[c]).collect(),
                    far: (0..cells).map(|c| 0.5 * dt * g[c + 1]).collect(),
                })
            }
            &GronwallKernel::Power { beta, theta } => {
                if !(beta >= 0.0) || !(theta > 0.0) || !beta.is_finite() || !theta.is_finite() {
                    return Err(Error::invalid("power kernel needs beta >= 0 and theta > 0"));
                }
                // Exact integral of τ^{θ−1} against the linear interpolant,
                // τ = t − s running over [a, a + dt].
                let (mut near, mut far) = (Vec::with_capacity(cells), Vec::with_capacity(cells));
                for c in 0..cells {
                    let a = c as f64 * dt;
                    let b = a + dt;
                    let p1 = (b.powf(theta + 1.0) - a.powf(theta + 1.0)) / (theta + 1.0);
                    let p0 = (b.powf(theta) - a.powf(theta)) / theta;
                    near.push(beta * (b * p0 - p1) / dt);
                    far.push(beta * (p1 - a * p0) / dt);
                }
                Ok(Self { near, far })
            }
        }
    }

    fn apply(&self, f: &[f64]) -> Vec<f64> {
        (0..f.len())
            .map(|i| (0..i).map(|c| self.near[c] * f[i - c] + self.far[c] * f[i - c - 1]).sum())
            .collect()
    }
}

/// `h + Σ_{n ≤ n_terms} Gⁿ h` on the sample grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesBound {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// `max_t (G^{n_terms} h)(t)`, a proxy for the truncated tail.
    pub last_term: f64,
}

impl SeriesBound {
    /// CSV with columns `t,bound`.
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "t,bound")?;
        for (t, v) in self.times.iter().zip(&self.values) {
            writeln!(w, "{t:e},{v:e}")?;
        }
        Ok(())
    }
}

fn check_samples(name: &str, xs: &[f64]) -> Result<()> {
    if xs.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::invalid(format!("{name} must be finite and nonnegative")));
    }
    Ok(())
}

/// Iterated-convolution bound for `f ≤ h + ∫_0^t g(t−s) f(s) ds`, with `h`
/// sampled at `t_i = i·dt`.
pub fn gronwall_series_bound(h: &[f64], g: &GronwallKernel, dt: f64, n_terms: usize) -> Result<SeriesBound> {
    if !(dt > 0.0) {
        return Err(Error::invalid("time step must be positive"));
    }
    check_samples("h", h)?;
    let conv = Convolution::new(g, h.len(), dt)?;
    let mut values = h.to_vec();
    let mut term = h.to_vec();
    for _ in 0..n_terms {
        term = conv.apply(&term);
        for (v, t) in values.iter_mut().zip(&term) {
            *v += t;
        }
    }
    let last_term = if n_terms == 0 { 0.0 } else { term.iter().fold(0.0f64, |m, v| m.max(*v)) };
    Ok(SeriesBound {
        times: (0..h.len()).map(|i| i as f64 * dt).collect(),
        values,
        last_term,
    })
}

/// Constants of the fractional Gronwall recursion
/// `f_n(t) ≤ α + β ∫_0^t f_{n−1}(s) (t−s)^{θ−1} ds`, `f_0 ≤ M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GronwallParams {
    pub alpha: f64,
    pub beta: f64,
    pub theta: f64,
    pub m: f64,
}

impl GronwallParams {
    fn validate(&self) -> Result<()> {
        let ok = self.alpha >= 0.0
            && self.beta >= 0.0
            && self.theta > 0.0
            && self.m >= 0.0
            && [self.alpha, self.beta, self.theta, self.m].iter().all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid Gronwall constants {self:?}")))
        }
    }
}

/// `½(α + α·exp(2βt^θ/θ) + (M/n!)(2βt^θ/θ)ⁿ)`.
pub fn gronwall_factorial_bound(alpha: f64, beta: f64, theta: f64, m: f64, n: u32, t: f64) -> f64 {
    let x = 2.0 * beta * t.powf(theta) / theta;
    let tail = if m == 0.0 || (x == 0.0 && n > 0) {
        0.0
    } else {
        m * (n as f64 * x.ln() - ln_gamma(n as f64 + 1.0)).exp()
    };
    0.5 * (alpha + alpha * x.exp() + tail)
}

/// Extremal sequence: equality in the recursion, starting from `f0`.
pub fn gronwall_iterates(f0: &[f64], dt: f64, params: GronwallParams, count: usize) -> Result<Vec<Vec<f64>>> {
    params.validate()?;
    check_samples("f0", f0)?;
    let kernel = GronwallKernel::Power {
        beta: params.beta,
        theta: params.theta,
    };
    let conv = Convolution::new(&kernel, f0.len(), dt)?;
    let mut out = vec![f0.to_vec()];
    for _ in 0..count {
        let prev = out.last().expect("nonempty");
        let next: Vec<f64> = conv.apply(prev).iter().map(|v| params.alpha + v).collect();
        out.push(next);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GronwallCheck {
    /// `f_0 ≤ M`.
    InitialBound,
    /// `f_n ≤ α + β ∫ f_{n−1}(s)(t−s)^{θ−1} ds`.
    Hypothesis,
    /// `f_n ≤` the closed-form bound.
    Bound,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GronwallFailure {
    pub check: GronwallCheck,
    pub n: usize,
    pub t: f64,
    pub value: f64,
    pub limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GronwallReport {
    pub holds: bool,
    pub first_failure: Option<GronwallFailure>,
    /// Largest `f_n(t) / bound(n, t)` seen (0 when every bound is 0).
    pub max_ratio: f64,
}

/// Absolute slack allowed for quadrature error.
pub const GRONWALL_TOLERANCE: f64 = 1e-6;

/// Checks a sampled sequence `f_0, f_1, …` (all on `t_i = i·dt`) against the
/// recursion hypothesis and the closed-form bound.
pub fn verify_gronwall_instance(f_sequence: &[Vec<f64>], dt: f64, params: GronwallParams) -> Result<GronwallReport> {
    params.validate()?;
    let first = f_sequence.first().ok_or_else(|| Error::invalid("empty sequence"))?;
    let len = first.len();
    if f_sequence.iter().any(|f| f.len() != len) {
        return Err(Error::invalid("all functions must share one time grid"));
    }
    if f_sequence.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite sample"));
    }
    let kernel = GronwallKernel::Power {
        beta: params.beta,
        theta: params.theta,
    };
    let conv = Convolution::new(&kernel, len, dt)?;
    let slack = |limit: f64| GRONWALL_TOLERANCE * (1.0 + limit.abs());
    let fail = |check, n, i: usize, value, limit| GronwallFailure {
        check,
        n,
        t: i as f64 * dt,
        value,
        limit,
    };

    let mut first_failure = None;
    if let Some(i) = first.iter().position(|&v| v > params.m + slack(params.m)) {
        first_failure = Some(fail(GronwallCheck::InitialBound, 0, i, first[i], params.m));
    }
    let mut max_ratio = 0.0f64;
    for n in 1..f_sequence.len() {
        if first_failure.is_some() {
            break;
        }
        let rhs = conv.apply(&f_sequence[n - 1]);
        for i in 0..len {
            let hyp = params.alpha + rhs[i];
            let v = f_sequence[n][i];
            if v > hyp + slack(hyp) {
                first_failure = Some(fail(GronwallCheck::Hypothesis, n, i, v, hyp));
                break;
            }
            let t = i as f64 * dt;
            let bound = gronwall_factorial_bound(params.alpha, params.beta, params.theta, params.m, n as u32, t);
            if bound > 0.0 {
                max_ratio = max_ratio.max(v / bound);
            }
            if v > bound + slack(bound) {
                first_failure = Some(fail(GronwallCheck::Bound, n, i, v, bound));
                break;
            }
        }
    }
    Ok(GronwallReport {
        holds: first_failure.is_none(),
        first_failure,
        max_ratio,
    })
}

/// Both sides of `|Σ f|h| w|^q ≤ (Σ |f|^q |h| w)(Σ |h| w)^{q−1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerMeanCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// The weighted power-mean (Hölder) inequality on a discrete measure.
pub fn weighted_power_mean_check(f: &[f64], h: &[f64], weights: &[f64], q: f64) -> Result<PowerMeanCheck> {
    if f.len() != h.len() || f.len() != weights.len() {
        return Err(Error::invalid("f, h and weights must have equal length"));
    }
    if !(q > 1.0) || !q.is_finite() {
        return Err(Error::invalid(format!("exponent must exceed 1, got {q}")));
    }
    check_samples("weights", weights)?;
    if f.iter().chain(h).any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite sample"));
    }
    let mass: f64 = h.iter().zip(weights).map(|(h, w)| h.abs() * w).sum();
    let mean: f64 = f.iter().zip(h).zip(weights).map(|((f, h), w)| f * h.abs() * w).sum();
    let moment: f64 = f.iter().zip(h).zip(weights).map(|((f, h), w)| f.abs().powf(q) * h.abs() * w).sum();
    let lhs = mean.abs().powf(q);
    let rhs = moment * mass.powf(q - 1.0);
    Ok(PowerMeanCheck {
        lhs,
        rhs,
        holds: lhs <= rhs * (1.0 + 1e-12),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factorial_bound_examples() {
        assert_eq!(gronwall_factorial_bound(0.0, 1.3, 0.7, 0.0, 4, 2.0), 0.0);
        assert!((gronwall_factorial_bound(0.0, 1.0, 1.0, 1.0, 3, 1.0) - 2.0 / 3.0).abs() < 1e-14);
        for n in 1..6 {
            assert_eq!(gronwall_factorial_bound(1.0, 0.0, 1.5, 4.0, n, 1.0), 1.0);
        }
    }

    #[test]
    fn power_weights_integrate_constants_exactly() {
        // ∫_0^t (t−s)^{θ−1} ds = t^θ/θ.
        let dt = 0.01;
        let theta = 0.3;
        let k = GronwallKernel::Power { beta: 1.0, theta };
        let conv = Convolution::new(&k, 101, dt).unwrap();
        let out = conv.apply(&vec![1.0; 101]);
        for (i, v) in out.iter().enumerate() {
            let t = i as f64 * dt;
            assert!((v - t.powf(theta) / theta).abs() < 1e-12, "{i}");
        }
    }

    #[test]
    fn power_mean_equality_for_constant_f() {
        let c = weighted_power_mean_check(&[2.0; 4], &[1.0, -2.0, 0.5, 3.0], &[0.1, 0.2, 0.3, 0.4], 2.7).unwrap();
        assert!(c.holds);
        assert!((c.lhs - c.rhs).abs() < 1e-12 * c.rhs);
        let z = weighted_power_mean_check(&[1.0, 5.0], &[0.0, 0.0], &[1.0, 1.0], 3.0).unwrap();
        assert!(z.holds && z.lhs == 0.0 && z.rhs == 0.0);
    }
}
