//! Fundamental solutions of the heat and wave operators, their Fourier
//! symbols, and numerical checks of the integrability conditions that
//! govern existence and Hölder regularity of the mild solution.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::noise::SpectralMeasure;
use crate::quad::{integrate_left_singular, QuadOptions};
use crate::radial::{radial_integral, FastPart, Oscillation, RadialIntegrand};
use crate::special::{one_minus_radial_cos_average, radial_cos_asymptotic};
use crate::stats::{fit_line, LineFit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    Heat,
    Wave,
}

/// Heat kernel `(2πt)^{-d/2} e^{-|x|²/2t}` or wave kernel `W^d_t` for d ≤ 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelModel {
    pub family: KernelFamily,
    pub dimension: usize,
}

impl KernelModel {
    pub fn new(family: KernelFamily, dimension: usize) -> Result<Self> {
        match family {
            KernelFamily::Heat if !(1..=3).contains(&dimension) => Err(Error::invalid(format!(
                "heat dimension {dimension} unsupported"
            ))),
            KernelFamily::Wave if !(1..=2).contains(&dimension) => Err(Error::invalid(format!(
                "wave dimension {dimension} unsupported"
            ))),
            _ => Ok(Self { family, dimension }),
        }
    }

    pub fn heat(dimension: usize) -> Result<Self> {
        Self::new(KernelFamily::Heat, dimension)
    }

    pub fn wave(dimension: usize) -> Result<Self> {
        Self::new(KernelFamily::Wave, dimension)
    }

    pub fn name(&self) -> &'static str {
        match self.family {
            KernelFamily::Heat => "heat",
            KernelFamily::Wave => "wave",
        }
    }

    /// Real-space kernel value at time `t > 0` and point `x`.
    pub fn kernel_value(&self, t: f64, x: &[f64]) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::invalid(format!("kernel time must be positive, got {t}")));
        }
        if x.len() != self.dimension {
            return Err(Error::invalid(format!(
                "point has {} coordinates, kernel dimension is {}",
                x.len(),
                self.dimension
            )));
        }
        let r2: f64 = x.iter().map(|v| v * v).sum();
        let r = r2.sqrt();
        Ok(match (self.family, self.dimension) {
            (KernelFamily::Heat, d) => (2.0 * PI * t).powf(-(d as f64) / 2.0) * (-r2 / (2.0 * t)).exp(),
            (KernelFamily::Wave, 1) => {
                if r <= t {
                    0.5
                } else {
                    0.0
                }
            }
            (KernelFamily::Wave, _) => {
                if r == t {
                    return Err(Error::SingularPoint {
                        family: "wave",
                        t,
                        radius: r,
                    });
                }
                if r < t {
                    1.0 / (2.0 * PI * (t * t - r2).sqrt())
                } else {
                    0.0
                }
            }
        })
    }

    /// `FS(s,·)(ξ)` as a function of `|ξ|`.
    pub fn symbol_radial(&self, s: f64, r: f64) -> f64 {
        match self.family {
            KernelFamily::Heat => (-s * r * r / 2.0).exp(),
            KernelFamily::Wave => {
                if r * s < 1e-8 {
                    s * (1.0 - (r * s).powi(2) / 6.0)
                } else {
                    (s * r).sin() / r
                }
            }
        }
    }

    /// Fourier symbol `FS(s,·)(ξ)` under `Fφ(ξ) = ∫ e^{-i⟨ξ,x⟩} φ(x) dx`.
    pub fn fourier_symbol(&self, s: f64, xi: &[f64]) -> Result<f64> {
        if !(s >= 0.0) {
            return Err(Error::invalid(format!("symbol time must be nonnegative, got {s}")));
        }
        let r = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
        Ok(self.symbol_radial(s, r))
    }

    /// `∫_0^t |FS(s,·)(ξ)|² ds` in closed form, as a function of `|ξ|`.
    pub fn integrated_symbol_sq(&self, t: f64, r: f64) -> f64 {
        match self.family {
            KernelFamily::Heat => {
                let a = t * r * r;
                if a < 1e-6 {
                    t * (1.0 - a / 2.0 + a * a / 6.0)
                } else {
                    -(-a).exp_m1() / (r * r)
                }
            }
            KernelFamily::Wave => {
                let a = t * r;
                if a < 0.05 {
                    let a2 = a * a;
                    t.powi(3)
                        * (1.0 / 3.0
                            + a2 * (-1.0 / 15.0 + a2 * (2.0 / 315.0 + a2 * (-1.0 / 2835.0 + a2 * 2.0 / 155_925.0))))
                } else {
                    (t / 2.0 - (2.0 * a).sin() / (4.0 * r)) / (r * r)
                }
            }
        }
    }

    /// `J(s) = ∫ μ(dξ) |FS(s,·)(ξ)|²`.
    pub fn j_function(&self, mu: &SpectralMeasure, s: f64) -> Result<f64> {
        if !(s > 0.0) {
            return Err(Error::invalid(format!("J requires s > 0, got {s}")));
        }
        self.check_dimension(mu)?;
        let value = |r: f64| self.symbol_radial(s, r).powi(2);
        let result = match self.family {
            KernelFamily::Heat => radial_integral(
                mu,
                &RadialIntegrand {
                    value: &value,
                    envelope: &value,
                    oscillations: &[],
                    scale: 1.0 / s.sqrt(),
                    fast: None,
                },
            ),
            KernelFamily::Wave => {
                // sin²(sr)/r² = 1/(2r²) − cos(2sr)/(2r²).
                let envelope = |r: f64| 0.5 / (r * r);
                let amp = |r: f64| -0.5 / (r * r);
                radial_integral(
                    mu,
                    &RadialIntegrand {
                        value: &value,
                        envelope: &envelope,
                        oscillations: &[Oscillation {
                            amplitude: &amp,
                            frequency: 2.0 * s,
                            phase: 0.0,
                        }],
                        scale: 1.0 / s,
                        fast: None,
                    },
                )
            }
        };
        result.map_err(|e| match e {
            Error::Divergent(m) => Error::Divergent(format!("J({s}) for {} kernel: {m}", self.name())),
            other => other,
        })
    }

    /// `ν_t = ∫_0^t J(s) ds` by time quadrature of [`Self::j_function`].
    pub fn nu(&self, mu: &SpectralMeasure, t: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::invalid(format!("nu requires t > 0, got {t}")));
        }
        self.check_dimension(mu)?;
        let failure = std::cell::RefCell::new(None);
        let res = integrate_left_singular(
            |s| match self.j_function(mu, s) {
                Ok(v) => v,
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    f64::NAN
                }
            },
            0.0,
            t,
            QuadOptions {
                abs_tol: 1e-300,
                rel_tol: 1e-10,
                max_intervals: 200,
            },
        );
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        if !res.converged || !res.value.is_finite() {
            return Err(Error::Divergent(format!(
                "time integral of J over (0, {t}] does not converge for {} kernel and {}",
                self.name(),
                mu.describe()
            )));
        }
        Ok(res.value)
    }

    /// `ν_t` computed as `∫ μ(dξ) ∫_0^t |FS(s)(ξ)|² ds` with the time
    /// integral in closed form; an independent route to [`Self::nu`].
    pub fn nu_spectral(&self, mu: &SpectralMeasure, t: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::invalid(format!("nu requires t > 0, got {t}")));
        }
        self.check_dimension(mu)?;
        let value = |r: f64| self.integrated_symbol_sq(t, r);
        match self.family {
            KernelFamily::Heat => {
                let envelope = |r: f64| 1.0 / (r * r);
                radial_integral(
                    mu,
                    &RadialIntegrand {
                        value: &value,
                        envelope: &envelope,
                        oscillations: &[],
                        scale: 6.0 / t.sqrt(),
                        fast: None,
                    },
                )
            }
            KernelFamily::Wave => {
                // t/(2r²) − sin(2tr)/(4r³).
                let envelope = |r: f64| t / (2.0 * r * r);
                let amp = |r: f64| -0.25 / (r * r * r);
                radial_integral(
                    mu,
                    &RadialIntegrand {
                        value: &value,
                        envelope: &envelope,
                        oscillations: &[Oscillation {
                            amplitude: &amp,
                            frequency: 2.0 * t,
                            phase: -std::f64::consts::FRAC_PI_2,
                        }],
                        scale: 1.0 / t,
                        fast: None,
                    },
                )
            }
        }
    }

    /// `∫_0^T ds ∫ μ(dξ) |FS(s)(ξ)|² |e^{-i⟨ξ,z⟩} - 1|²` for `|z| = z`.
    pub fn space_increment_integral(&self, mu: &SpectralMeasure, horizon: f64, z: f64) -> Result<f64> {
        if !(z > 0.0 && horizon > 0.0) {
            return Err(Error::invalid("space increment needs z > 0 and T > 0"));
        }
        self.check_dimension(mu)?;
        let d = self.dimension;
        let value = |r: f64| self.integrated_symbol_sq(horizon, r) * 2.0 * one_minus_radial_cos_average(d, r * z);
        // For large r: Φ(r) · 2(1 − A(rz)) with A(rz) = Σ_j a_j(rz) cos(rz + φ_j).
        let asym = |r: f64| radial_cos_asymptotic(d, r * z);
        match self.family {
            KernelFamily::Heat => {
                let envelope = |r: f64| 2.0 / (r * r);
                let a0 = |r: f64| -2.0 / (r * r) * asym(r)[0].0;
                let a1 = |r: f64| -2.0 / (r * r) * asym(r)[1].0;
                let p = radial_cos_asymptotic(d, 1.0);
                let oscs = [
                    Oscillation {
                        amplitude: &a0,
                        frequency: z,
                        phase: p[0].1,
                    },
                    Oscillation {
                        amplitude: &a1,
                        frequency: z,
                        phase: p[1].1,
                    },
                ];
                radial_integral(
                    mu,
                    &RadialIntegrand {
                        value: &value,
                        envelope: &envelope,
                        oscillations: &oscs,
                        scale: (6.0 / horizon.sqrt()).max(4.0 / z),
                        fast: None,
                    },
                )
            }
            KernelFamily::Wave => {
                // Φ = t/(2r²) − sin(2tr)/(4r³) once tr ≥ 0.05; the second
                // term times 2(1 − A(rz)) is split off as the fast part.
                let t = horizon;
                let envelope = |r: f64| t / (r * r);
                let p = radial_cos_asymptotic(d, 1.0);
                let b0 = |r: f64| -t / (r * r) * asym(r)[0].0;
                let b1 = |r: f64| -t / (r * r) * asym(r)[1].0;
                let fast_amp = |r: f64| -one_minus_radial_cos_average(d, r * z) / (2.0 * r * r * r);
                let fast_osc = || Oscillation {
                    amplitude: &fast_amp,
                    frequency: 2.0 * t,
                    phase: -std::f64::consts::FRAC_PI_2,
                };
                let mut oscs = vec![
                    Oscillation {
                        amplitude: &b0,
                        frequency: z,
                        phase: p[0].1,
                    },
                    Oscillation {
                        amplitude: &b1,
                        frequency: z,
                        phase: p[1].1,
                    },
                ];
                let fast = if z < 0.5 * t {
                    Some(FastPart {
                        oscillation: fast_osc(),
                        start: 1.0 / t,
                    })
                } else {
                    oscs.push(fast_osc());
                    None
                };
                radial_integral(
                    mu,
                    &RadialIntegrand {
                        value: &value,
                        envelope: &envelope,
                        oscillations: &oscs,
                        scale: (1.0 / t).max(4.0 / z),
                        fast,
                    },
                )
            }
        }
    }

    fn check_dimension(&self, mu: &SpectralMeasure) -> Result<()> {
        if mu.dimension != self.dimension {
            return Err(Error::invalid(format!(
                "measure dimension {} does not match kernel dimension {}",
                mu.dimension, self.dimension
            )));
        }
        Ok(())
    }
}

/// Outcome of the nested-truncation test for `∫ μ(dξ)/(1+|ξ|²)^η`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AEtaCheck {
    pub eta: f64,
    /// Extrapolated value, `None` when divergent.
    pub value: Option<f64>,
    pub divergent: bool,
    /// `(R_k, ∫_{|ξ|≤R_k})` for every truncation evaluated.
    pub table: Vec<(f64, f64)>,
}

const A_ETA_R0: f64 = 1.0;
const A_ETA_MIN_LEVELS: usize = 8;
const A_ETA_MAX_LEVELS: usize = 60;

/// Checks `∫ μ(dξ) (1+|ξ|²)^{-η} < ∞` on balls of radius `2^k R_0`.
///
/// The integral is declared finite once the increments between successive
/// truncations shrink geometrically and the extrapolated remainder is
/// negligible, and divergent once the increments stop shrinking.
pub fn check_a_eta(mu: &SpectralMeasure, eta: f64) -> Result<AEtaCheck> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::invalid(format!("eta must lie in (0, 1], got {eta}")));
    }
    let d = mu.dimension;
    let omega = crate::special::sphere_area(d);
    let f = |r: f64| {
        if r == 0.0 {
            return 0.0;
        }
        let v = omega * mu.density(r) * (1.0 + r * r).powf(-eta) * r.powi(d as i32 - 1);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    let opts = QuadOptions::default();
    let mut table = Vec::new();
    let mut total = integrate_left_singular(f, 0.0, A_ETA_R0, opts).value;
    table.push((A_ETA_R0, total));
    let mut increments: Vec<f64> = Vec::new();
    let mut r = A_ETA_R0;
    for level in 1..=A_ETA_MAX_LEVELS {
        let next = 2.0 * r;
        let inc = crate::quad::integrate(f, r, next, opts).value;
        total += inc;
        r = next;
        table.push((r, total));
        increments.push(inc);
        if level < A_ETA_MIN_LEVELS {
            continue;
        }
        let n = increments.len();
        let (i0, i1, i2) = (increments[n - 3], increments[n - 2], increments[n - 1]);
        if i2 == 0.0 && i1 == 0.0 {
            return Ok(AEtaCheck {
                eta,
                value: Some(total),
                divergent: false,
                table,
            });
        }
        let q1 = i1 / i0;
        let q2 = i2 / i1;
        if q1 >= 1.0 && q2 >= 1.0 {
            return Ok(AEtaCheck {
                eta,
                value: None,
                divergent: true,
                table,
            });
        }
        if q1 < 1.0 && q2 < 1.0 {
            let remainder = i2 * q2 / (1.0 - q2);
            if remainder.abs() <= 1e-8 * total.abs() {
                return Ok(AEtaCheck {
                    eta,
                    value: Some(total + remainder),
                    divergent: false,
                    table,
                });
            }
        }
    }
    Ok(AEtaCheck {
        eta,
        value: None,
        divergent: true,
        table,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExponentFit {
    /// Which increment function was fitted ("time" or "space").
    pub label: String,
    pub fit: LineFit,
    /// `(argument, value)` pairs at the dyadic sample points.
    pub table: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssumptionReport {
    /// (A_η) at η = 1.
    pub a_eta: AEtaCheck,
    pub delta1: f64,
    pub delta2: f64,
    pub r1_holds: bool,
    pub r2_holds: bool,
    pub fits: Vec<ExponentFit>,
}

#[derive(Debug, Clone, Copy)]
pub struct DeltaOptions {
    pub time_window: (f64, f64),
    pub space_window: (f64, f64),
    /// Horizon T in the spatial increment integral.
    pub horizon: f64,
    /// Maximum RMS residual of the log–log regression.
    pub residual_threshold: f64,
}

impl Default for DeltaOptions {
    fn default() -> Self {
        Self {
            time_window: (1e-4, 1e-2),
            space_window: (1e-4, 1e-2),
            horizon: 1.0,
            residual_threshold: 0.05,
        }
    }
}

pub(crate) fn dyadic_points(lo: f64, hi: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut h = lo;
    while h <= hi * (1.0 + 1e-12) {
        out.push(h);
        h *= 2.0;
    }
    out
}

/// Fits `log g(h)` against `log h` and returns half the slope, the Hölder
/// exponent implied by `g(h) ≲ h^{2δ}`.
pub fn exponent_from_increments(
    label: &str,
    g: impl Fn(f64) -> Result<f64>,
    window: (f64, f64),
    residual_threshold: f64,
) -> Result<(f64, ExponentFit)> {
    let points = dyadic_points(window.0, window.1);
    if points.len() < 6 {
        return Err(Error::invalid(format!(
            "{label} window [{}, {}] holds {} dyadic points, need >= 6",
            window.0,
            window.1,
            points.len()
        )));
    }
    let mut table = Vec::with_capacity(points.len());
    for &h in &points {
        table.push((h, g(h)?));
    }
    let xs: Vec<f64> = table.iter().map(|(h, _)| h.ln()).collect();
    let ys: Vec<f64> = table.iter().map(|(_, v)| v.ln()).collect();
    let finite = ys.iter().all(|y| y.is_finite());
    let fit = if finite {
        fit_line(&xs, &ys)
    } else {
        LineFit {
            slope: f64::NAN,
            intercept: f64::NAN,
            residual: f64::INFINITY,
            slope_se: f64::NAN,
        }
    };
    if !(fit.residual <= residual_threshold) {
        return Err(Error::ExponentUndetermined {
            residual: fit.residual,
            threshold: residual_threshold,
            table: xs.into_iter().zip(ys).collect(),
        });
    }
    let delta = (fit.slope / 2.0).min(1.0);
    Ok((
        delta,
        ExponentFit {
            label: label.to_string(),
            fit,
            table,
        },
    ))
}

/// Estimates the exponents δ₁ (time) and δ₂ (space) of the increment
/// integrals `g₁(h) = ∫_0^h J(s) ds` and `g₂(z)` over dyadic windows.
pub fn estimate_deltas(k: &KernelModel, mu: &SpectralMeasure, opts: &DeltaOptions) -> Result<AssumptionReport> {
    let r1_holds = k.nu(mu, opts.horizon).is_ok();
    if !r1_holds {
        return Err(Error::Divergent(format!(
            "integral of J over [0, {}] diverges for {} kernel and {}",
            opts.horizon,
            k.name(),
            mu.describe()
        )));
    }
    let (delta1, fit1) = exponent_from_increments("time", |h| k.nu(mu, h), opts.time_window, opts.residual_threshold)?;
    let (delta2, fit2) = exponent_from_increments(
        "space",
        |z| k.space_increment_integral(mu, opts.horizon, z),
        opts.space_window,
        opts.residual_threshold,
    )?;
    let a_eta = check_a_eta(mu, 1.0)?;
    Ok(AssumptionReport {
        a_eta,
        delta1,
        delta2,
        r1_holds,
        r2_holds: delta2 > 0.0,
        fits: vec![fit1, fit2],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::{integrate, QuadOptions};

    fn heat1() -> KernelModel {
        KernelModel::heat(1).unwrap()
    }

    #[test]
    fn dimension_rules() {
        assert!(KernelModel::wave(3).is_err());
        assert!(KernelModel::heat(3).is_ok());
        assert!(KernelModel::heat(4).is_err());
    }

    #[test]
    fn heat_value_at_unit_normalisation() {
        let t = 1.0 / (2.0 * PI);
        assert!((heat1().kernel_value(t, &[0.0]).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn wave_values() {
        let w = KernelModel::wave(1).unwrap();
        assert_eq!(w.kernel_value(1.0, &[0.5]).unwrap(), 0.5);
        assert_eq!(w.kernel_value(1.0, &[1.5]).unwrap(), 0.0);
        let w2 = KernelModel::wave(2).unwrap();
        assert!(matches!(
            w2.kernel_value(1.0, &[0.6, 0.8]),
            Err(Error::SingularPoint { .. })
        ));
        assert!(w2.kernel_value(1.0, &[0.1, 0.1]).unwrap() > 0.0);
    }

    #[test]
    fn heat_kernel_has_unit_mass() {
        let k = heat1();
        let r = integrate(|x| k.kernel_value(0.1, &[x]).unwrap(), -10.0, 10.0, QuadOptions::default());
        assert!((r.value - 1.0).abs() < 1e-8);
    }

    #[test]
    fn wave2_kernel_mass_equals_t() {
        // ∫ W²_t = t (symbol at ξ = 0).
        let w2 = KernelModel::wave(2).unwrap();
        let t = 0.7;
        let r = crate::quad::integrate_left_singular(
            |u| {
                let rho = t - u;
                2.0 * PI * rho * w2.kernel_value(t, &[rho, 0.0]).unwrap()
            },
            0.0,
            t,
            QuadOptions::default(),
        );
        assert!((r.value - t).abs() < 1e-8, "{}", r.value);
    }

    #[test]
    fn symbol_examples() {
        assert_eq!(heat1().fourier_symbol(0.0, &[3.0]).unwrap(), 1.0);
        assert!((heat1().fourier_symbol(2.0, &[1.0]).unwrap() - (-1f64).exp()).abs() < 1e-15);
        let w = KernelModel::wave(1).unwrap();
        assert!(w.fourier_symbol(1.0, &[PI]).unwrap().abs() < 1e-15);
        assert_eq!(w.fourier_symbol(0.8, &[0.0]).unwrap(), 0.8);
        assert!(heat1().fourier_symbol(-1.0, &[0.0]).is_err());
    }

    #[test]
    fn wave_symbol_is_transform_of_box() {
        // ∫_{-s}^{s} ½ e^{-iξx} dx = sin(sξ)/ξ.
        let w = KernelModel::wave(1).unwrap();
        let (s, xi) = (1.3, 2.1);
        let r = integrate(|x| 0.5 * (xi * x).cos(), -s, s, QuadOptions::default());
        assert!((r.value - w.fourier_symbol(s, &[xi]).unwrap()).abs() < 1e-13);
    }

    #[test]
    fn integrated_symbol_small_argument_branches_are_continuous() {
        for k in [heat1(), KernelModel::wave(1).unwrap()] {
            let t = 0.9;
            for &r in &[1e-5, 1e-4, 0.049 / t, 0.051 / t, 0.3] {
                let quad = integrate(|s| k.symbol_radial(s, r).powi(2), 0.0, t, QuadOptions::default());
                let closed = k.integrated_symbol_sq(t, r);
                assert!((closed - quad.value).abs() < 1e-12 * quad.value.max(1.0), "{r}: {closed} vs {}", quad.value);
            }
        }
    }

    #[test]
    fn zero_measure_gives_zero() {
        let mu = SpectralMeasure::zero(1);
        assert_eq!(heat1().j_function(&mu, 0.5).unwrap(), 0.0);
        let c = check_a_eta(&mu, 0.5).unwrap();
        assert_eq!(c.value, Some(0.0));
        assert!(!c.divergent);
    }

    #[test]
    fn nu_diverges_for_heat_in_two_dimensions() {
        let k = KernelModel::heat(2).unwrap();
        let mu = SpectralMeasure::white(2);
        assert!(matches!(k.nu(&mu, 1.0), Err(Error::Divergent(_))));
    }

    #[test]
    fn wave_two_dimensional_white_noise_j_diverges() {
        // |FS|² ~ 1/r² against r dr: logarithmic divergence.
        let k = KernelModel::wave(2).unwrap();
        let mu = SpectralMeasure::white(2);
        assert!(matches!(k.j_function(&mu, 1.0), Err(Error::Divergent(_))));
    }

    #[test]
    fn window_needs_six_points() {
        let err = exponent_from_increments("time", |h| Ok(h), (1.0, 8.0), 0.1);
        assert!(matches!(err, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn noisy_increments_are_rejected() {
        let err = exponent_from_increments(
            "time",
            |h| Ok(h * if (h.log2().round() as i64) % 2 == 0 { 1.0 } else { 10.0 }),
            (1.0, 64.0),
            0.05,
        );
        assert!(matches!(err, Err(Error::ExponentUndetermined { .. })));
    }
}
