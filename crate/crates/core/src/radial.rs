//! Integrals of radial functions against a spectral measure on ℝ^d.
//!
//! `∫ μ(dξ) F(|ξ|) = ω_d ∫_0^∞ g(r) F(r) r^{d-1} dr` is evaluated with
//! adaptive quadrature on `[0, R]` plus an asymptotic tail beyond `R`:
//! a power-law estimate for the non-oscillating part of F and two terms of
//! integration by parts for each oscillating part. `R` doubles until the
//! uncertainty of the tail is negligible or the tail exponent shows that
//! the integral diverges.

use crate::error::{Error, Result};
use crate::noise::SpectralMeasure;
use crate::quad::{integrate, integrate_left_singular, QuadOptions};
use crate::special::sphere_area;

/// `amplitude(r) · cos(frequency · r + phase)`, one oscillating part of F
/// for large r.
pub(crate) struct Oscillation<'a> {
    pub amplitude: &'a dyn Fn(f64) -> f64,
    pub frequency: f64,
    pub phase: f64,
}

pub(crate) struct RadialIntegrand<'a> {
    /// F(r).
    pub value: &'a dyn Fn(f64) -> f64,
    /// Non-oscillating part of F for large r.
    pub envelope: &'a dyn Fn(f64) -> f64,
    /// F − envelope for large r, as a sum of oscillating terms.
    pub oscillations: &'a [Oscillation<'a>],
    /// Radius beyond which F is in its asymptotic regime.
    pub scale: f64,
    /// Optional fast oscillating part of F, exact for `r >= start`. Once its
    /// tail is negligible only `F − fast` is integrated further out, with
    /// panels sized by the remaining (slow) oscillations.
    pub fast: Option<FastPart<'a>>,
}

pub(crate) struct FastPart<'a> {
    pub oscillation: Oscillation<'a>,
    pub start: f64,
}

const REL_TOL: f64 = 1e-10;
const MAX_DOUBLINGS: usize = 60;

pub(crate) fn radial_integral(mu: &SpectralMeasure, f: &RadialIntegrand<'_>) -> Result<f64> {
    let d = mu.dimension;
    let omega = sphere_area(d);
    let jac = |r: f64| mu.density(r) * r.powi(d as i32 - 1);
    let weight = |r: f64| {
        if r == 0.0 {
            return 0.0;
        }
        let v = jac(r) * (f.value)(r);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    let env = |r: f64| jac(r) * (f.envelope)(r);
    let opts = QuadOptions {
        abs_tol: 1e-300,
        rel_tol: 1e-12,
        max_intervals: 2000,
    };
    let slow_freq = f
        .oscillations
        .iter()
        .map(|o| o.frequency)
        .fold(0.0, f64::max);
    let mut max_freq = f
        .fast
        .as_ref()
        .map_or(slow_freq, |p| slow_freq.max(p.oscillation.frequency));
    // Tail estimate and bound of the fast part once it has been split off.
    let mut fast_tail: Option<(f64, f64)> = if f.fast.is_none() { Some((0.0, 0.0)) } else { None };
    let slow_weight = |r: f64| {
        let o = &f.fast.as_ref().expect("fast part present").oscillation;
        let v = jac(r) * ((f.value)(r) - (o.amplitude)(r) * (o.frequency * r + o.phase).cos());
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };

    let mut total = integrate_left_singular(weight, 0.0, 1.0, opts).value;
    let mut r = 1.0;
    let mut prev_exponent: Option<f64> = None;
    for _ in 0..MAX_DOUBLINGS {
        let next = 2.0 * r;
        let panels = ((next - r) * max_freq / std::f64::consts::PI).ceil().max(1.0) as usize;
        let width = (next - r) / panels as f64;
        let split = fast_tail.is_some() && f.fast.is_some();
        for p in 0..panels {
            let a = r + p as f64 * width;
            total += if split {
                integrate(slow_weight, a, a + width, opts).value
            } else {
                integrate(weight, a, a + width, opts).value
            };
        }
        r = next;
        if let (None, Some(fp)) = (fast_tail, f.fast.as_ref()) {
            if r >= fp.start {
                let (est, bound) = oscillation_tail(std::slice::from_ref(&fp.oscillation), &jac, r);
                if bound <= 0.1 * REL_TOL * total.abs() {
                    fast_tail = Some((est, bound));
                    max_freq = slow_freq;
                }
            }
        }
        let Some((fast_est, fast_bound)) = fast_tail else {
            continue;
        };

        let e1 = env(r);
        let e0 = env(0.5 * r);
        let osc = oscillation_tail(f.oscillations, &jac, r);
        if e1 == 0.0 && e0 == 0.0 && osc.0 == 0.0 && osc.1 == 0.0 {
            if (f.value)(r) == 0.0 || jac(r) == 0.0 {
                return Ok(omega * total);
            }
            continue;
        }
        let (tail, exponent, drift) = if e1 == 0.0 {
            (0.0, f64::INFINITY, 0.0)
        } else {
            let exponent = (e0 / e1).log2();
            let drift = prev_exponent.map_or(f64::INFINITY, |p: f64| (p - exponent).abs());
            prev_exponent = Some(exponent);
            let tail = if exponent > 1.0 {
                e1 * r / (exponent - 1.0)
            } else {
                f64::INFINITY
            };
            (tail, exponent, drift)
        };
        if r >= 64.0 * f.scale.max(1.0) && exponent <= 1.0 && drift < 0.05 {
            return Err(Error::Divergent(format!(
                "spectral tail decays like r^-{exponent:.3} (needs > 1) for {}",
                mu.describe()
            )));
        }
        if !tail.is_finite() {
            continue;
        }
        let scale = total.abs().max(f64::MIN_POSITIVE);
        let envelope_uncertainty = if tail < REL_TOL * scale {
            tail
        } else {
            tail * drift / (exponent - 1.0).max(1e-3)
        };
        let uncertainty = envelope_uncertainty + osc.1 + fast_bound;
        if r >= f.scale && uncertainty < REL_TOL * scale {
            return Ok(omega * (total + tail + osc.0 + fast_est));
        }
    }
    Err(Error::Divergent(format!(
        "tail of the spectral integral not resolved up to |xi| = {r:e} for {}",
        mu.describe()
    )))
}

/// Tail `∫_R^∞ jac(r) a(r) cos(ωr + φ) dr` summed over oscillations by two
/// integrations by parts; returns `(estimate, remainder bound)`.
fn oscillation_tail(oscs: &[Oscillation<'_>], jac: &dyn Fn(f64) -> f64, r: f64) -> (f64, f64) {
    let mut est = 0.0;
    let mut bound = 0.0;
    for o in oscs {
        let h = |x: f64| jac(x) * (o.amplitude)(x);
        let step = 1e-3 * r;
        let (hm, h0, hp) = (h(r - step), h(r), h(r + step));
        let d1 = (hp - hm) / (2.0 * step);
        let d2 = (hp - 2.0 * h0 + hm) / (step * step);
        let w = o.frequency;
        let arg = w * r + o.phase;
        est += -h0 * arg.sin() / w - d1 * arg.cos() / (w * w);
        bound += 2.0 * d2.abs() / (w * w * w);
        if !est.is_finite() {
            return (0.0, f64::INFINITY);
        }
    }
    (est, bound)
}
