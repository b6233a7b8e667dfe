//! Special functions needed by the radial spectral integrals.

use std::f64::consts::PI;

pub use statrs::function::gamma::gamma;

/// Bessel function of the first kind of order zero.
///
/// Polynomial and asymptotic fits from Abramowitz & Stegun 9.4.1 / 9.4.3
/// (absolute error below 1e-7).
pub fn bessel_j0(x: f64) -> f64 {
    let ax = x.abs();
    if ax <= 3.0 {
        let y = (x / 3.0) * (x / 3.0);
        1.0 + y
            * (-2.249_999_7
                + y * (1.265_620_8
                    + y * (-0.316_386_6 + y * (0.044_447_9 + y * (-0.003_944_4 + y * 0.000_210_0)))))
    } else {
        let y = 3.0 / ax;
        let f0 = 0.797_884_56
            + y * (-0.000_000_77
                + y * (-0.005_527_40
                    + y * (-0.000_095_12
                        + y * (0.001_372_37 + y * (-0.000_728_05 + y * 0.000_144_76)))));
        let theta0 = ax - 0.785_398_16
            + y * (-0.041_663_97
                + y * (-0.000_039_54
                    + y * (0.002_625_73
                        + y * (-0.000_541_25 + y * (-0.000_293_33 + y * 0.000_135_58)))));
        f0 * theta0.cos() / ax.sqrt()
    }
}

/// Average of `cos(<xi, z>)` over directions of `xi` with `|xi| * |z| = s`
/// in dimension `d`.
pub fn radial_cos_average(d: usize, s: f64) -> f64 {
    match d {
        1 => s.cos(),
        2 => bessel_j0(s),
        3 => {
            if s.abs() < 1e-4 {
                1.0 - s * s / 6.0
            } else {
                s.sin() / s
            }
        }
        _ => unreachable!("dimension checked by callers"),
    }
}

/// `1 - radial_cos_average(d, s)` without cancellation for small `s`.
pub fn one_minus_radial_cos_average(d: usize, s: f64) -> f64 {
    let s = s.abs();
    match d {
        1 => 2.0 * (s / 2.0).sin().powi(2),
        2 if s < 3.0 => {
            // Σ_{k≥1} (-1)^{k+1} (s²/4)^k / (k!)².
            let q = s * s / 4.0;
            let mut term = 1.0;
            let mut sum = 0.0;
            for k in 1..40 {
                term *= -q / (k * k) as f64;
                sum -= term;
                if term.abs() < 1e-18 * sum.abs() {
                    break;
                }
            }
            sum
        }
        2 => 1.0 - bessel_j0(s),
        3 if s < 0.5 => {
            // Σ_{k≥1} (-1)^{k+1} s^{2k} / (2k+1)!.
            let q = s * s;
            let mut term = 1.0;
            let mut sum = 0.0;
            for k in 1..20 {
                term *= -q / ((2 * k) * (2 * k + 1)) as f64;
                sum -= term;
            }
            sum
        }
        3 => 1.0 - s.sin() / s,
        _ => unreachable!("dimension checked by callers"),
    }
}

/// Large-argument expansion of `radial_cos_average(d, s)` as
/// `(amplitude, phase)` pairs with `Σ amplitude · cos(s + phase)`.
pub fn radial_cos_asymptotic(d: usize, s: f64) -> [(f64, f64); 2] {
    match d {
        1 => [(1.0, 0.0), (0.0, 0.0)],
        2 => {
            let a = (2.0 / (PI * s)).sqrt();
            [
                (a * (1.0 - 9.0 / (128.0 * s * s)), -PI / 4.0),
                (a / (8.0 * s), -3.0 * PI / 4.0),
            ]
        }
        3 => [(1.0 / s, -PI / 2.0), (0.0, 0.0)],
        _ => unreachable!("dimension checked by callers"),
    }
}

/// Surface area of the unit sphere in ℝ^d.
pub fn sphere_area(d: usize) -> f64 {
    2.0 * PI.powf(d as f64 / 2.0) / gamma(d as f64 / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::{integrate, QuadOptions};

    #[test]
    fn j0_matches_integral_representation() {
        for &x in &[0.0, 0.5, 2.0, 2.9, 3.1, 7.5, 25.0] {
            let r = integrate(|th: f64| (x * th.sin()).cos() / PI, 0.0, PI, QuadOptions::default());
            assert!((bessel_j0(x) - r.value).abs() < 2e-7, "x={x}");
        }
    }

    #[test]
    fn one_minus_average_is_consistent() {
        for d in 1..=3 {
            for &x in &[0.4, 1.0, 2.5, 3.5, 10.0] {
                let a = one_minus_radial_cos_average(d, x);
                let b = 1.0 - radial_cos_average(d, x);
                assert!((a - b).abs() < 2e-7, "d={d} x={x}");
            }
            let tiny = one_minus_radial_cos_average(d, 1e-6);
            let expect = 1e-12 / (2.0 * d as f64);
            assert!((tiny - expect).abs() < 1e-6 * expect, "d={d}: {tiny}");
        }
    }

    #[test]
    fn asymptotic_forms() {
        for d in 1..=3 {
            let x = 60.0;
            let approx: f64 = radial_cos_asymptotic(d, x).iter().map(|(a, p)| a * (x + p).cos()).sum();
            assert!((approx - radial_cos_average(d, x)).abs() < 1e-6, "d={d}");
        }
    }

    #[test]
    fn sphere_areas() {
        assert!((sphere_area(1) - 2.0).abs() < 1e-12);
        assert!((sphere_area(2) - 2.0 * PI).abs() < 1e-12);
        assert!((sphere_area(3) - 4.0 * PI).abs() < 1e-12);
    }
}
