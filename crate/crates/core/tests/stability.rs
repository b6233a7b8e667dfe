use spdelab::expr::Expression;
use spdelab::solver::{CoefficientFn, Coefficients};
use spdelab::stability::*;
use spdelab::{Grid, KernelModel, SpectralMeasure};

fn coef(src: &str) -> CoefficientFn {
    CoefficientFn::from_expression(Expression::coefficient(src, 1).unwrap())
}

fn heat_white(grid: Grid, c: Coefficients, experiment: Experiment) -> ExperimentConfig {
    ExperimentConfig::new(KernelModel::heat(1).unwrap(), SpectralMeasure::white(1), grid, c, experiment)
}

fn small_grid() -> Grid {
    Grid::new(1, 2.0 * std::f64::consts::PI, 32, 0.5, 32).unwrap()
}

fn sin_sigma() -> Coefficients {
    Coefficients::new(coef("0.5*sin(u)"), CoefficientFn::zero())
}

#[test]
fn mollified_constant_is_unchanged() {
    let f = CoefficientFn::constant(2.5);
    for scale in [1.0, 0.1, 0.01] {
        let g = mollify_coefficient(&f, scale, 3.0).unwrap();
        for u in [-5.0, -1.0, 0.0, 0.3, 7.0] {
            assert!((g.eval(0.0, &[0.0], u) - 2.5).abs() < 1e-12);
        }
    }
}

/// Midpoint-rule convolution of |·| with the bump, written out directly.
fn convolved_abs(u: f64, scale: f64, cap: f64) -> f64 {
    let n = 20_000;
    let (mut num, mut den) = (0.0, 0.0);
    for j in 0..n {
        let s = -1.0 + (j as f64 + 0.5) * 2.0 / n as f64;
        let w = (-1.0 / (1.0 - s * s)).exp();
        num += w * (u - s * scale).clamp(-cap, cap).abs();
        den += w;
    }
    num / den
}

#[test]
fn mollified_abs() {
    let f = coef("abs(u)");
    let g = mollify_coefficient(&f, 0.1, 2.0).unwrap();
    assert!(g.declared_lipschitz.unwrap() <= 1.0 + 1e-9);
    for i in 0..=400 {
        let u = -2.0 + i as f64 * 0.01;
        let v = g.eval(0.0, &[0.0], u);
        assert!((v - convolved_abs(u, 0.1, 2.0)).abs() < 1e-4, "u = {u}");
        if u.abs() >= 0.2 {
            assert!((v - u.abs()).abs() < 0.05, "u = {u}: {v}");
        }
        let h = 1e-4;
        let slope = (g.eval(0.0, &[0.0], u + h) - v) / h;
        assert!(slope.abs() <= 1.0 + 1e-6);
    }
    let far = g.eval(0.0, &[0.0], 10.0);
    assert!((far - 2.0).abs() < 1e-12);
}

#[test]
fn mollifier_converges_as_scale_shrinks() {
    let f = coef("abs(u) + sin(3*u)");
    let cap = 1.5;
    let distance = |scale: f64| {
        let g = mollify_coefficient(&f, scale, cap).unwrap();
        (0..=600)
            .map(|i| -cap + i as f64 * 2.0 * cap / 600.0)
            .map(|u| (g.eval(0.0, &[0.0], u) - f.eval(0.0, &[0.0], u)).abs())
            .fold(0.0f64, f64::max)
    };
    let ds: Vec<f64> = [0.4, 0.2, 0.1, 0.05, 0.025].iter().map(|&s| distance(s)).collect();
    assert!(ds.windows(2).all(|w| w[1] < w[0]), "{ds:?}");
}

#[test]
fn mollifier_rejects_bad_input() {
    let f = coef("u");
    assert!(mollify_coefficient(&f, 0.0, 1.0).is_err());
    assert!(mollify_coefficient(&f, 0.1, -1.0).is_err());
    let nan = CoefficientFn::new("nan", |_, _, _| f64::NAN);
    assert!(mollify_coefficient(&nan, 0.1, 1.0).is_err());
}

#[test]
fn zero_perturbation_gives_zero_errors() {
    let base = sin_sigma();
    let schedule = (1..=4)
        .map(|n| CoefficientPerturbation {
            index: n as f64,
            coefficients: base.clone(),
            distance: 0.0,
        })
        .collect();
    let cfg = heat_white(small_grid(), base, Experiment::CoefficientStability { schedule });
    let report = run_coefficient_stability(&cfg).unwrap();
    for r in &report.rows {
        assert_eq!(r.sup_moment, 0.0);
        assert_eq!(r.holder_moment, 0.0);
        assert_eq!(r.sup_norm_sq, 0.0);
    }
    assert!(report.fit.is_none());
}

#[test]
fn coefficient_stability_rate() {
    let base = sin_sigma();
    for (p, band) in [(2.0, 0.15), (4.0, 0.20)] {
        let schedule = shifted_schedule(&base, 1.0, &[2, 4, 8, 16, 32]);
        let mut cfg = heat_white(small_grid(), base.clone(), Experiment::CoefficientStability { schedule });
        cfg.p = p;
        cfg.replicas = 200;
        cfg.master_seed = 11;
        let report = run_coefficient_stability(&cfg).unwrap();
        let fit = report.fit.unwrap();
        println!("p = {p}: slope {:.4} ± {:.4}, chain {:?}", fit.slope, fit.standard_error, report.lemma_chain);
        assert_eq!(fit.points, 5);
        assert!((fit.slope - p).abs() <= band * p, "slope {}", fit.slope);
        assert!(fit.ci_low <= fit.slope && fit.slope <= fit.ci_high);
        assert_eq!(report.monotone, Some(true));
        assert!(report.lemma_chain.unwrap().holds);
        for (r, n) in report.rows.iter().zip([2.0, 4.0, 8.0, 16.0, 32.0]) {
            assert_eq!(r.distance, 1.0 / n);
            assert_eq!(r.non_converged, 0);
        }
    }
}

#[test]
fn slope_needs_four_points() {
    let base = sin_sigma();
    let schedule = shifted_schedule(&base, 1.0, &[2, 4, 8]);
    let cfg = heat_white(small_grid(), base, Experiment::CoefficientStability { schedule });
    let report = run_coefficient_stability(&cfg).unwrap();
    assert!(report.fit.is_none());
    assert_eq!(report.rows.len(), 3);
}

#[test]
fn config_validation() {
    let base = sin_sigma();
    let schedule = shifted_schedule(&base, 1.0, &[2, 4, 8, 16]);
    let mut cfg = heat_white(small_grid(), base.clone(), Experiment::CoefficientStability { schedule });
    cfg.replicas = 99;
    assert!(cfg.validate().is_err());
    cfg.replicas = 100;
    cfg.p = 1.5;
    assert!(cfg.validate().is_err());
    cfg.p = 2.0;
    assert!(cfg.validate().is_ok());
    let mut reversed = shifted_schedule(&base, 1.0, &[4, 2]);
    reversed.truncate(2);
    cfg.experiment = Experiment::CoefficientStability { schedule: reversed };
    assert!(cfg.validate().is_err());
    cfg.experiment = Experiment::NoiseStability {
        epsilons: vec![0.5, 1.5],
        threshold: Threshold::Absolute(1.0),
    };
    assert!(cfg.validate().is_err());
    cfg.experiment = Experiment::PicardConvergence { iterations: 7 };
    assert!(cfg.validate().is_err());
    assert!(run_noise_stability(&cfg).is_err());
}

fn lambda_family() -> ParameterFamily {
    ParameterFamily::from_sources("lambda*sin(u)", "0", "lambda", 1).unwrap()
}

#[test]
fn parameter_continuity_decays() {
    let lambdas: Vec<f64> = std::iter::once(1.0).chain((1..=6).map(|k| 1.0 + 0.5f64.powi(k))).collect();
    let mut cfg = heat_white(
        small_grid(),
        Coefficients::zero(),
        Experiment::ParameterContinuity {
            lambda0: 1.0,
            lambdas,
            family: lambda_family(),
        },
    );
    cfg.master_seed = 5;
    let report = run_parameter_continuity(&cfg).unwrap();
    let errs: Vec<f64> = report.rows.iter().map(|r| r.sup_norm_sq).collect();
    println!("continuity errors {errs:?}");
    assert_eq!(errs[0], 0.0);
    assert!(errs[1..].windows(2).all(|w| w[1] < w[0]));
    assert_eq!(report.monotone, Some(true));
    // Field scale: E‖u^{λ₀}‖²_∞ is at least φ(λ₀)² = 1.
    assert!(errs[6] < 1e-2);
}

#[test]
fn constant_family_gives_zero() {
    let family = ParameterFamily::from_sources("0.3*sin(u)", "0.1", "2", 1).unwrap();
    let cfg = heat_white(
        small_grid(),
        Coefficients::zero(),
        Experiment::ParameterContinuity {
            lambda0: 0.0,
            lambdas: vec![-1.0, 0.5, 3.0],
            family,
        },
    );
    let report = run_parameter_continuity(&cfg).unwrap();
    assert!(report.rows.iter().all(|r| r.sup_norm_sq == 0.0));
}

#[test]
fn family_rejects_u_in_initial_value() {
    assert!(ParameterFamily::from_sources("sin(u)", "0", "u + lambda", 1).is_err());
    assert!(ParameterFamily::from_sources("sin(u) + mu", "0", "1", 1).is_err());
}

fn noise_config(epsilons: Vec<f64>, threshold: Threshold, replicas: usize) -> ExperimentConfig {
    let c = Coefficients::new(coef("1 + 0.5*sin(u)"), CoefficientFn::zero());
    let mut cfg = heat_white(small_grid(), c, Experiment::NoiseStability { epsilons, threshold });
    cfg.replicas = replicas;
    cfg.master_seed = 3;
    cfg
}

#[test]
fn noise_stability_probe() {
    let cfg = noise_config(vec![0.4, 0.2, 0.1, 0.05, 0.0], Threshold::MedianFraction(0.1), 500);
    let report = run_noise_stability(&cfg).unwrap();
    let p: Vec<f64> = report.rows.iter().map(|r| r.exceedance.unwrap()).collect();
    println!("exceedance {p:?}, threshold {:?}", report.threshold);
    assert!(p.windows(2).all(|w| w[1] <= w[0]));
    assert!(p[3] < 0.05);
    assert_eq!(p[4], 0.0);
    assert_eq!(report.rows[4].holder_moment, 0.0);
    assert!(report.notes.iter().any(|n| n.contains("bit for bit")));
}

#[test]
fn infinite_threshold_never_exceeded() {
    let cfg = noise_config(vec![1.0, 0.5], Threshold::Absolute(f64::INFINITY), 20);
    let report = run_noise_stability(&cfg).unwrap();
    assert!(report.rows.iter().all(|r| r.exceedance == Some(0.0)));
}

#[test]
fn degenerate_sigma_is_flagged() {
    let mut cfg = noise_config(vec![0.5], Threshold::MedianFraction(0.1), 10);
    cfg.coefficients = Coefficients::new(coef("0.5*sin(u)"), CoefficientFn::zero());
    let report = run_noise_stability(&cfg).unwrap();
    assert!(report.notes.iter().any(|n| n.contains("vanishes")));
}

fn picard_config(c: Coefficients) -> ExperimentConfig {
    let mut cfg = heat_white(small_grid(), c, Experiment::PicardConvergence { iterations: 10 });
    cfg.master_seed = 9;
    cfg
}

#[test]
fn picard_trivial_cases() {
    let report = run_picard_convergence(&picard_config(Coefficients::zero())).unwrap();
    assert!(report.picard.unwrap().d.iter().all(|&d| d == 0.0));

    let report = run_picard_convergence(&picard_config(Coefficients::additive(1.0))).unwrap();
    let t = report.picard.unwrap();
    assert!(t.d[0] > 0.0);
    assert!(t.d[1] <= 1e-20 * t.d[0], "{:?}", t.d);
}

#[test]
fn picard_factorial_decay() {
    let c = Coefficients::new(coef("0.5*sin(u) + 0.5"), CoefficientFn::zero());
    let report = run_picard_convergence(&picard_config(c)).unwrap();
    let t = report.picard.unwrap();
    println!("D = {:?}\nS = {:?}\nprofile = {:?}\nbeta = {} ({:?}), theta = {}, c_J = {}", t.d, t.s, t.profile, t.beta, t.beta_theory, t.theta, t.c_j);
    assert!(t.monotone_from_2);
    assert!(t.ratio_6_1.unwrap() < 1e-3);
    assert!(t.below_profile);
    assert!(t.beta >= t.beta_theory.unwrap());
    assert!(t.implication_holds);
    assert!((t.theta - 0.5).abs() < 1e-3);
    assert!((t.c_j - 0.5 / std::f64::consts::PI.sqrt()).abs() < 1e-3);
}

#[test]
fn reports_are_reproducible() {
    let base = sin_sigma();
    let schedule = shifted_schedule(&base, 1.0, &[2, 4, 8, 16]);
    let mut cfg = heat_white(small_grid(), base, Experiment::CoefficientStability { schedule });
    cfg.replicas = 100;
    cfg.master_seed = 77;
    let a = run_experiment(&cfg).unwrap();
    let b = run_experiment(&cfg).unwrap();
    assert_eq!(a, b);
    let mut csv_a = Vec::new();
    let mut csv_b = Vec::new();
    a.write_csv(&mut csv_a).unwrap();
    b.write_csv(&mut csv_b).unwrap();
    assert_eq!(csv_a, csv_b);
    let back: StabilityReport = serde_json::from_str(&a.to_json().unwrap()).unwrap();
    assert_eq!(back.rows, a.rows);
}
