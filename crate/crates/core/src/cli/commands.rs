use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::{json, Value};

use super::config::Config;
use super::record::{now, sha256_hex, version_string, ManifestEntry, RunRecord};
use crate::analysis::{estimate_holder_exponents, holder_norm};
use crate::error::{Error, Result};
use crate::kernels::{check_a_eta, estimate_deltas, DeltaOptions};
use crate::noise::{covariance_functional, empirical_covariance, sample_noise, TestFunction, MIN_REPLICAS};
use crate::seeding::{derive_seed, stream};
use crate::solver::{PicardOutcome, Scheme, SolutionField};
use crate::stability::{run_experiment, ExperimentKind, StabilityReport};

/// Which subcommand is running; `Run` takes the kind from the config.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Run,
    Assumptions,
    NoiseCheck,
    Solve,
    Picard,
    Stability,
    Holder,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Run => "run",
            Command::Assumptions => "assumptions",
            Command::NoiseCheck => "noise-check",
            Command::Solve => "solve",
            Command::Picard => "picard",
            Command::Stability => "stability",
            Command::Holder => "holder",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [
            Command::Run,
            Command::Assumptions,
            Command::NoiseCheck,
            Command::Solve,
            Command::Picard,
            Command::Stability,
            Command::Holder,
        ]
        .into_iter()
        .find(|c| c.name() == name)
    }
}

/// Command-line values that replace config entries.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub replicas: Option<usize>,
    pub out_dir: Option<PathBuf>,
}

/// Applies the subcommand and overrides to `cfg` and checks the result.
pub fn effective_config(command: Command, mut cfg: Config, o: &Overrides) -> Result<Config> {
    let kind = cfg.experiment.kind.as_str();
    let forced = match command {
        Command::Run => None,
        Command::Assumptions => Some("assumptions"),
        Command::NoiseCheck => Some("noise_check"),
        Command::Solve => Some("solve"),
        Command::Picard => Some("picard"),
        Command::Holder => Some("holder"),
        Command::Stability => {
            if !matches!(kind, "coefficient_stability" | "parameter_continuity" | "noise_stability") {
                return Err(Error::invalid(format!(
                    "'stability' needs kind coefficient_stability, parameter_continuity or noise_stability, not '{kind}'"
                )));
            }
            None
        }
    };
    if let Some(k) = forced {
        cfg.experiment.kind = k.into();
    }
    if let Some(s) = o.seed {
        cfg.experiment.seed = s;
    }
    if let Some(r) = o.replicas {
        cfg.experiment.replicas = r;
    }
    if let Some(d) = &o.out_dir {
        cfg.output.dir = d.to_string_lossy().into_owned();
    }
    cfg.validate()?;
    match cfg.experiment.kind.as_str() {
        "noise_check" if cfg.experiment.replicas < MIN_REPLICAS => {
            return Err(Error::invalid(format!(
                "noise-check needs at least {MIN_REPLICAS} replicas, got {}",
                cfg.experiment.replicas
            )))
        }
        "picard" | "coefficient_stability" | "parameter_continuity" | "noise_stability" => {
            cfg.experiment_config()?;
        }
        _ => {}
    }
    Ok(cfg)
}

struct Output {
    name: &'static str,
    bytes: Vec<u8>,
    metric: bool,
}

enum Verdict {
    Pass,
    Assertion(String),
    Numerical(Error),
}

struct Artifacts {
    files: Vec<Output>,
    summary: Value,
    lines: Vec<String>,
    verdict: Verdict,
}

impl Artifacts {
    fn new(summary: Value) -> Self {
        Self {
            files: Vec::new(),
            summary,
            lines: Vec::new(),
            verdict: Verdict::Pass,
        }
    }

    fn table(&mut self, name: &'static str, bytes: Vec<u8>) {
        self.files.push(Output {
            name,
            bytes,
            metric: true,
        });
    }

    fn other(&mut self, name: &'static str, bytes: Vec<u8>) {
        self.files.push(Output {
            name,
            bytes,
            metric: false,
        });
    }

    fn check(&mut self, assert: bool, ok: bool, what: impl FnOnce() -> String) {
        if assert && !ok && matches!(self.verdict, Verdict::Pass) {
            self.verdict = Verdict::Assertion(what());
        }
    }
}

/// What a finished run produced: the record (already written) and its
/// summary lines.
pub struct RunOutcome {
    pub record: RunRecord,
    pub lines: Vec<String>,
    /// Set for exit codes 3 and 4.
    pub message: Option<String>,
}

/// Runs `cfg` (already passed through [`effective_config`]) and writes every
/// output plus `run.json` into the configured directory.
pub fn execute(command: Command, cfg: &Config) -> Result<RunOutcome> {
    let started = now();
    let snapshot = cfg.snapshot()?;
    let dir = PathBuf::from(&cfg.output.dir);
    let mut art = match cfg.experiment.kind.as_str() {
        "assumptions" => assumptions(cfg)?,
        "noise_check" => noise_check(cfg)?,
        "solve" => solve(cfg)?,
        "holder" => holder(cfg)?,
        _ => stability(cfg)?,
    };
    if cfg.output.plot {
        if let Some(script) = plot_script(&cfg.experiment.kind, cfg.kernel.dimension) {
            art.other("plot.gp", script.into_bytes());
        }
    }
    std::fs::create_dir_all(&dir)?;
    let mut manifest = Vec::new();
    for f in &art.files {
        std::fs::write(dir.join(f.name), &f.bytes)?;
        manifest.push(ManifestEntry {
            path: f.name.into(),
            sha256: sha256_hex(&f.bytes),
            metric: f.metric,
        });
    }
    let (exit_code, message) = match art.verdict {
        Verdict::Pass => (0, None),
        Verdict::Numerical(e) => (3, Some(e.to_string())),
        Verdict::Assertion(m) => (4, Some(format!("assertion failed: {m}"))),
    };
    let mut summary = art.summary;
    if let (Some(m), Value::Object(map)) = (&message, &mut summary) {
        map.insert("failure".into(), Value::String(m.clone()));
    }
    let record = RunRecord {
        version: version_string(),
        command: command.name().into(),
        config_hash: sha256_hex(snapshot.as_bytes()),
        config: snapshot,
        master_seed: cfg.experiment.seed,
        started,
        finished: now(),
        exit_code,
        manifest,
        summary,
        warnings: cfg.warnings(),
    };
    record.write(&dir)?;
    Ok(RunOutcome {
        record,
        lines: art.lines,
        message,
    })
}

fn base_summary(cfg: &Config) -> Result<Value> {
    let mu = cfg.measure()?;
    Ok(json!({
        "kind": cfg.experiment.kind,
        "kernel": cfg.kernel()?.name(),
        "measure": mu.describe(),
        "zero_mode_dropped": mu.zero_mode_suppressed(),
    }))
}

fn insert(summary: &mut Value, key: &str, v: Value) {
    if let Value::Object(m) = summary {
        m.insert(key.into(), v);
    }
}

fn csv(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn assumptions(cfg: &Config) -> Result<Artifacts> {
    let (k, mu, grid) = (cfg.kernel()?, cfg.measure()?, cfg.grid()?);
    let eta = cfg.experiment.eta;
    let a = check_a_eta(&mu, eta)?;
    let opts = DeltaOptions {
        horizon: grid.horizon,
        ..DeltaOptions::default()
    };
    let rep = estimate_deltas(&k, &mu, &opts)?;
    let value = a.value.map_or(String::new(), |v| format!("{v:e}"));
    let mut table = String::from("quantity,value\n");
    let _ = writeln!(table, "eta,{eta:e}");
    let _ = writeln!(table, "a_eta,{value}");
    let _ = writeln!(table, "a_eta_divergent,{}", a.divergent);
    let _ = writeln!(table, "delta1,{:e}", rep.delta1);
    let _ = writeln!(table, "delta2,{:e}", rep.delta2);
    let _ = writeln!(table, "r1_holds,{}", rep.r1_holds);
    let _ = writeln!(table, "r2_holds,{}", rep.r2_holds);
    let mut fits = String::from("label,argument,value\n");
    for f in &rep.fits {
        for (x, y) in &f.table {
            let _ = writeln!(fits, "{},{x:e},{y:e}", f.label);
        }
    }
    let mut summary = base_summary(cfg)?;
    insert(&mut summary, "eta", json!(eta));
    insert(&mut summary, "a_eta", json!(a.value));
    insert(&mut summary, "a_eta_divergent", json!(a.divergent));
    insert(&mut summary, "delta1", json!(rep.delta1));
    insert(&mut summary, "delta2", json!(rep.delta2));
    insert(&mut summary, "r1_holds", json!(rep.r1_holds));
    insert(&mut summary, "r2_holds", json!(rep.r2_holds));
    let mut art = Artifacts::new(summary);
    art.lines.push(format!(
        "A_eta(eta={eta}) {}  delta1={:.4} delta2={:.4}  R1={} R2={}",
        if a.divergent { "divergent".into() } else { format!("= {value}") },
        rep.delta1,
        rep.delta2,
        rep.r1_holds,
        rep.r2_holds
    ));
    art.table("assumptions.csv", table.into_bytes());
    art.table("exponent_fits.csv", fits.into_bytes());
    art.check(cfg.experiment.assert, !a.divergent && rep.r1_holds && rep.r2_holds, || {
        format!("A_eta divergent={} R1={} R2={}", a.divergent, rep.r1_holds, rep.r2_holds)
    });
    Ok(art)
}

fn noise_check(cfg: &Config) -> Result<Artifacts> {
    let (mu, grid) = (cfg.measure()?, cfg.grid()?);
    let (seed, replicas) = (cfg.experiment.seed, cfg.experiment.replicas);
    let fields = (0..replicas as u64)
        .into_par_iter()
        .map(|r| sample_noise(&grid, &mu, derive_seed(seed, stream::PRIMARY, r)))
        .collect::<Result<Vec<_>>>()?;
    let d = grid.dimension;
    let (l, t) = (grid.length, grid.horizon);
    let centre = vec![l / 2.0; d];
    let mut shifted = centre.clone();
    shifted[0] += l / 8.0;
    let phi = TestFunction::gaussian(centre, l / 16.0, (0.0, t));
    let psi = TestFunction::gaussian(shifted, l / 16.0, (t / 4.0, t));
    let mut table = String::from("pair,estimate,standard_error,analytic,z\n");
    let mut summary = base_summary(cfg)?;
    let mut art_lines = Vec::new();
    let mut worst = 0.0f64;
    for (label, a, b) in [("phi_phi", &phi, &phi), ("phi_psi", &phi, &psi), ("psi_psi", &psi, &psi)] {
        let est = empirical_covariance(&fields, a, b)?;
        let exact = covariance_functional(&mu, a, b, t)?;
        let z = (est.estimate - exact) / est.standard_error;
        worst = worst.max(z.abs());
        let _ = writeln!(table, "{label},{:e},{:e},{exact:e},{z:.4}", est.estimate, est.standard_error);
        art_lines.push(format!(
            "{label}: empirical {:.6e} +- {:.2e}, analytic {exact:.6e}, z = {z:.2}",
            est.estimate, est.standard_error
        ));
    }
    insert(&mut summary, "replicas", json!(replicas));
    insert(&mut summary, "max_abs_z", json!(worst));
    let mut art = Artifacts::new(summary);
    art.lines = art_lines;
    art.table("noise_check.csv", table.into_bytes());
    art.check(cfg.experiment.assert, worst <= 4.0, || format!("|z| = {worst:.2} exceeds 4"));
    Ok(art)
}

/// Solves replica 0 of the primary stream.
fn single_solve(cfg: &Config) -> Result<PicardOutcome> {
    let (k, mu, grid) = (cfg.kernel()?, cfg.measure()?, cfg.grid()?);
    let noise = sample_noise(&grid, &mu, derive_seed(cfg.experiment.seed, stream::PRIMARY, 0))?;
    let scheme = Scheme::new(k, grid, cfg.solver_options()?)?;
    scheme.picard_solve(&cfg.coefficients()?, &noise, cfg.experiment.tol, cfg.experiment.max_iter)
}

fn not_converged(out: &PicardOutcome) -> Error {
    Error::NotConverged {
        iterations: out.iterations,
        gap: out.gaps.last().copied().unwrap_or(f64::NAN),
        tol: out.tol,
    }
}

fn gaps_table(out: &PicardOutcome) -> Vec<u8> {
    let mut s = String::from("n,gap\n");
    for (i, g) in out.gaps.iter().enumerate() {
        let _ = writeln!(s, "{},{g:e}", i + 1);
    }
    s.into_bytes()
}

fn final_profile(field: &SolutionField) -> Vec<u8> {
    let g = &field.grid;
    let mut s = String::from("point");
    for a in 1..=g.dimension {
        let _ = write!(s, ",x{a}");
    }
    s.push_str(",u\n");
    let last = field.row(g.time_steps);
    for (j, u) in last.iter().enumerate() {
        let _ = write!(s, "{j}");
        for x in g.point(j) {
            let _ = write!(s, ",{x:e}");
        }
        let _ = writeln!(s, ",{u:e}");
    }
    s.into_bytes()
}

fn solve(cfg: &Config) -> Result<Artifacts> {
    let out = single_solve(cfg)?;
    let mut summary = base_summary(cfg)?;
    insert(&mut summary, "iterations", json!(out.iterations));
    insert(&mut summary, "converged", json!(out.converged));
    insert(&mut summary, "last_gap", json!(out.gaps.last()));
    insert(&mut summary, "sup_norm", json!(out.field.sup_norm()));
    let mut art = Artifacts::new(summary);
    for (i, g) in out.gaps.iter().enumerate() {
        art.lines.push(format!("n={:<3} gap={g:.6e}", i + 1));
    }
    art.table("picard_gaps.csv", gaps_table(&out));
    art.table("final_profile.csv", final_profile(&out.field));
    let mut bin = Vec::new();
    out.field.write_to(&mut bin)?;
    art.other("solution.bin", bin);
    if !out.converged {
        art.verdict = Verdict::Numerical(not_converged(&out));
    }
    Ok(art)
}

fn holder(cfg: &Config) -> Result<Artifacts> {
    let out = single_solve(cfg)?;
    if !out.converged {
        return Err(not_converged(&out));
    }
    let grid = cfg.grid()?;
    let k = cfg.holder_box(&grid)?;
    let est = estimate_holder_exponents(&out.field, &k)?;
    let [g1, g2] = cfg.experiment.gamma;
    let norm = holder_norm(&out.field, g1, g2, &k)?;
    let mut summary = base_summary(cfg)?;
    insert(&mut summary, "gamma1_hat", json!(est.gamma1_hat));
    insert(&mut summary, "gamma2_hat", json!(est.gamma2_hat));
    insert(&mut summary, "holder_norm", json!(norm));
    let e = &cfg.experiment;
    let bands = if e.assert && (e.time_band.is_none() || e.space_band.is_none()) {
        let rep = estimate_deltas(
            &cfg.kernel()?,
            &cfg.measure()?,
            &DeltaOptions {
                horizon: grid.horizon,
                ..DeltaOptions::default()
            },
        )?;
        let t = e.time_band.unwrap_or([rep.delta1 - 0.1, rep.delta1 + 0.05]);
        let s = e.space_band.unwrap_or([rep.delta2 - 0.15, rep.delta2 + 0.05]);
        Some((t, s))
    } else {
        e.time_band.zip(e.space_band)
    };
    if let Some((t, s)) = bands {
        insert(&mut summary, "time_band", json!(t));
        insert(&mut summary, "space_band", json!(s));
    }
    let mut art = Artifacts::new(summary);
    let show = |g: Option<f64>| g.map_or("undetermined".to_string(), |g| format!("{g:.4}"));
    art.lines.push(format!(
        "gamma1_hat={} gamma2_hat={} holder_norm={norm:.6e}",
        show(est.gamma1_hat),
        show(est.gamma2_hat)
    ));
    art.table("holder.csv", csv(|w| est.write_csv(w))?);
    if let Some((t, s)) = bands {
        let inside = |g: Option<f64>, b: [f64; 2]| g.is_some_and(|g| (b[0]..=b[1]).contains(&g));
        let ok = inside(est.gamma1_hat, t) && inside(est.gamma2_hat, s);
        art.check(e.assert, ok, || {
            format!(
                "exponents ({}, {}) outside time band {t:?} / space band {s:?}",
                show(est.gamma1_hat),
                show(est.gamma2_hat)
            )
        });
    }
    Ok(art)
}

fn stability(cfg: &Config) -> Result<Artifacts> {
    let report = run_experiment(&cfg.experiment_config()?)?;
    let mut summary = base_summary(cfg)?;
    insert(&mut summary, "fit", json!(report.fit));
    insert(&mut summary, "monotone", json!(report.monotone));
    insert(&mut summary, "threshold", json!(report.threshold));
    insert(&mut summary, "notes", json!(report.notes));
    let mut art = Artifacts::new(summary);
    stability_lines(&report, &mut art.lines);
    art.table("stability.csv", csv(|w| report.write_csv(w))?);
    if let Some(p) = &report.picard {
        art.table("picard.csv", csv(|w| p.write_csv(w))?);
        insert(&mut art.summary, "beta", json!(p.beta));
        insert(&mut art.summary, "theta", json!(p.theta));
        insert(&mut art.summary, "below_profile", json!(p.below_profile));
        insert(&mut art.summary, "monotone_from_2", json!(p.monotone_from_2));
        insert(&mut art.summary, "ratio_6_1", json!(p.ratio_6_1));
    }
    art.table("report.json", report.to_json()?.into_bytes());
    let (ok, why) = stability_assertion(&report);
    art.check(cfg.experiment.assert, ok, || why);
    Ok(art)
}

fn stability_lines(r: &StabilityReport, lines: &mut Vec<String>) {
    if let Some(p) = &r.picard {
        for (i, d) in p.d.iter().enumerate() {
            let prof = p.profile[i].map_or(String::new(), |v| format!(" profile={v:.4e}"));
            lines.push(format!("n={:<3} D_n={d:.4e} E_n={:.4e}{prof}", i + 1, p.e[i]));
        }
        return;
    }
    for row in &r.rows {
        let exc = row.exceedance.map_or(String::new(), |e| format!(" exceedance={e:.4}"));
        lines.push(format!(
            "index={} distance={:.4e} sup_moment={:.4e} holder_moment={:.4e} sup_norm_sq={:.4e}{exc}",
            row.index, row.distance, row.sup_moment, row.holder_moment, row.sup_norm_sq
        ));
    }
    if let Some(f) = &r.fit {
        lines.push(format!(
            "slope={:.4} (95% CI [{:.4}, {:.4}], {} points)",
            f.slope, f.ci_low, f.ci_high, f.points
        ));
    }
}

/// The acceptance property checked under `assert = true`.
fn stability_assertion(r: &StabilityReport) -> (bool, String) {
    match r.kind {
        ExperimentKind::PicardConvergence => {
            let Some(p) = &r.picard else {
                return (false, "no Picard table".into());
            };
            let ratio = p.ratio_6_1.unwrap_or(f64::INFINITY);
            (
                p.monotone_from_2 && ratio < 1e-3 && p.below_profile,
                format!(
                    "monotone from 2: {}, D_6/D_1 = {ratio:.3e}, below profile: {}",
                    p.monotone_from_2, p.below_profile
                ),
            )
        }
        ExperimentKind::CoefficientStability => match &r.fit {
            Some(f) => {
                let tol = if r.p <= 2.0 { 0.15 } else { 0.20 };
                (
                    (f.slope - r.p).abs() <= tol * r.p,
                    format!("slope {:.4} not within {:.0}% of {}", f.slope, tol * 100.0, r.p),
                )
            }
            None => (false, "too few schedule points for a slope".into()),
        },
        ExperimentKind::ParameterContinuity => {
            let at_zero = r.rows.iter().filter(|x| x.distance == 0.0).all(|x| x.sup_norm_sq == 0.0);
            let monotone = r.monotone == Some(true);
            (
                monotone && at_zero,
                format!("monotone: {monotone}, zero at lambda0: {at_zero}"),
            )
        }
        ExperimentKind::NoiseStability => {
            let mut rows: Vec<_> = r.rows.iter().map(|x| (x.distance, x.exceedance.unwrap_or(f64::NAN))).collect();
            rows.sort_by(|a, b| a.0.total_cmp(&b.0));
            let nonincreasing = rows.windows(2).all(|w| w[0].1 <= w[1].1);
            let zero = rows.iter().filter(|x| x.0 == 0.0).all(|x| x.1 == 0.0);
            let small = rows.iter().filter(|x| x.0 == 0.05).all(|x| x.1 < 0.05);
            (
                nonincreasing && zero && small,
                format!("nonincreasing: {nonincreasing}, zero at 0: {zero}, below 0.05 at 0.05: {small}"),
            )
        }
    }
}

fn plot_script(kind: &str, dimension: usize) -> Option<String> {
    let head = "set datafile separator ','\nset key top left\n";
    let body = match kind {
        "picard" => {
            "set logscale y\nset xlabel 'n'\nplot 'picard.csv' skip 1 using 1:2 with linespoints title 'D_n', \\\n     '' skip 1 using 1:3 with linespoints title 'E_n', \\\n     '' skip 1 using 1:5 with lines title 'factorial profile'\n"
        }
        "coefficient_stability" | "parameter_continuity" => {
            "set logscale xy\nset xlabel 'distance'\nplot 'stability.csv' skip 1 using 2:3 with linespoints title 'sup moment', \\\n     '' skip 1 using 2:8 with linespoints title 'E sup norm^2'\n"
        }
        "noise_stability" => {
            "set xlabel 'epsilon'\nset ylabel 'exceedance'\nplot 'stability.csv' skip 1 using 2:10 with linespoints title 'P(norm > threshold)'\n"
        }
        "holder" => {
            "set logscale xy\nset xlabel 'lag'\nplot 'holder.csv' skip 1 using 3:(strcol(1) eq 'time' ? $4 : NaN) with points title 'time', \\\n     '' skip 1 using 3:(strcol(1) eq 'space' ? $4 : NaN) with points title 'space'\n"
        }
        "solve" => {
            return Some(format!(
                "{head}set xlabel 'x1'\nplot 'final_profile.csv' skip 1 using 2:{} with points title 'u(T)'\n",
                dimension + 2
            ))
        }
        "assumptions" => {
            "set logscale xy\nplot 'exponent_fits.csv' skip 1 using 2:(strcol(1) eq 'time' ? $3 : NaN) with points title 'time', \\\n     '' skip 1 using 2:(strcol(1) eq 'space' ? $3 : NaN) with points title 'space'\n"
        }
        _ => return None,
    };
    Some(format!("{head}{body}"))
}

/// Reruns `record` into `out_dir` and compares its metric tables.
///
/// Returns the names of tables whose digests differ; empty means identical.
pub fn replay(record: &RunRecord, out_dir: &Path) -> Result<(RunOutcome, Vec<String>)> {
    if !record.hash_matches() {
        return Err(Error::invalid("config hash does not match the stored snapshot"));
    }
    let command = Command::from_name(&record.command)
        .ok_or_else(|| Error::invalid(format!("unknown command '{}' in record", record.command)))?;
    let mut cfg = Config::parse(&record.config)?;
    cfg.output.dir = out_dir.to_string_lossy().into_owned();
    let outcome = execute(command, &cfg)?;
    let mut differ = Vec::new();
    for m in record.metric_tables() {
        let same = outcome
            .record
            .manifest
            .iter()
            .any(|n| n.path == m.path && n.sha256 == m.sha256);
        if !same {
            differ.push(m.path.clone());
        }
    }
    if outcome.record.metric_tables().count() != record.metric_tables().count() {
        differ.push("(table set)".into());
    }
    Ok((outcome, differ))
}
