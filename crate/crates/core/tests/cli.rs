use std::path::Path;
use std::process::{Command, Output};

use spdelab::cli::{sha256_hex, RunRecord};

fn spdelab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spdelab"))
        .args(args)
        .env("SPDELAB_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn config(kernel: &str, measure: &str, coefficients: &str, experiment: &str) -> String {
    format!(
        "[kernel]\n{kernel}\n\n[measure]\n{measure}\n\n[grid]\nlength = 6.283185307179586\npoints = 32\nhorizon = 0.5\nsteps = 32\n\n[coefficients]\n{coefficients}\n\n[experiment]\n{experiment}\n"
    )
}

const HEAT1: &str = "family = \"heat\"\ndimension = 1";
const WHITE: &str = "model = \"white\"";

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn csv_value(path: &Path, key: &str) -> String {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key},")).map(str::to_string))
        .unwrap_or_else(|| panic!("{key} missing from {}", path.display()))
}

#[test]
fn picard_config_writes_tables_and_record() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "picard.toml",
        &config(HEAT1, WHITE, "sigma = \"0.5*sin(u) + 0.5\"", "kind = \"picard\"\niterations = 8\nseed = 4"),
    );
    let out = tmp.path().join("out");
    let o = spdelab(&["run", &cfg, "--out-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let picard = std::fs::read_to_string(out.join("picard.csv")).unwrap();
    assert_eq!(picard.lines().next(), Some("n,d_n,e_n,s_n,profile"));
    assert_eq!(picard.lines().count(), 9);
    assert_eq!(stdout(&o).lines().filter(|l| l.starts_with("n=")).count(), 8);

    let record = RunRecord::read(&out.join("run.json")).unwrap();
    assert!(record.hash_matches());
    assert_eq!(record.config_hash, sha256_hex(record.config.as_bytes()));
    assert_eq!(record.master_seed, 4);
    assert_eq!(record.command, "run");
    assert!(record.version.starts_with("spdelab "));
    assert!(record.finished >= record.started);
    for m in &record.manifest {
        let bytes = std::fs::read(out.join(&m.path)).unwrap();
        assert_eq!(sha256_hex(&bytes), m.sha256, "{}", m.path);
    }
    assert!(record.manifest.iter().any(|m| m.path == "plot.gp" && !m.metric));
    let stab = std::fs::read_to_string(out.join("stability.csv")).unwrap();
    assert_eq!(
        stab.lines().next().unwrap(),
        "index,distance,sup_moment,sup_moment_se,holder_moment,holder_moment_se,increment_moment,sup_norm_sq,sup_norm_sq_se,exceedance,non_converged"
    );
}

#[test]
fn wave_in_three_dimensions_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "w.toml",
        &config("family = \"wave\"\ndimension = 3", WHITE, "sigma = \"1\"", "kind = \"solve\""),
    );
    let o = spdelab(&["run", &cfg, "--out-dir", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("wave dimension 3 unsupported"), "{}", stderr(&o));
    assert!(!tmp.path().join("o").exists());
}

#[test]
fn riesz_exponent_at_dimension_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "r.toml",
        &config(HEAT1, "model = \"riesz\"\nbeta = 1.0", "sigma = \"1\"", "kind = \"solve\""),
    );
    let o = spdelab(&["solve", &cfg, "--json"]);
    assert_eq!(o.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_str(stderr(&o).lines().last().unwrap()).unwrap();
    assert_eq!(err["exit_code"], 2);
    assert_eq!(err["error"], "invalid_input");
    assert!(err["message"].as_str().unwrap().contains("0 < beta < d"), "{err}");
}

#[test]
fn noise_check_needs_replicas() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "n.toml", &config(HEAT1, WHITE, "", "kind = \"noise_check\""));
    let o = spdelab(&["noise-check", &cfg, "--replicas", "0"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn noise_check_matches_analytic_covariance() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "n.toml",
        &config(HEAT1, "model = \"bessel\"\nalpha = 1.0", "", "kind = \"noise_check\"\nassert = true"),
    );
    let out = tmp.path().join("o");
    let o = spdelab(&["noise-check", &cfg, "--replicas", "400", "--seed", "7", "--out-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let table = std::fs::read_to_string(out.join("noise_check.csv")).unwrap();
    assert_eq!(table.lines().next(), Some("pair,estimate,standard_error,analytic,z"));
    assert_eq!(table.lines().count(), 4);
}

#[test]
fn assumptions_on_heat_white_noise() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "a.toml", &config(HEAT1, WHITE, "", "kind = \"assumptions\"\nassert = true"));
    let out = tmp.path().join("o");
    let o = spdelab(&["assumptions", &cfg, "--out-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let table = out.join("assumptions.csv");
    let d1: f64 = csv_value(&table, "delta1").parse().unwrap();
    let d2: f64 = csv_value(&table, "delta2").parse().unwrap();
    assert!((d1 - 0.25).abs() < 0.02, "{d1}");
    assert!((d2 - 0.5).abs() < 0.03, "{d2}");
    assert_eq!(csv_value(&table, "a_eta_divergent"), "false");
}

#[test]
fn holder_on_additive_noise_is_in_band() {
    let tmp = tempfile::tempdir().unwrap();
    let text = config(HEAT1, WHITE, "sigma = \"1\"", "kind = \"holder\"\nassert = true")
        .replace("points = 32", "points = 256")
        .replace("steps = 32", "steps = 256")
        .replace("horizon = 0.5", "horizon = 1.0");
    let cfg = write(tmp.path(), "h.toml", &text);
    let out = tmp.path().join("o");
    let o = spdelab(&["holder", &cfg, "--seed", "1", "--out-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let record = RunRecord::read(&out.join("run.json")).unwrap();
    let g1 = record.summary["gamma1_hat"].as_f64().unwrap();
    let g2 = record.summary["gamma2_hat"].as_f64().unwrap();
    assert!((0.15..=0.3).contains(&g1) && (0.35..=0.55).contains(&g2), "{g1} {g2}");
    let table = std::fs::read_to_string(out.join("holder.csv")).unwrap();
    assert_eq!(table.lines().next(), Some("direction,lag,size,median_increment,in_fit"));

    // An impossible band is a failed assertion.
    let strict = text.replace("assert = true", "assert = true\ntime_band = [0.9, 0.95]\nspace_band = [0.9, 0.95]");
    let cfg = write(tmp.path(), "strict.toml", &strict);
    let o = spdelab(&["holder", &cfg, "--seed", "1", "--out-dir", tmp.path().join("s").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("assertion failed"), "{}", stderr(&o));
}

#[test]
fn blow_up_is_a_numerical_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "b.toml",
        &config(
            HEAT1,
            WHITE,
            "sigma = \"1\"\nb = \"5*u*u\"\ninitial = 1.0",
            "kind = \"solve\"\nmax_iter = 20",
        ),
    );
    let o = spdelab(&["solve", &cfg, "--out-dir", tmp.path().join("o").to_str().unwrap(), "--json"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let err = stderr(&o);
    assert!(err.contains("no derivable Lipschitz constant"), "{err}");
    let last: serde_json::Value = serde_json::from_str(err.lines().last().unwrap()).unwrap();
    assert_eq!(last["exit_code"], 3);
}

#[test]
fn solve_writes_field_and_profile() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "s.toml", &config(HEAT1, WHITE, "sigma = \"tanh(u) + 1\"", "kind = \"solve\""));
    let out = tmp.path().join("o");
    let o = spdelab(&["solve", &cfg, "--out-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let field = spdelab::solver::SolutionField::read_from(&mut std::fs::File::open(out.join("solution.bin")).unwrap())
        .unwrap();
    let profile = std::fs::read_to_string(out.join("final_profile.csv")).unwrap();
    assert_eq!(profile.lines().next(), Some("point,x1,u"));
    let last: Vec<f64> = profile
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(last, field.row(32));
}

#[test]
fn config_errors_carry_positions() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "bad.toml", "[kernel]\nfamily = \"heat\"\ndimension = \n");
    let o = spdelab(&["run", &cfg, "--json"]);
    assert_eq!(o.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_str(stderr(&o).trim()).unwrap();
    assert_eq!(err["error"], "parse");

    let cfg = write(tmp.path(), "expr.toml", &config(HEAT1, WHITE, "sigma = \"sin(u\"", "kind = \"solve\""));
    let o = spdelab(&["run", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("column 6"), "{}", stderr(&o));

    let cfg = write(tmp.path(), "kind.toml", &config(HEAT1, WHITE, "", "kind = \"picard\""));
    let o = spdelab(&["stability", &cfg]);
    assert_eq!(o.status.code(), Some(2));

    let cfg = write(tmp.path(), "extra.toml", &config(HEAT1, WHITE, "sigmaa = \"1\"", "kind = \"solve\""));
    let o = spdelab(&["run", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("sigmaa"), "{}", stderr(&o));
}

#[test]
fn custom_measure_warns() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "c.toml",
        &config(HEAT1, "model = \"custom\"\ndensity = \"1/(1+r*r)\"", "sigma = \"1\"", "kind = \"solve\""),
    );
    let o = spdelab(&["solve", &cfg, "--out-dir", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains("temperedness"), "{}", stderr(&o));
    let record = RunRecord::read(&tmp.path().join("o/run.json")).unwrap();
    assert_eq!(record.warnings.len(), 1);
}

#[test]
fn replay_reproduces_and_detects_tampering() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "ns.toml",
        &config(
            HEAT1,
            WHITE,
            "sigma = \"1 + 0.5*sin(u)\"",
            "kind = \"noise_stability\"\nepsilons = [0.2, 0.0]\nreplicas = 20",
        ),
    );
    let out = tmp.path().join("o");
    let o = spdelab(&["stability", &cfg, "--seed", "17", "--out-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let record_path = out.join("run.json");
    let o = spdelab(&["replay", record_path.to_str().unwrap(), "--out-dir", tmp.path().join("r").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("replay identical"));
    assert_eq!(
        std::fs::read(out.join("stability.csv")).unwrap(),
        std::fs::read(tmp.path().join("r/stability.csv")).unwrap()
    );

    let mut record = RunRecord::read(&record_path).unwrap();
    record.manifest[0].sha256 = "0".repeat(64);
    let forged = tmp.path().join("forged");
    std::fs::create_dir_all(&forged).unwrap();
    record.write(&forged).unwrap();
    let o = spdelab(&["replay", forged.join("run.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));

    record.config = record.config.replace("seed = 17", "seed = 18");
    record.write(&forged).unwrap();
    let o = spdelab(&["replay", forged.join("run.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("hash"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(spdelab(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(spdelab(&["--version"]).status.code(), Some(0));
    assert_eq!(spdelab(&["run", "/nonexistent/config.toml"]).status.code(), Some(2));
}
