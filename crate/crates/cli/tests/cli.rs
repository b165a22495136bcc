use std::collections::HashMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use blangevin_cli::ResultRecord;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn blangevin(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_blangevin"));
    cmd.args(args).env_remove("BLANGEVIN_WORKERS").env_remove("SOURCE_DATE_EPOCH");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn run_ok(args: &[&str]) -> String {
    let out = blangevin(args, &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

/// Data rows of a CSV document, metadata lines dropped.
fn table(text: &str) -> Vec<Vec<String>> {
    let body: String = text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect();
    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_reader(body.as_bytes());
    reader.records().map(|r| r.unwrap().iter().map(String::from).collect()).collect()
}

fn quantities(text: &str) -> HashMap<String, String> {
    table(text).into_iter().skip(1).map(|r| (r[0].clone(), r[1].clone())).collect()
}

fn number(q: &HashMap<String, String>, key: &str) -> f64 {
    q[key].parse().unwrap()
}

#[test]
fn csv_carries_metadata_and_lf_endings() {
    let text = run_ok(&["rates", "--config", fixture("rates.toml").to_str().unwrap()]);
    assert!(!text.contains('\r'));
    let meta: Vec<&str> = text.lines().take_while(|l| l.starts_with('#')).collect();
    assert_eq!(meta[0], format!("# tool: blangevin {}", env!("CARGO_PKG_VERSION")));
    assert_eq!(meta[1], "# command: rates");
    let digest = meta[2].strip_prefix("# fingerprint: sha256:").unwrap();
    assert!(digest.len() == 64 && digest.chars().all(|c| c.is_ascii_hexdigit()));
    assert_eq!(meta[3], "# timestamp: none");
    let rows = table(&text);
    assert_eq!(rows[0], ["quantity", "value"]);
    assert_eq!(rows.last().unwrap(), &["adiabatic_window", "PASS"]);
}

#[test]
fn timestamp_follows_source_date_epoch() {
    let config = fixture("rates.toml");
    let out = blangevin(&["rates", "--config", config.to_str().unwrap()], &[("SOURCE_DATE_EPOCH", "1700000000")]);
    assert!(String::from_utf8(out.stdout).unwrap().contains("# timestamp: 1700000000\n"));
}

#[test]
fn evolve_header_matches_schema() {
    let text = run_ok(&["evolve", "--config", fixture("evolve.toml").to_str().unwrap()]);
    let header = text.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header, "t,s_x,s_y,s_z,abs_s_plus,arg_s_plus");
}

#[test]
fn zero_rate_evolve_keeps_the_length() {
    let config = fixture("evolve.toml");
    let text = run_ok(&["evolve", "--config", config.to_str().unwrap(), "--set", "model.alpha=0"]);
    let rows = table(&text);
    let lengths: Vec<f64> = rows[1..]
        .iter()
        .map(|r| {
            let s: Vec<f64> = r[1..4].iter().map(|x| x.parse().unwrap()).collect();
            (s[0] * s[0] + s[1] * s[1] + s[2] * s[2]).sqrt()
        })
        .collect();
    assert!(lengths.len() > 10);
    for l in &lengths {
        assert!((l - lengths[0]).abs() <= 1e-12, "{l} vs {}", lengths[0]);
    }
}

#[test]
fn json_record_round_trips_exactly() {
    for (command, name) in [("rates", "rates.toml"), ("oracle", "oracle.toml"), ("sweep", "sweep.toml")] {
        let text = run_ok(&[command, "--config", fixture(name).to_str().unwrap(), "--format", "json"]);
        let record: ResultRecord = serde_json::from_str(&text).unwrap();
        let mut again = serde_json::to_string_pretty(&record).unwrap();
        again.push('\n');
        assert_eq!(again, text, "{command}");
        let reread: ResultRecord = serde_json::from_str(&again).unwrap();
        assert_eq!(reread, record);
    }
}

#[test]
fn output_file_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rates.json");
    let config = fixture("window_slow.toml");
    let out = blangevin(
        &["rates", "--config", config.to_str().unwrap(), "--output", path.to_str().unwrap(), "--format", "json"],
        &[],
    );
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.lines().any(|l| l.starts_with("ADIABATIC WINDOW: FAIL")), "{stdout}");
    let record: ResultRecord = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert!(!record.phases.window.slow_ok);
}

#[test]
fn decoupled_bath_gives_zero_rates() {
    let config = fixture("rates.toml");
    let q = quantities(&run_ok(&["rates", "--config", config.to_str().unwrap(), "--set", "model.alpha=0"]));
    for key in ["gamma_perp", "gamma_perp_b0", "gamma_perp_vac", "gamma_par", "lambda0", "delta_lambda", "xi", "prob_vt"] {
        assert_eq!(number(&q, key), 0.0, "{key}");
    }
}

#[test]
fn flat_lambda0_has_closed_form() {
    let q = quantities(&run_ok(&["rates", "--config", fixture("flat.toml").to_str().unwrap()]));
    let (alpha, omega_c) = (0.01_f64, 0.5_f64);
    let expected = alpha * ((1.0 + omega_c) / (1.0 - omega_c)).ln();
    let lambda0 = number(&q, "lambda0");
    assert!((lambda0 - expected).abs() <= 1e-8 * expected, "{lambda0} vs {expected}");
}

#[test]
fn phase_command_limits() {
    let config = fixture("phase.toml");
    let q = quantities(&run_ok(&["phase", "--config", config.to_str().unwrap(), "--set", "model.alpha=0"]));
    assert_eq!(number(&q, "phi_g"), 2.0 * PI * (PI / 3.0).cos());
    let q = quantities(&run_ok(&[
        "phase",
        "--config",
        config.to_str().unwrap(),
        "--set",
        "protocol.theta=1.5707963267948966",
    ]));
    assert!(number(&q, "phi_g").abs() < 1e-15);
}

fn sweep_metric(text: &str, metric: &str) -> Vec<f64> {
    table(text)
        .into_iter()
        .skip(1)
        .filter(|r| r[2] == metric)
        .map(|r| r[3].parse().unwrap())
        .collect()
}

#[test]
fn sweep_over_theta_traces_the_berry_phase() {
    let text = run_ok(&["sweep", "--config", fixture("sweep.toml").to_str().unwrap()]);
    let rows = table(&text);
    assert_eq!(rows[0], ["parameter", "value", "metric", "result"]);
    assert!(rows[1..].iter().all(|r| r[0] == "protocol.theta"));
    let phi_g = sweep_metric(&text, "phi_g");
    assert_eq!(phi_g.len(), 3);
    assert!((phi_g[0] - 2.0 * PI).abs() < 1e-15);
    assert!((phi_g[1] - 2.0 * PI * (PI / 4.0).cos()).abs() < 1e-15);
    assert!(phi_g[2].abs() < 1e-15);
}

#[test]
fn doubling_alpha_doubles_the_correction() {
    let text = run_ok(&[
        "sweep",
        "--config",
        fixture("rates.toml").to_str().unwrap(),
        "--set",
        "sweep.parameter=\"model.alpha\"",
        "--set",
        "sweep.values=[1e-4, 2e-4, 4e-4]",
    ]);
    let c = sweep_metric(&text, "correction_fraction");
    assert_eq!(c.len(), 3);
    for pair in c.windows(2) {
        assert!((pair[1] / pair[0] - 2.0).abs() <= 2e-3, "{pair:?}");
    }
}

#[test]
fn sweep_output_ignores_worker_count() {
    let config = fixture("sweep.toml");
    let args = ["sweep", "--config", config.to_str().unwrap(), "--set", "sweep.values=[0.0, 0.3, 0.6, 0.9, 1.2, 1.5]"];
    let one = blangevin(&args, &[("BLANGEVIN_WORKERS", "1")]);
    let four = blangevin(&args, &[("BLANGEVIN_WORKERS", "4")]);
    assert_eq!(one.status.code(), Some(0));
    assert_eq!(one.stdout, four.stdout);
    let bad = blangevin(&args, &[("BLANGEVIN_WORKERS", "0")]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn fingerprint_survives_key_reordering() {
    let dir = tempfile::tempdir().unwrap();
    let reordered = dir.path().join("reordered.toml");
    std::fs::write(
        &reordered,
        "[protocol]\nOmega = 0.01\ntheta = 1.0471975511965976\nB0 = 1.0\n\n[model]\nbeta = \"inf\"\nomega_c = 10.0\nalpha = 1e-4\nkind = \"ohmic\"\n",
    )
    .unwrap();
    let fingerprint = |text: String| text.lines().find(|l| l.starts_with("# fingerprint")).unwrap().to_string();
    let a = fingerprint(run_ok(&["rates", "--config", fixture("rates.toml").to_str().unwrap()]));
    let b = fingerprint(run_ok(&["rates", "--config", reordered.to_str().unwrap()]));
    assert_eq!(a, b);
}

#[test]
fn configuration_errors_exit_with_two() {
    let config = fixture("rates.toml");
    let config = config.to_str().unwrap();
    for args in [
        vec!["rates", "--config", config, "--set", "protocol.Omega=2"],
        vec!["rates", "--config", config, "--set", "protocol.phase=1"],
        vec!["rates", "--config", config, "--set", "model.kind=\"cubic\""],
        vec!["rates", "--config", "/nonexistent/blangevin.toml"],
        vec!["rates"],
        vec!["rates", "--config", fixture("flat.toml").to_str().unwrap(), "--set", "model.beta=2"],
        vec!["sweep", "--config", config, "--set", "sweep.parameter=\"protocol.theta\""],
    ] {
        let out = blangevin(&args, &[]);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(out.stdout.is_empty());
    }
}

#[test]
fn numerical_failures_exit_with_three() {
    let config = fixture("oracle.toml");
    let out = blangevin(&["oracle", "--config", config.to_str().unwrap(), "--set", "integrator.steps_per_cycle=100"], &[]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("numerical failure"));
}
