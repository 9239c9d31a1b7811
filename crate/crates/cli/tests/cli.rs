use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ewa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ewa")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

#[test]
fn help_and_bad_flags() {
    assert_eq!(code(&ewa(&["--help"])), 0);
    assert_eq!(code(&ewa(&["sweep", "--help"])), 0);
    assert_eq!(code(&ewa(&["simulate", "--bogus"])), 1);
    assert_eq!(code(&ewa(&["no-such-command"])), 1);
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "player = 3\n").unwrap();
    let out = ewa(&["classify", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("player"));
}

#[test]
fn config_file_values_are_used_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("g.toml");
    fs::write(&cfg, "players = 3\nactions = 4\ngamma = 1.5\n").unwrap();
    let out_dir = dir.path().join("o");
    let out = ewa(&["generate", "--config", cfg.to_str().unwrap(), "--n", "2", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["players"], 3);
    assert_eq!(manifest["config"]["actions"], 2);
    assert_eq!(manifest["config"]["gamma"], 1.5);
    // 3 players, 2 actions: 8 tuples.
    assert_eq!(csv_rows(&out_dir.join("entries.csv")).len(), 8);
}

#[test]
fn oversized_game_is_a_resource_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = ewa(&["generate", "--p", "8", "--n", "100", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 2);
}

#[test]
fn invalid_gamma_is_a_configuration_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = ewa(&["generate", "--p", "2", "--gamma", "-1.5", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 1);
}

#[test]
fn replay_refuses_a_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("a");
    assert_eq!(code(&ewa(&["generate", "--n", "3", "--out", first.to_str().unwrap()])), 0);
    let manifest = first.join("manifest.json");
    let out = ewa(&["replay", manifest.to_str().unwrap(), "--config", manifest.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
}

#[test]
fn simulate_writes_payoff_and_volatility_series() {
    let dir = tempfile::tempdir().unwrap();
    let out = ewa(&["simulate", "--p", "2", "--n", "5", "--steps", "400", "--stride", "4", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(csv_rows(&dir.path().join("trajectory.csv")).len(), 101);
    assert_eq!(csv_rows(&dir.path().join("payoff.csv")).len(), 101);
    let acf = csv_rows(&dir.path().join("volatility.csv"));
    assert_eq!(acf[0], ["0", "1"]);
}

#[test]
fn boundary_endpoints() {
    let dir = tempfile::tempdir().unwrap();
    let out = ewa(&["boundary", "--p", "2", "--gamma-count", "2", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(&dir.path().join("boundary.csv"));
    assert_eq!(rows.len(), 2);
    let value = |r: &Vec<String>| r[2].parse::<f64>().unwrap();
    // Zero-sum end closes, independent end sits at sqrt(e).
    assert!(value(&rows[0]) < 1e-3);
    assert!((value(&rows[1]) - std::f64::consts::E.sqrt()).abs() < 1e-3);
}

#[test]
fn area_reports_asymptote() {
    let dir = tempfile::tempdir().unwrap();
    let out = ewa(&["area", "--p-min", "3", "--p-max", "3", "--gamma-nodes", "4", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(&dir.path().join("area.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][0], "3");
    let area: f64 = rows[0][1].parse().unwrap();
    let asymptote: f64 = rows[0][2].parse().unwrap();
    assert!((asymptote - (2.0 * std::f64::consts::E).sqrt()).abs() < 1e-12);
    assert!(area > 1.5 && area < asymptote);
}
