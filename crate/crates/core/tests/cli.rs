use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use blowup_lab::harness::{TRAJECTORY_COLUMNS, TRAJECTORY_SCHEMA};

const BIN: &str = env!("CARGO_BIN_EXE_blowup-lab");

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn blowup_lab(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("BLOWUP_LAB_OUT")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// A small, quickly blowing-up negative-energy configuration.
const FAST: &str = r#"
[model]
n = 3
s = 1.0
p = 4.0
R = 1.0

[mesh]
M = 60

[initial]
profile = "ground_state_ray"
target_level = -1.0

[stepping]
dt0 = 1e-2
"#;

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn constants_fixtures() {
    let tmp = tempfile::tempdir().unwrap();
    let out0 = tmp.path().join("s0");
    let run = blowup_lab(&["constants", configs().join("constants_s0.toml").to_str().unwrap(), "--out", out0.to_str().unwrap()]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let report = json(&out0.join("constants.json"));
    let cstarstar = report["Cstarstar"].as_f64().unwrap();
    let oracle = 1.0 / (std::f64::consts::PI * std::f64::consts::PI);
    assert!((cstarstar - oracle).abs() <= 0.01 * oracle);
    assert_eq!(report["regime"], "NotBlowupCertified");
    assert!(out0.join("bounds.json").exists());

    let out2 = tmp.path().join("s2");
    let run = blowup_lab(&["constants", configs().join("constants_s2.toml").to_str().unwrap(), "--out", out2.to_str().unwrap()]);
    assert_eq!(code(&run), 0);
    assert!(json(&out2.join("constants.json"))["Cstarstar"].as_f64().unwrap() <= 4.0 * (1.0 + 1e-6));
}

#[test]
fn output_directory_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    let config = configs().join("constants_s0.toml");
    let env_dir = tmp.path().join("from_env");
    let cli_dir = tmp.path().join("from_cli");
    let run = Command::new(BIN)
        .args(["constants", config.to_str().unwrap()])
        .env("BLOWUP_LAB_OUT", &env_dir)
        .output()
        .unwrap();
    assert_eq!(code(&run), 0);
    assert!(env_dir.join("constants.json").exists());
    let run = Command::new(BIN)
        .args(["constants", config.to_str().unwrap(), "--out", cli_dir.to_str().unwrap()])
        .env("BLOWUP_LAB_OUT", tmp.path().join("unused"))
        .output()
        .unwrap();
    assert_eq!(code(&run), 0);
    assert!(cli_dir.join("constants.json").exists());
    assert!(!tmp.path().join("unused").exists());
}

#[test]
fn subcritical_simulation_passes_and_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let config = configs().join("subcritical.toml");
    let dirs = [tmp.path().join("a"), tmp.path().join("b")];
    for dir in &dirs {
        let run = blowup_lab(&["simulate", config.to_str().unwrap(), "--out", dir.to_str().unwrap()]);
        assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stdout));
    }
    let first = fs::read(dirs[0].join("trajectory.csv")).unwrap();
    assert_eq!(first, fs::read(dirs[1].join("trajectory.csv")).unwrap());
    let text = String::from_utf8(first).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(TRAJECTORY_SCHEMA));
    assert_eq!(lines.next().unwrap(), TRAJECTORY_COLUMNS.join(","));

    let report = json(&dirs[0].join("verification.json"));
    let checks = report.as_array().unwrap();
    assert!(checks.iter().all(|c| c["pass"] != false));
    for key in ["check", "paper_location", "pass", "measured", "tolerance"] {
        assert!(checks[0].get(key).is_some(), "missing {key}");
    }
    assert!(dirs[0].join("verification.txt").exists());

    // Re-verification from the written files.
    let verify_dir = tmp.path().join("verify");
    let run = blowup_lab(&[
        "verify",
        dirs[0].join("trajectory.csv").to_str().unwrap(),
        dirs[0].join("constants.json").to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
        "--out",
        verify_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stdout));
    let report = json(&verify_dir.join("verification.json"));
    let skipped: Vec<&str> = report
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["pass"].is_null())
        .map(|c| c["check"].as_str().unwrap())
        .collect();
    assert!(skipped.contains(&"energy identity"));
}

#[test]
fn negative_energy_simulation_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "fast.toml", FAST);
    let out = tmp.path().join("out");
    let run = blowup_lab(&["simulate", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stdout));
}

#[test]
fn infeasible_tolerance_exits_with_verification_code() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "strict.toml", &format!("{FAST}\n[verification]\nslope_tol = 1e-9\n"));
    let out = tmp.path().join("out");
    let run = blowup_lab(&["simulate", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&run), 4);
    let report = json(&out.join("verification.json"));
    let failed: Vec<&str> = report
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["pass"] == false)
        .map(|c| c["check"].as_str().unwrap())
        .collect();
    assert_eq!(failed, ["rate-slope fit"]);
}

#[test]
fn configuration_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let unknown = write_config(tmp.path(), "unknown.toml", &format!("{FAST}\n[extra]\nkey = 1\n"));
    let bad_p = write_config(tmp.path(), "bad_p.toml", &FAST.replace("p = 4.0", "p = 1.5"));
    let unreachable = write_config(tmp.path(), "level.toml", &FAST.replace("target_level = -1.0", "target_level = 1.5"));
    for config in [unknown, bad_p, unreachable] {
        let run = blowup_lab(&["simulate", config.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
        assert_eq!(code(&run), 2, "{}: {}", config.display(), String::from_utf8_lossy(&run.stderr));
    }
    let missing = blowup_lab(&["simulate", tmp.path().join("absent.toml").to_str().unwrap()]);
    assert_eq!(code(&missing), 1);

    let garbage = tmp.path().join("garbage.csv");
    fs::write(&garbage, "not,a,trajectory\n").unwrap();
    let run = blowup_lab(&[
        "verify",
        garbage.to_str().unwrap(),
        garbage.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&run), 2);
}

#[test]
fn empty_sweep_writes_header_only() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "empty.toml", &format!("{FAST}\n[sweep]\ns = []\n"));
    let out = tmp.path().join("out");
    let run = blowup_lab(&["sweep", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&run), 0);
    let text = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert!(text.starts_with("s,p,lambda,target_level,J0,I0,regime,status,T_lower,T_num,T_upper"));
}

#[test]
fn amplitude_sweep_crosses_the_nehari_threshold() {
    use blowup_lab::fem::{build_mesh, discrete_norms, DiscreteOperators, StateVector};
    use blowup_lab::model::{ray_nehari_threshold, ModelParams};

    let mesh = build_mesh(ModelParams::new(3, 1.0, 4.0, 1.0).unwrap(), 60, 2.0).unwrap();
    let ops = DiscreteOperators::assemble(&mesh);
    let profile = StateVector::interpolate(&mesh, |r| (1.0 - r * r).powi(2));
    let norms = discrete_norms(&mesh, &ops, &profile, 4.0);
    let lambda_i = ray_nehari_threshold(norms.norm_grad, norms.norm_p, 4.0).unwrap();

    let tmp = tempfile::tempdir().unwrap();
    let text = format!(
        "[model]\nn = 3\ns = 1.0\np = 4.0\nR = 1.0\n\n[mesh]\nM = 60\n\n[initial]\nprofile = \"polynomial_bump\"\namplitude = 1.0\nexponent = 2.0\n\n[stepping]\ndt0 = 1e-2\nt_max = 1.0\n\n[sweep]\nlambda = [{}, {}, {}]\n",
        0.5 * lambda_i,
        0.9 * lambda_i,
        3.0 * lambda_i
    );
    let config = write_config(tmp.path(), "lambda.toml", &text);
    let out = tmp.path().join("out");
    let run = blowup_lab(&["sweep", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let mut reader = csv::Reader::from_path(out.join("sweep.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(&rows[0][6], "NotBlowupCertified");
    assert_eq!(&rows[1][6], "NotBlowupCertified");
    assert_ne!(&rows[2][6], "NotBlowupCertified");
    assert!(rows[0][5].parse::<f64>().unwrap() > 0.0 && rows[2][5].parse::<f64>().unwrap() < 0.0);
    assert_eq!(code(&run), 0, "{}", fs::read_to_string(out.join("sweep.csv")).unwrap());
}
