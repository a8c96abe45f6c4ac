use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn rpskin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rpskin"))
        .args(args)
        .env_remove("RPSKIN_SEED")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

/// The JSON embedded in a CSV's leading comment line.
fn csv_run(path: &Path) -> Value {
    let text = std::fs::read_to_string(path).unwrap();
    let first = text.lines().next().unwrap();
    let json = first.strip_prefix("# ").expect("CSV starts with a comment line");
    serde_json::from_str::<Value>(json).unwrap()["run"].clone()
}

#[test]
fn ikp_prints_leg_lengths() {
    let out = rpskin(&["ikp", "--mode", "om2", "--pose", "0", "0", "3"]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout_json(&out)["rho"], serde_json::json!([3.0, 3.0, 3.0]));

    let out = rpskin(&["ikp", "--mode", "om1", "--pose", "0.85", "0", "3"]);
    let rho: Vec<f64> = serde_json::from_value(stdout_json(&out)["rho"].clone()).unwrap();
    for (r, want) in rho.iter().zip([3.90, 3.24, 3.24]) {
        assert!((r - want).abs() < 0.01, "{rho:?}");
    }
}

#[test]
fn invalid_input_exits_with_two() {
    assert_eq!(code(&rpskin(&["ikp", "--mode", "om1", "--pose", "2", "0", "3"])), 2);
    assert_eq!(code(&rpskin(&["dkp", "--mode", "om1", "--rho", "0", "1", "1"])), 2);
    assert_eq!(code(&rpskin(&["repro", "--figure", "fig9"])), 2);
    assert_eq!(code(&rpskin(&["--mode", "om3", "ikp", "--pose", "0", "0", "1"])), 2);
}

#[test]
fn dkp_lists_the_tabulated_assembly_modes() {
    let out = rpskin(&["dkp", "--mode", "om1", "--rho", "3.90", "3.24", "3.24"]);
    assert_eq!(code(&out), 0);
    let set = stdout_json(&out);
    let poses: Vec<[f64; 3]> = set["solutions"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|s| s["det_a"].as_f64().is_some_and(|d| d > 0.0))
        .map(|s| {
            let p = &s["pose"];
            [p["a"].as_f64().unwrap(), p["b"].as_f64().unwrap(), p["z"].as_f64().unwrap()]
        })
        .collect();
    // (q2, q3, z) of the four positive-determinant rows.
    for want in [[-0.34, -0.94, 3.01], [-0.34, 0.94, 3.01], [0.85, 0.0, 3.0], [-0.35, 0.0, -2.88]] {
        let hit = poses
            .iter()
            .any(|p| p.iter().zip(want).all(|(x, w)| (x - w).abs() <= 0.01));
        assert!(hit, "{want:?} not in {poses:?}");
    }
}

#[test]
fn outputs_embed_the_effective_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "seed = 11\n[dkp]\nn_starts = 150\n").unwrap();
    let out_dir = dir.path().join("out");
    let out = rpskin(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--starts",
        "120",
        "atlas",
        "--jointslice",
        "--res",
        "7",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let run = csv_run(&out_dir.join("jointslice.csv"));
    assert_eq!(run["config"]["seed"], 11);
    assert_eq!(run["config"]["dkp"]["n_starts"], 120);
    assert_eq!(run["config"]["grid"]["res"], 7);
    assert_eq!(run["command"]["atlas"], "jointslice");

    let header: Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("jointslice.json")).unwrap()).unwrap();
    assert_eq!(header["run"], run);
    assert_eq!(header["grid"]["axes"].as_array().unwrap().len(), 2);
}

#[test]
fn seed_falls_back_to_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_rpskin"))
        .args(["--out", dir.path().to_str().unwrap(), "ikp", "--pose", "0", "0", "2"])
        .env("RPSKIN_SEED", "42")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("ikp.json")).unwrap()).unwrap();
    assert_eq!(doc["run"]["config"]["seed"], 42);
    assert_eq!(doc["run"]["config"]["continuation"]["seed"], 42);
}

#[test]
fn repeated_runs_are_byte_identical() {
    // The output directory is part of the echoed config, so both runs use
    // the same one.
    let dir = tempfile::tempdir().unwrap();
    let run = || {
        let out = rpskin(&["--out", dir.path().to_str().unwrap(), "--starts", "100", "atlas", "--basic", "--res", "9"]);
        assert_eq!(code(&out), 0);
        ["basic.csv", "basic.json"].map(|n| std::fs::read(dir.path().join(n)).unwrap())
    };
    let first = run();
    assert!(first == run());
}

#[test]
fn csv_values_carry_seventeen_significant_digits() {
    let dir = tempfile::tempdir().unwrap();
    let wp = dir.path().join("wp.json");
    std::fs::write(&wp, r#"{"mode": "om2", "waypoints": [[0, 0, 2], [0.1, 0.3, 2.5]]}"#).unwrap();
    let out = rpskin(&["--out", dir.path().to_str().unwrap(), "traj", "--waypoints", wp.to_str().unwrap(), "--close"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("profile.csv")).unwrap();
    assert!(!text.contains('\r'));
    let mut lines = text.lines().skip(1);
    assert_eq!(lines.next(), Some("s,det_a,rho1,rho2,rho3"));
    let row = lines.next().unwrap();
    for field in row.split(',') {
        let mantissa = field.split('e').next().unwrap().trim_start_matches('-');
        assert_eq!(mantissa.chars().filter(char::is_ascii_digit).count(), 17, "{field}");
    }
    let cert: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("certificate.json")).unwrap()).unwrap();
    assert_eq!(cert["constant_sign"], true);
    assert_eq!(cert["plan"]["waypoints"].as_array().unwrap().len(), 3);
}

#[test]
fn traj_rejects_mixed_aspects() {
    let dir = tempfile::tempdir().unwrap();
    let wp = dir.path().join("wp.json");
    std::fs::write(&wp, "[[0, 0, 1], [0, 0, -1]]").unwrap();
    let out = rpskin(&["--out", dir.path().to_str().unwrap(), "--mode", "om2", "traj", "--waypoints", wp.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
}

#[test]
fn table_reproduction_matches() {
    let dir = tempfile::tempdir().unwrap();
    let out = rpskin(&["--out", dir.path().to_str().unwrap(), "repro", "--figure", "table1"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("table1.csv")).unwrap();
    assert_eq!(text.lines().count(), 2 + 8);
}

#[test]
fn assembly_mode_loops_certify() {
    let dir = tempfile::tempdir().unwrap();
    let out = rpskin(&["--out", dir.path().to_str().unwrap(), "repro", "--figure", "fig5"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("fig5_certificates.json")).unwrap()).unwrap();
    assert_eq!(doc["certificates"].as_array().unwrap().len(), 4);
    for c in doc["certificates"].as_array().unwrap() {
        assert!(c["certificate"]["joint_mismatch"].as_f64().unwrap() <= 1e-6);
    }
}

#[test]
fn cusp_sweep_writes_polylines() {
    let dir = tempfile::tempdir().unwrap();
    let out = rpskin(&[
        "--out",
        dir.path().to_str().unwrap(),
        "--mode",
        "om1",
        "cusp",
        "--rho1-range",
        "2.9",
        "3.0",
        "--step",
        "0.05",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("cusps.csv")).unwrap();
    assert_eq!(text.lines().nth(1), Some("curve,rho1,rho2,rho3"));
    assert_eq!(text.lines().count(), 2 + 9);
    assert_eq!(code(&rpskin(&["cusp", "--rho1-range", "3", "2"])), 2);
}
