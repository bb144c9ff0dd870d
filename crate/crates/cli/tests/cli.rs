use std::path::{Path, PathBuf};

use hkuramoto_cli::run;
use tempfile::TempDir;

fn hk(out: &Path, args: &[&str]) -> i32 {
    let mut v: Vec<String> = vec!["hkuramoto".into(), "--out".into(), out.display().to_string()];
    v.extend(args.iter().map(|s| s.to_string()));
    run(v)
}

fn write(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, body).unwrap();
    p
}

const PAIR: &str = r#"{"ensemble":{"N":2,"n":1,"m":[0,1],"d":[1,1],"omega":[0.5,-0.5],"lambda":2},
  "integrator":{"dt":1e-3,"T":200,"sample_every":20}}"#;

#[test]
fn minimal_simulate_writes_three_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(&dir, "pair.json", PAIR);
    let out = dir.path().join("out");
    assert_eq!(hk(&out, &["simulate", cfg.to_str().unwrap()]), 0);
    let mut names: Vec<String> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["diagnostics.json", "plot_data.csv", "trajectory.csv"]);
    let diag: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("diagnostics.json")).unwrap()).unwrap();
    assert!((diag["diagnostics"]["R_final"].as_f64().unwrap() - 0.9659258262890683).abs() < 1e-6);
    assert_eq!(diag["frame_drift"].as_f64().unwrap(), 0.0);
}

#[test]
fn schema_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(
        &dir,
        "bad.json",
        r#"{"ensemble":{"N":2,"n":1,"m":[1,1],"d":[1,1],"omega":[0.5,-0.5],"lambda":2}}"#,
    );
    assert_eq!(hk(dir.path(), &["simulate", bad.to_str().unwrap()]), 2);
    let unknown = write(&dir, "unknown.json", &PAIR.replace("\"T\"", "\"horizon\""));
    assert_eq!(hk(dir.path(), &["simulate", unknown.to_str().unwrap()]), 2);
    assert_eq!(hk(dir.path(), &["simulate", "/nonexistent.json"]), 2);
    assert_eq!(hk(dir.path(), &["frobnicate"]), 2);
}

#[test]
fn integration_faults_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        &dir,
        "stiff.json",
        r#"{"ensemble":{"N":2,"n":0,"m":[1e-6,1e-6],"d":[1,1],"omega":[0.5,-0.5],"lambda":2},
            "integrator":{"dt":0.5,"T":1000}}"#,
    );
    let out = dir.path().join("out");
    assert_eq!(hk(&out, &["simulate", cfg.to_str().unwrap()]), 3);
    assert!(out.join("diagnostics.json").exists());
}

#[test]
fn equilibria_with_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(&dir, "pair.json", PAIR);
    assert_eq!(hk(dir.path(), &["equilibria", cfg.to_str().unwrap(), "--brute-force"]), 0);
    let rep: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("equilibria.json")).unwrap()).unwrap();
    assert_eq!(rep["classes"].as_array().unwrap().len(), 2);
    assert_eq!(rep["oracle"]["comparison"]["agree"], true);
    assert_eq!(rep["degenerate_family"], false);

    let weak = write(&dir, "weak.json", &PAIR.replace("\"lambda\":2", "\"lambda\":0.3"));
    assert_eq!(hk(dir.path(), &["equilibria", weak.to_str().unwrap()]), 0);
    let rep: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("equilibria.json")).unwrap()).unwrap();
    assert!(rep["classes"].as_array().unwrap().is_empty());
}

#[test]
fn equilibria_refuses_large_ensembles() {
    let dir = tempfile::tempdir().unwrap();
    let n = 21;
    let body = format!(
        r#"{{"ensemble":{{"N":{n},"n":{n},"m":{m:?},"d":{d:?},"omega":{w:?},"lambda":1}}}}"#,
        m = vec![0.0; n],
        d = vec![1.0; n],
        w = vec![0.0; n]
    );
    let cfg = write(&dir, "big.json", &body);
    assert_eq!(hk(dir.path(), &["equilibria", cfg.to_str().unwrap()]), 2);
    let five = write(
        &dir,
        "five.json",
        r#"{"ensemble":{"N":5,"n":5,"m":[0,0,0,0,0],"d":[1,1,1,1,1],"omega":[0.1,-0.1,0.2,-0.2,0],"lambda":1}}"#,
    );
    assert_eq!(hk(dir.path(), &["equilibria", five.to_str().unwrap(), "--brute-force"]), 2);
}

#[test]
fn oracle_mismatch_exits_with_one() {
    // ω ≡ 0 with N = 4: the oracle sees the r = 0 continuum, the enumerator
    // only flags it.
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        &dir,
        "flat.json",
        r#"{"ensemble":{"N":4,"n":4,"m":[0,0,0,0],"d":[1,1,1,1],"omega":[0,0,0,0],"lambda":1}}"#,
    );
    assert_eq!(
        hk(dir.path(), &["equilibria", cfg.to_str().unwrap(), "--brute-force", "--grid", "24"]),
        1
    );
}

#[test]
fn classify_a_simulated_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(&dir, "pair.json", PAIR);
    assert_eq!(hk(dir.path(), &["simulate", cfg.to_str().unwrap()]), 0);
    let traj = dir.path().join("trajectory.csv");
    assert_eq!(hk(dir.path(), &["classify", traj.to_str().unwrap(), cfg.to_str().unwrap()]), 0);
    let rep: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("classification.json")).unwrap()).unwrap();
    for k in ["FPLS", "PLS", "FSS", "OPSS"] {
        assert_eq!(rep["verdicts"][k], "true", "{k}");
    }
    assert_eq!(rep["verdicts"]["PSS"], "not_applicable");
    assert_eq!(rep["witness"]["fpls"]["nearest_class"], 0);
}

#[test]
fn audit_exit_code_follows_flags() {
    let dir = tempfile::tempdir().unwrap();
    let suite = write(
        &dir,
        "suite.json",
        r#"{"random":{"count":4,"n_min":2,"n_max":4},"integrator":{"dt":1e-3,"T":300,"sample_every":10}}"#,
    );
    assert_eq!(hk(dir.path(), &["--threads", "2", "audit", suite.to_str().unwrap()]), 0);
    let rep: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("audit.json")).unwrap()).unwrap();
    assert_eq!(rep["cases"].as_array().unwrap().len(), 4);
    assert!(rep["flags"].as_array().unwrap().is_empty());
    assert_eq!(rep["agreement_matrix"][0][0], 4);

    // A frequency tolerance below round-off forces a raw FSS = false next to
    // a phase-locked verdict, which the audit must flag.
    let strict = write(
        &dir,
        "strict.json",
        r#"{"random":{"count":1,"n_min":2,"n_max":2},"integrator":{"dt":1e-3,"T":100,"sample_every":10},
            "tolerances":{"freq_tol":1e-20,"lock_var_tol":1}}"#,
    );
    assert_eq!(hk(dir.path(), &["audit", strict.to_str().unwrap()]), 1);
}

#[test]
fn poincare_sweep_csv() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "poincare", "--m", "1", "--d", "1", "--omega", "0.5", "--lamR", "0.8", "--v0-grid", "3:9:4", "--dt", "1e-4",
    ];
    assert_eq!(hk(dir.path(), &args), 0);
    let csv = std::fs::read_to_string(dir.path().join("poincare.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("v0,tau,P,energy_residual,exp_identity_residual,crossed"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 4);
    for r in rows {
        assert_eq!(r[5], "true");
        assert!(r[3].parse::<f64>().unwrap().abs() < 1e-8);
    }
    let drift = ["poincare", "--m", "1", "--d", "1", "--omega", "0.9", "--lamR", "0.5", "--v0-grid", "1"];
    assert_eq!(hk(dir.path(), &drift), 2);
}

#[test]
fn sweep_across_couplings() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(&dir, "pair.json", PAIR);
    assert_eq!(hk(dir.path(), &["sweep", cfg.to_str().unwrap(), "--lambda-grid", "0.1,2,8"]), 0);
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows[0][2], "false");
    let r2: f64 = rows[1][1].parse().unwrap();
    assert!((r2 - (2.0 + 3f64.sqrt()).sqrt() / 2.0).abs() < 1e-4);
    // For N = 2, x = λR solves x⁴ − λ²x² + λ²/4 = 0.
    let r8: f64 = rows[2][1].parse().unwrap();
    let x = 8.0 * r8;
    assert!((x * x * x * x - 64.0 * x * x + 16.0).abs() < 1e-2);
    assert_eq!(rows[2][2], "true");
}

#[test]
fn single_coupling_sweep_matches_simulate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(&dir, "pair.json", PAIR);
    assert_eq!(hk(dir.path(), &["--seed", "3", "sweep", cfg.to_str().unwrap(), "--lambda-grid", "2"]), 0);
    assert_eq!(hk(dir.path(), &["--seed", "3", "simulate", cfg.to_str().unwrap()]), 0);
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let r: f64 = csv.lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    let diag: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("diagnostics.json")).unwrap()).unwrap();
    assert!((r - diag["diagnostics"]["R_final"].as_f64().unwrap()).abs() < 1e-9);
}
