//! End-to-end tests driving the compiled binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use grvml_core::builtin;
use grvml_core::model;

fn grvml(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_grvml"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn write_example_instance(dir: &Path, id: usize) -> PathBuf {
    let path = dir.join(format!("example{id}.json"));
    let instance = builtin::reference_example(id).unwrap().instance();
    model::save_instance(&instance, &path).unwrap();
    path
}

#[test]
fn solve_prints_the_case_and_writes_the_solution() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write_example_instance(dir.path(), 3);
    let out_path = dir.path().join("sol.json");
    let out = grvml(&[
        "solve",
        "--instance",
        inst.to_str().unwrap(),
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("case=RankDeficientNuPositive"), "{text}");
    assert!(text.contains("S=-inf"), "{text}");
    let solution = model::load_solution(&out_path).unwrap();
    assert!((solution.nu_star - 0.49664105071747144).abs() < 1e-6);
}

#[test]
fn solve_without_instance_flag_is_a_usage_error() {
    let out = grvml(&["solve", "--out", "x.json"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("--instance"));
}

#[test]
fn unknown_flags_are_rejected_with_usage() {
    let out = grvml(&["solve", "--instance", "a", "--out", "b", "--bogus"]);
    assert_eq!(code(&out), 1);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.to_lowercase().contains("usage") || err.contains("--bogus"));
}

#[test]
fn zero_noise_variance_in_the_file_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(
        &path,
        r#"{"M":1,"N":1,"H":[[1.0]],"y":[1.0],"sigma_e2":0.1,"sigma_eps2":0.0}"#,
    )
    .unwrap();
    let out = grvml(&["solve", "--instance", path.to_str().unwrap(), "--out", "s.json"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("variance"));
}

#[test]
fn verify_example_4_passes_with_a_json_report() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write_example_instance(dir.path(), 4);
    let out = grvml(&["verify", "--instance", inst.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "stdout: {}", stdout(&out));
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["schema"], "grvml.verify/1");
    assert_eq!(report["passed"], true);
    assert_eq!(report["grid"]["status"], "ok");
}

#[test]
fn verify_against_a_corrupted_solution_fails_with_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let inst_path = write_example_instance(dir.path(), 4);
    let instance = builtin::reference_example(4).unwrap().instance();
    let mut solution =
        grvml_core::estimator::solve(&instance, &grvml_core::SolverOptions::default()).unwrap();
    solution.x_hat[0] += 0.25;
    let sol_path = dir.path().join("corrupt.json");
    model::save_solution(&solution, &sol_path).unwrap();
    let out = grvml(&[
        "verify",
        "--instance",
        inst_path.to_str().unwrap(),
        "--against",
        sol_path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3, "stdout: {}", stdout(&out));
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["passed"], false);
}

#[test]
fn verify_skips_the_grid_when_n_is_large() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("wide.json");
    std::fs::write(
        &path,
        r#"{"M":3,"N":5,"H":[[1.0,0.2,-0.3,0.5,0.1],[0.4,-1.2,0.7,0.0,0.3],[-0.6,0.8,0.2,1.1,-0.4]],
            "y":[0.5,-0.2,0.9],"sigma_e2":0.1,"sigma_eps2":0.05}"#,
    )
    .unwrap();
    let out = grvml(&["verify", "--instance", path.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "stdout: {}", stdout(&out));
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["grid"]["status"], "skipped");
    assert_eq!(report["kkt"]["passed"], true);
}

#[test]
fn experiment_writes_named_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = grvml(&[
        "experiment",
        "--preset",
        "nmse-hist",
        "--trials",
        "4",
        "--seed",
        "7",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("nmse-hist-7.csv").exists());
    assert!(dir.path().join("nmse-hist-7.summary.json").exists());
    let csv = std::fs::read_to_string(dir.path().join("nmse-hist-7.csv")).unwrap();
    assert!(csv.starts_with("trial,estimator,nmse,squared_error,case,nu_star\n"));
    // every likelihood trial of this preset takes the positive-nu
    // rank-deficient path
    for line in csv.lines().skip(1).filter(|l| l.contains(",grv-ml,")) {
        assert!(line.contains("RankDeficientNuPositive"), "{line}");
    }
}

#[test]
fn experiment_respects_the_thread_cap_env() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_grvml"))
        .args([
            "experiment",
            "--preset",
            "mse-vs-m",
            "--trials",
            "3",
            "--seed",
            "11",
            "--out",
            dir.path().to_str().unwrap(),
            "--m-grid",
            "8,16",
        ])
        .env("GRVML_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("mse-vs-m-11.summary.json").exists());
}

#[test]
fn experiment_exits_2_when_an_estimator_fails_most_trials() {
    // M = 2 < N = 4 makes total least squares fail on every trial; the run
    // completes, records the failures, and signals the numeric-failure code
    let dir = tempfile::tempdir().unwrap();
    let out = grvml(&[
        "experiment",
        "--preset",
        "mse-vs-m",
        "--trials",
        "6",
        "--seed",
        "3",
        "--out",
        dir.path().to_str().unwrap(),
        "--m-grid",
        "2",
    ]);
    assert_eq!(code(&out), 2, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("mse-vs-m-3.summary.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(summary["total_failures"], 6);
    let cells = summary["grid"][0]["estimators"].as_array().unwrap();
    let tls = cells.iter().find(|c| c["estimator"] == "tls").unwrap();
    assert_eq!(tls["failures"], 6);
    assert_eq!(tls["trials_ok"], 0);
    // the other estimators kept working
    let ml = cells.iter().find(|c| c["estimator"] == "grv-ml").unwrap();
    assert_eq!(ml["trials_ok"], 6);
}

#[test]
fn experiment_rejects_unknown_preset_and_zero_trials() {
    let out = grvml(&[
        "experiment", "--preset", "bogus", "--trials", "5", "--seed", "1", "--out", "/tmp",
    ]);
    assert_eq!(code(&out), 1);
    let out = grvml(&[
        "experiment", "--preset", "nmse-hist", "--trials", "0", "--seed", "1", "--out", "/tmp",
    ]);
    assert_eq!(code(&out), 1);
}

#[test]
fn example_3_matches_every_recorded_value() {
    let out = grvml(&["example", "--id", "3"]);
    assert_eq!(code(&out), 0, "stdout: {}", stdout(&out));
    let text = stdout(&out);
    assert!(text.contains("nu_star"));
    assert!(text.contains("ok"));
}

#[test]
fn example_1_prints_two_optima() {
    let out = grvml(&["example", "--id", "1"]);
    let text = stdout(&out);
    assert!(text.contains("x_hat_1[0]"), "{text}");
    assert!(text.contains("x_hat_2[0]"), "{text}");
    assert!(text.contains("TwoFold"), "{text}");
}

#[test]
fn example_gate_reflects_recorded_value_drift() {
    // the recorded dual root of example 5 was produced from higher-precision
    // source data; the delta exceeds the 0.02 gate, so the command reports
    // the mismatch and exits 3
    let out = grvml(&["example", "--id", "5"]);
    assert_eq!(code(&out), 3);
    assert!(stdout(&out).contains("MISMATCH"));
}

#[test]
fn fig1_identities_pass() {
    let out = grvml(&["example", "--fig1"]);
    assert_eq!(code(&out), 0, "stdout: {}", stdout(&out));
}

#[test]
fn example_out_of_range_id_is_usage() {
    let out = grvml(&["example", "--id", "9"]);
    assert_eq!(code(&out), 1);
}
