//! End-to-end tests of the `verify` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn verify(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_verify"))
        .args(args)
        .output()
        .expect("binary should run")
}

fn write_file(dir: &Path, name: &str, content: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, content).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn run_reports_are_byte_identical_across_invocations() {
    let dir = tempfile::tempdir().unwrap();
    let circuit = write_file(dir.path(), "circuit.txt", "qubits 1\nT 0\n");
    let mut outputs = Vec::new();
    for name in ["a.json", "b.json"] {
        let report = dir.path().join(name);
        let out = verify(&[
            "run",
            &circuit,
            "--trials",
            "400",
            "--seed",
            "9",
            "--format",
            "json",
            "--report",
            report.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
        outputs.push(fs::read(&report).unwrap());
    }
    assert_eq!(outputs[0], outputs[1], "same seed must reproduce the same report bytes");
}

#[test]
fn run_report_is_self_consistent_json() {
    let dir = tempfile::tempdir().unwrap();
    let circuit = write_file(dir.path(), "circuit.txt", "qubits 1\nT 0\n");
    let out = verify(&["run", &circuit, "--trials", "300", "--seed", "3", "--format", "json"]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["trials"], 300);
    assert_eq!(report["protocol"], "epr");
    assert_eq!(report["run_policy"], "random");
    assert_eq!(report["dims"]["n"], 1);
    assert_eq!(report["dims"]["t"], 1);
    assert_eq!(report["dims"]["m"], 3);
    let per_run = report["per_run"].as_array().unwrap();
    assert_eq!(per_run.len(), 3);
    let total: u64 = per_run.iter().map(|row| row["trials"].as_u64().unwrap()).sum();
    assert_eq!(total, 300);
    let accepts: u64 = per_run.iter().map(|row| row["accepts"].as_u64().unwrap()).sum();
    assert_eq!(accepts, report["overall"]["accepts"].as_u64().unwrap());
}

#[test]
fn attacked_run_carries_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let circuit = write_file(dir.path(), "circuit.txt", "qubits 1\nX 0\n");
    let attack = write_file(dir.path(), "attack.txt", "1,0 X\n");
    let out = verify(&[
        "run", &circuit, "--attack", &attack, "--trials", "600", "--seed", "5", "--format", "json",
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["prover"], "attacked");
    assert_eq!(report["predictions"]["nu"], 1.0);
    assert_eq!(report["predictions"]["overall_bound"], 2.0 / 3.0);
}

#[test]
fn attack_on_direct_protocol_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let circuit = write_file(dir.path(), "circuit.txt", "qubits 1\nT 0\n");
    let attack = write_file(dir.path(), "attack.txt", "1,0 X.I.I\n");
    let out = verify(&["run", &circuit, "--attack", &attack, "--protocol", "direct"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("entangled-pair"), "stderr: {stderr}");
}

#[test]
fn usage_errors_exit_one() {
    let out = verify(&["run"]); // missing circuit path
    assert_eq!(out.status.code(), Some(1));
    let out = verify(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn oracle_classifies_instances() {
    let dir = tempfile::tempdir().unwrap();
    let circuit = write_file(dir.path(), "no.txt", "qubits 1\nX 0\n");
    let out = verify(&["oracle", &circuit]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("instance: no"), "stdout: {stdout}");
    let out = verify(&["oracle", &circuit, "--json"]);
    let parsed: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(parsed["kind"], "no");
    assert_eq!(parsed["p"], 0.0);
    assert_eq!(parsed["m"], 1);
}

#[test]
fn check_runs_selected_criteria() {
    let out = verify(&["check", "--only", "1", "4", "9"]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.matches("PASS").count(), 3, "stdout: {stdout}");
    assert!(stdout.contains("3/3 criteria passed"), "stdout: {stdout}");
}

#[test]
fn check_rejects_bad_ids() {
    let out = verify(&["check", "--only", "12"]);
    assert_eq!(out.status.code(), Some(1));
}
