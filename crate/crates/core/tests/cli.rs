mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::scratch_dir;
use failsafe::dataset::{read_dataset, to_jsonl};

fn run(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_failsafe"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .env_remove("FAILSAFE_JOBS")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn config_path() -> String {
    concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/default.yaml").to_string()
}

#[test]
fn generate_verify_evaluate_split() {
    let dir = scratch_dir();
    let d = dir.path();
    let cfg = config_path();
    let g = run(
        &[
            "generate",
            "--config",
            &cfg,
            "--task",
            "pick_cube,stack_cube",
            "--seeds",
            "0..6",
            "--out",
            "out",
            "--jobs",
            "2",
        ],
        d,
    );
    assert_eq!(g.status.code(), Some(0), "{}", String::from_utf8_lossy(&g.stderr));
    let summary: serde_json::Value = serde_json::from_str(stdout(&g).trim()).unwrap();
    assert_eq!(summary["manifest_sha256"].as_str().unwrap().len(), 64);
    for f in
        ["out/dataset.jsonl", "out/manifest.json", "out/shard-pick_cube.jsonl", "out/shard-stack_cube.jsonl"]
    {
        assert!(d.join(f).exists(), "{f}");
    }

    let v = run(&["verify", "--data", "out/dataset.jsonl", "--config", &cfg], d);
    assert_eq!(v.status.code(), Some(0), "{}", String::from_utf8_lossy(&v.stderr));
    assert!(stdout(&v).contains("fraction 1.000"));

    let s = run(&["stats", "--data", "out/dataset.jsonl"], d);
    assert_eq!(s.status.code(), Some(0));
    assert!(stdout(&s).contains("pick_cube"));

    let e = run(&["evaluate", "--data", "out/dataset.jsonl", "--assistant", "oracle"], d);
    assert_eq!(e.status.code(), Some(0));
    let text = stdout(&e);
    assert!(text.contains("binary_success 1.0000"), "{text}");
    assert!(text.contains("type_accuracy 1.0000"), "{text}");

    let sp = run(&["split", "--data", "out/dataset.jsonl", "--test-seeds", "4..6", "--out", "split"], d);
    assert_eq!(sp.status.code(), Some(0));
    let test = read_dataset(&d.join("split/test.jsonl")).unwrap();
    let train = read_dataset(&d.join("split/train.jsonl")).unwrap();
    assert!(test.iter().all(|x| x.provenance.seed >= 4));
    assert!(train.iter().all(|x| x.provenance.seed < 4));
}

#[test]
fn generate_is_reproducible() {
    let dir = scratch_dir();
    let d = dir.path();
    let args = |out: &'static str| ["generate", "--task", "push_cube", "--seeds", "0..=4", "--out", out];
    let a = run(&args("a"), d);
    let b = run(&[&args("b")[..], &["--jobs", "3"]].concat(), d);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(stdout(&a), stdout(&b));
    assert_eq!(
        std::fs::read(d.join("a/dataset.jsonl")).unwrap(),
        std::fs::read(d.join("b/dataset.jsonl")).unwrap()
    );
}

#[test]
fn verify_refuses_a_different_config() {
    let dir = scratch_dir();
    let d = dir.path();
    assert_eq!(
        run(&["generate", "--task", "pick_cube", "--seeds", "0..3", "--out", "o"], d).status.code(),
        Some(0)
    );
    std::fs::write(d.join("other.yaml"), "dataset:\n  candidates_per_case: 2\n").unwrap();
    let v = run(&["verify", "--data", "o/dataset.jsonl", "--config", "other.yaml"], d);
    assert_eq!(v.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&v.stderr).contains("config hash"));
}

#[test]
fn tampered_recovery_is_an_acceptance_failure() {
    let dir = scratch_dir();
    let d = dir.path();
    assert_eq!(
        run(&["generate", "--task", "pick_cube", "--seeds", "0..4", "--out", "o"], d).status.code(),
        Some(0)
    );
    let path = d.join("o/dataset.jsonl");
    let mut entries = read_dataset(&path).unwrap();
    let e = entries.iter_mut().find(|e| e.is_failure).expect("a failure entry");
    let mut r = e.recovery.unwrap();
    r.d_position.z += 0.2;
    e.recovery = Some(r);
    std::fs::write(&path, to_jsonl(&entries)).unwrap();
    let v = run(&["verify", "--data", "o/dataset.jsonl"], d);
    assert_eq!(v.status.code(), Some(3), "{}", stdout(&v));
}

#[test]
fn usage_and_config_errors() {
    let dir = scratch_dir();
    let d = dir.path();
    assert_eq!(run(&["generate", "--seeds", "0..2"], d).status.code(), Some(1));
    assert_eq!(
        run(&["generate", "--task", "fly", "--seeds", "0..2", "--out", "o"], d).status.code(),
        Some(1)
    );
    std::fs::write(d.join("bad.yaml"), "planner:\n  steps_per_stage: 3\n").unwrap();
    let o = run(&["generate", "--config", "bad.yaml", "--seeds", "0..2", "--out", "o"], d);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("steps_per_stage"));
    assert_eq!(run(&["stats", "--data", "missing.jsonl"], d).status.code(), Some(2));
}

#[test]
fn stats_from_counts() {
    let dir = scratch_dir();
    let csv = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/reference_counts.csv");
    let o = run(&["stats", "--counts", csv], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("131040"), "{text}");
    assert!(text.contains("55961"));
    assert!(text.contains("2.3:1"));
}

#[test]
fn supervise_with_traces() {
    let dir = scratch_dir();
    let d = dir.path();
    let o = run(
        &["supervise", "--task", "pick_cube", "--seeds", "0..5", "--assistant", "oracle", "--trace", "tr"],
        d,
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let line = stdout(&o);
    assert!(line.starts_with("pick_cube episodes 5 unassisted"), "{line}");
    let traces: Vec<_> = std::fs::read_dir(d.join("tr")).unwrap().collect();
    assert_eq!(traces.len(), 10);
    let one = std::fs::read_to_string(d.join("tr/pick_cube_00000_oracle.csv")).unwrap();
    assert!(one.starts_with(failsafe::supervisor::TRACE_HEADER));
}
