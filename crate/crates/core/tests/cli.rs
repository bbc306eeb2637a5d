//! End-to-end checks of the command-line surface: exit codes, output
//! formats and wiring between subcommands.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rankeval"))
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().unwrap();
    assert!(
        out.status.success(),
        "command failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn gen_and_train(dir: &Path) {
    run_ok(bin()
        .args(["gen-synth", "--out-dir"])
        .arg(dir)
        .args(["--n-segments", "40", "--seed", "9"]));
    run_ok(bin()
        .args(["train", "--pairs"])
        .arg(dir.join("human.jsonl"))
        .arg("--out")
        .arg(dir.join("model.json"))
        .args(["--seed", "9"]));
}

#[test]
fn unknown_flag_is_usage_error() {
    let out = bin().args(["train", "--bogus", "x"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_input_file_is_data_error() {
    let out = bin()
        .args([
            "train",
            "--pairs",
            "/nonexistent/pairs.jsonl",
            "--out",
            "/tmp/never.json",
            "--seed",
            "1",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
}

#[test]
fn train_is_byte_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    run_ok(bin()
        .args(["gen-synth", "--out-dir"])
        .arg(dir)
        .args(["--n-segments", "40", "--seed", "9"]));
    for name in ["m1.json", "m2.json"] {
        run_ok(bin()
            .args(["train", "--pairs"])
            .arg(dir.join("human.jsonl"))
            .arg("--out")
            .arg(dir.join(name))
            .args(["--seed", "9"]));
    }
    let a = std::fs::read(dir.join("m1.json")).unwrap();
    let b = std::fs::read(dir.join("m2.json")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn score_writes_one_value_per_line() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    gen_and_train(dir);
    // score the references against themselves
    run_ok(bin()
        .args(["score", "--model"])
        .arg(dir.join("model.json"))
        .arg("--hyp")
        .arg(dir.join("refs.txt"))
        .arg("--refs")
        .arg(dir.join("refs.txt"))
        .arg("--out")
        .arg(dir.join("scores.txt")));
    let scores = std::fs::read_to_string(dir.join("scores.txt")).unwrap();
    let n_refs = std::fs::read_to_string(dir.join("refs.txt")).unwrap().lines().count();
    let values: Vec<f64> = scores.lines().map(|l| l.parse().unwrap()).collect();
    assert_eq!(values.len(), n_refs);
}

#[test]
fn eval_length_prints_one_decimal_percentage() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    gen_and_train(dir);
    let out = run_ok(bin()
        .args(["eval-length", "--model"])
        .arg(dir.join("model.json"))
        .arg("--nbest")
        .arg(dir.join("nbest.txt"))
        .arg("--refs")
        .arg(dir.join("refs.txt")));
    let text = String::from_utf8(out.stdout).unwrap();
    let line = text.trim();
    // e.g. "115.7": digits, one dot, exactly one decimal
    let (int_part, frac) = line.split_once('.').expect("decimal point");
    assert!(int_part.chars().all(|c| c.is_ascii_digit()), "{line}");
    assert_eq!(frac.len(), 1, "{line}");
}

#[test]
fn eval_tau_prints_value_in_range() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    gen_and_train(dir);
    let out = run_ok(bin()
        .args(["eval-tau", "--model"])
        .arg(dir.join("model.json"))
        .arg("--pairs")
        .arg(dir.join("human.jsonl")));
    let tau: f64 = String::from_utf8(out.stdout).unwrap().trim().parse().unwrap();
    assert!((-1.0..=1.0).contains(&tau));
}

#[test]
fn rerank_emits_one_hypothesis_per_segment() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    gen_and_train(dir);
    run_ok(bin()
        .args(["rerank", "--model"])
        .arg(dir.join("model.json"))
        .arg("--nbest")
        .arg(dir.join("nbest.txt"))
        .arg("--refs")
        .arg(dir.join("refs.txt"))
        .arg("--out")
        .arg(dir.join("selected.txt")));
    let selected = std::fs::read_to_string(dir.join("selected.txt")).unwrap();
    assert_eq!(selected.lines().count(), 40);
}

#[test]
fn self_train_writes_adapted_model_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    gen_and_train(dir);
    run_ok(bin()
        .args(["self-train", "--model"])
        .arg(dir.join("model.json"))
        .arg("--nbest")
        .arg(dir.join("nbest.txt"))
        .arg("--refs")
        .arg(dir.join("refs.txt"))
        .arg("--out")
        .arg(dir.join("adapted.json"))
        .arg("--report")
        .arg(dir.join("report.json"))
        .args(["--rounds", "1", "--seed", "9"]));
    assert!(dir.join("adapted.json").exists());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    let rounds = report.as_array().unwrap();
    assert_eq!(rounds.len(), 1);
    assert!(rounds[0]["label_agreement"].as_f64().unwrap() > 0.0);
}
