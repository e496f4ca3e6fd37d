use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};

fn fixture(name: &str) -> String {
    format!("{}/tests/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn tmp(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xorsleuth")).args(args).output().expect("binary runs")
}

fn code(args: &[&str]) -> i32 {
    run(args).status.code().expect("exit code")
}

fn json_of(args: &[&str]) -> (i32, Value) {
    let mut all = args.to_vec();
    all.extend(["--json", "-"]);
    let out = run(&all);
    let v = serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)));
    (out.status.code().unwrap(), v)
}

#[test]
fn parse_accepts_fixtures_and_rejects_garbage() {
    assert_eq!(code(&["parse", &fixture("nsl_xor.proto")]), 0);
    let bad = tmp("bad.proto");
    std::fs::write(&bad, "protocol x\nrole A:\n  send foo(\n").unwrap();
    let out = run(&["parse", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains(":3:"));
    assert_eq!(code(&["parse", &fixture("no_such_file.proto")]), 2);
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(code(&[]), 2);
    assert_eq!(code(&["frobnicate"]), 2);
    assert_eq!(code(&["analyze", &fixture("p2.proto"), "--sessions", "many"]), 2);
    assert_eq!(code(&["--help"]), 0);
}

#[test]
fn assumption_check_exit_codes() {
    assert_eq!(code(&["check-assumptions", &fixture("p1.proto")]), 1);
    assert_eq!(code(&["check-assumptions", &fixture("key_leak.proto")]), 1);
    let (c, v) = json_of(&["check-assumptions", &fixture("nsl_xor.proto")]);
    assert_eq!(c, 0);
    assert_eq!(v["results"]["status"], "passed");
    assert_eq!(v["exit_code"], 0);
}

#[test]
fn envelope_records_input_digest() {
    let path = fixture("p1.proto");
    let (_, v) = json_of(&["parse", &path]);
    let digest = hex::encode(Sha256::digest(std::fs::read(&path).unwrap()));
    assert_eq!(v["inputs"][0]["sha256"], Value::from(digest));
    assert_eq!(v["command"], "parse");
}

#[test]
fn munut_and_tagging() {
    assert_eq!(code(&["check-munut", &fixture("nsl_xor.proto"), &fixture("nsl_xor.proto")]), 1);
    let tagged = tmp("nsl_t9.proto");
    assert_eq!(code(&["tag", &fixture("nsl_xor.proto"), "--label", "t9", "-o", tagged.to_str().unwrap()]), 0);
    for label in ["fresh", "Upper", "role"] {
        assert_eq!(code(&["tag", &fixture("nsl_xor.proto"), "--label", label]), 2, "{label}");
    }
    assert_eq!(code(&["check-munut", tagged.to_str().unwrap(), &fixture("nsl_xor_other.proto")]), 0);
    assert_eq!(code(&["check-assumptions", tagged.to_str().unwrap()]), 0);
}

#[test]
fn analysis_verdicts() {
    let (c, v) = json_of(&["analyze", &fixture("nsl_xor.proto"), "--oracle-verify"]);
    assert_eq!(c, 1);
    assert_eq!(v["results"]["verdict"], "attack");
    assert_eq!(v["results"]["verification"]["oracle"], true);
    assert_eq!(code(&["analyze", &fixture("nsl_xor_tagged.proto")]), 0);
    assert_eq!(code(&["analyze", &fixture("nsl_xor_tagged.proto"), "--node-budget", "2"]), 3);
    assert_eq!(code(&["analyze", &fixture("p2.proto"), "--sessions", "0"]), 2);
}

#[test]
fn oracle_verify_checks_saved_traces() {
    let report = tmp("p1p2.json");
    let args = ["analyze", &fixture("p1.proto"), "--combined", &fixture("p2.proto"), "--json", report.to_str().unwrap()];
    assert_eq!(code(&args), 1);
    assert_eq!(code(&["oracle-verify", report.to_str().unwrap()]), 0);

    // without the leaked key in the knowledge the trace no longer holds
    let text = std::fs::read_to_string(&report).unwrap().replace("\"sh(const(a:Agent),const(s:Agent))\"", "\"const(a:Agent)\"");
    let tampered = tmp("p1p2_tampered.json");
    std::fs::write(&tampered, text).unwrap();
    assert_eq!(code(&["oracle-verify", tampered.to_str().unwrap()]), 1);

    let junk = tmp("junk.json");
    std::fs::write(&junk, "{\"nothing\": 1}").unwrap();
    assert_eq!(code(&["oracle-verify", junk.to_str().unwrap()]), 2);
}
