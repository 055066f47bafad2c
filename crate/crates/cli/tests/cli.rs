use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn spade(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spade"))
        .args(args)
        .env_remove("SPADE_DATASET_DIR")
        .output()
        .expect("spawn spade")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn testdata() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/testdata")
}

fn value_line(o: &Output) -> String {
    stdout(o).lines().find(|l| l.starts_with("value")).unwrap_or_default().to_string()
}

#[test]
fn decode_examples() {
    assert_eq!(value_line(&spade(&["decode", "p8", "40"])), "value    1");
    let o = spade(&["decode", "p8", "6c"]);
    assert_eq!(value_line(&o), "value    7/2");
    assert!(stdout(&o).contains("k        1\n"));
    assert!(stdout(&o).contains("fraction 1100\n"));
    assert_eq!(value_line(&spade(&["decode", "p16", "8000"])), "value    NaR");
    assert_eq!(value_line(&spade(&["decode", "p32", "c0000000"])), "value    -1");
}

#[test]
fn decode_rejects_bad_words() {
    for args in [["decode", "p8", "6"], ["decode", "p8", "zz"], ["decode", "p9", "40"]] {
        let o = spade(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(stderr(&o).starts_with("error:"));
    }
    assert_eq!(spade(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn exhaustive_p8_passes() {
    let o = spade(&["conformance", "p8", "--exhaustive"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).starts_with("16384 vectors, 65536/65536 lane results match"));
    assert_eq!(spade(&["conformance", "p16", "--exhaustive"]).status.code(), Some(2));
}

#[test]
fn empty_campaign_is_vacuous() {
    let o = spade(&["conformance", "p32", "--count", "0"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("coverage: (none)"));
}

#[test]
fn random_campaign_reports_coverage() {
    let o = spade(&["conformance", "01", "--count", "600", "--seed", "42"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    for bin in ["signs--", "regime15=", "zero=", "nar=", "tie=", "multi-issue="] {
        assert!(out.contains(bin), "{bin} missing from {out}");
    }
}

#[test]
fn injected_fault_is_dumped_and_replayable() {
    let dir = tempfile::tempdir().unwrap();
    let failures = dir.path().join("failures.vec");
    let f = failures.to_str().unwrap();
    let o = spade(&["conformance", "p16", "--count", "600", "--inject-sticky-fault", "1", "--failures", f]);
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    assert!(stdout(&o).contains("FAIL"));
    let dumped = fs::read_to_string(&failures).unwrap();
    assert!(dumped.lines().count() > 0);

    let clean = spade(&["conformance", "p16", "--vectors", f]);
    assert_eq!(clean.status.code(), Some(0), "{}", stdout(&clean));
    let faulty = spade(&["conformance", "p16", "--vectors", f, "--inject-sticky-fault", "1"]);
    assert_eq!(faulty.status.code(), Some(1));
}

#[test]
fn dumped_vectors_replay_identically() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("run.vec");
    let file = file.to_str().unwrap();
    let first = spade(&["conformance", "p32", "--count", "300", "--seed", "9", "--dump", file]);
    let again = spade(&["conformance", "p32", "--vectors", file]);
    assert_eq!(first.status.code(), Some(0));
    assert_eq!(stdout(&first), stdout(&again));
    assert_eq!(fs::read_to_string(file).unwrap().lines().count(), 300);
}

#[test]
fn missing_vector_file_is_an_io_error() {
    let o = spade(&["conformance", "p8", "--vectors", "/no/such/file.vec"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/no/such/file.vec"));
}

#[test]
fn trace_records() {
    let dir = tempfile::tempdir().unwrap();
    let ops = dir.path().join("ops.txt");
    fs::write(&ops, "# one issue, lane 0 only\n00000060 00000068 1\n").unwrap();
    let log = dir.path().join("a.log");
    let o = spade(&["trace", "p8", ops.to_str().unwrap(), log.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(&log).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert!(text.contains(" stage3.lane0=00006000 "));
    assert!(text.contains(" stage5.lane0=74"));

    let log2 = dir.path().join("b.log");
    spade(&["trace", "p8", ops.to_str().unwrap(), log2.to_str().unwrap()]);
    assert_eq!(fs::read(&log).unwrap(), fs::read(&log2).unwrap());
}

#[test]
fn trace_edge_cases() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.txt");
    fs::write(&empty, "").unwrap();
    let log = dir.path().join("e.log");
    let o = spade(&["trace", "p16", empty.to_str().unwrap(), log.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(fs::read(&log).unwrap(), b"");

    let bad = dir.path().join("bad.txt");
    fs::write(&bad, "00000060 00000068\n00000060\n").unwrap();
    let o = spade(&["trace", "p8", bad.to_str().unwrap(), log.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn infer_missing_weights_names_path() {
    let o = spade(&["infer", "--weights", "/no/model.spdw", "--data", "/tmp"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/no/model.spdw"));
}

#[test]
fn infer_float_matches_recorded_baseline() {
    let data = testdata();
    let baseline = fs::read_to_string(data.join("baseline.txt")).unwrap();
    let recorded: usize = baseline
        .lines()
        .find_map(|l| l.strip_prefix("samples=1000 correct="))
        .unwrap()
        .parse()
        .unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_spade"))
        .args(["infer", "--precision", "float", "--count", "1000", "--csv", "--weights"])
        .arg(data.join("mnist_small.spdw"))
        .env("SPADE_DATASET_DIR", &data)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains(&format!("float64,1000,{recorded},")), "{out}");
    assert_eq!(out.lines().count(), 2);
}

#[test]
fn infer_p16_small_run() {
    let data = testdata();
    let o = spade(&[
        "infer",
        "--precision",
        "p16",
        "--count",
        "100",
        "--csv",
        "--weights",
        data.join("mnist_small.spdw").to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows: Vec<Vec<String>> = stdout(&o)
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    assert_eq!(rows[1][0], "p16");
    let delta: f64 = rows[1][4].parse().unwrap();
    assert!(delta.abs() <= 2.0, "p16 delta {delta} on 100 images");
}

#[test]
fn infer_per_layer_precisions() {
    let data = testdata();
    let weights = data.join("mnist_small.spdw");
    let o = spade(&[
        "infer", "--precision", "p8", "--count", "20", "--layers", "p16,-,p32,p8",
        "--weights", weights.to_str().unwrap(), "--data", data.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = spade(&[
        "infer", "--count", "20", "--layers", "p16,p8",
        "--weights", weights.to_str().unwrap(), "--data", data.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}
