use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_s2s-latency"));
    c.env("RUST_LOG", "error");
    c
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_writes_report_and_records() {
    let out = tempfile::tempdir().unwrap();
    let cfg = data("compare.toml");
    let o = run(&["simulate", "--config", s(&cfg), "--out-dir", s(out.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = std::fs::read_to_string(out.path().join("report.csv")).unwrap();
    assert_eq!(report.lines().count(), 6);
    let records = std::fs::read_to_string(out.path().join("per_utterance.jsonl")).unwrap();
    assert_eq!(records.lines().count(), 100);
    assert!(records
        .lines()
        .next()
        .unwrap()
        .contains("\"utterance_id\":\"utt001\""));
}

#[test]
fn flags_override_the_config() {
    let out = tempfile::tempdir().unwrap();
    let o = run(&[
        "compare",
        "--config",
        s(&data("compare.toml")),
        "--out-dir",
        s(out.path()),
        "--strategy",
        "none,gt:2",
        "--input-end",
        "last-token",
        "--seed",
        "9",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    let labels: Vec<&str> = stdout
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(labels, ["none", "gt:2"]);
    assert_eq!(
        stdout,
        std::fs::read_to_string(out.path().join("report.csv")).unwrap()
    );
}

#[test]
fn sweeps_write_curves() {
    let out = tempfile::tempdir().unwrap();
    let trace = data("trace.tsv");
    let o = run(&[
        "rate-sweep",
        "--trace",
        s(&trace),
        "--strategy",
        "gt:1",
        "--rates",
        "0.22,0.28",
        "--out-dir",
        s(out.path()),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let curve = std::fs::read_to_string(out.path().join("curve.csv")).unwrap();
    let values: Vec<&str> = curve
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap())
        .collect();
    assert_eq!(values, ["0.280000", "0.220000"]);

    let o = run(&[
        "scale-sweep",
        "--config",
        s(&data("compare.toml")),
        "--strategy",
        "none",
        "--alphas",
        "0.9,1.0",
        "--rate",
        "0.22",
        "--out-dir",
        s(out.path()),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let curve = std::fs::read_to_string(out.path().join("curve.csv")).unwrap();
    let latency: Vec<f64> = curve
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(5).unwrap().parse().unwrap())
        .collect();
    assert_eq!(latency.len(), 2);
    assert!(latency[0] > latency[1]);
}

#[test]
fn wait_k_retimes_the_trace() {
    let out = tempfile::tempdir().unwrap();
    let o = run(&[
        "simulate",
        "--trace",
        s(&data("trace.tsv")),
        "--strategy",
        "none",
        "--wait-k",
        "5",
        "--out-dir",
        s(out.path()),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let first = std::fs::read_to_string(out.path().join("per_utterance.jsonl")).unwrap();
    // wait-5 at 0.28 s per token: first chunk ready at 1.4 s plus compute.
    let start: f64 = first
        .lines()
        .next()
        .unwrap()
        .split("\"start_latency_s\":")
        .nth(1)
        .unwrap()
        .split(',')
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert!(start > 1.4 && start < 1.6, "{start}");
}

#[test]
fn augment_and_align2trace() {
    let dir = tempfile::tempdir().unwrap();
    let sentences = dir.path().join("s.txt");
    std::fs::write(&sentences, "one two three four\nfive six seven\n").unwrap();
    let manifest = dir.path().join("m.tsv");
    let o = run(&[
        "augment",
        "--input",
        s(&sentences),
        "--output",
        s(&manifest),
        "--seed",
        "3",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&manifest).unwrap();
    assert_eq!(text.lines().filter(|l| l.ends_with("<EOS>")).count(), 2);
    assert_eq!(text.lines().count(), 4);

    let align = dir.path().join("a.tsv");
    std::fs::write(
        &align,
        "u1\thello\t0.0\t0.35\nu1\t\t0.35\t0.5\nu1\tthere\t0.5\t0.9\n",
    )
    .unwrap();
    let trace = dir.path().join("t.tsv");
    let o = run(&["align2trace", "--input", s(&align), "--output", s(&trace)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = run(&["validate", "--trace", s(&trace)]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("1 utterances, 2 tokens"));
}

#[test]
fn input_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.tsv");
    std::fs::write(&bad, "u\t0\thi\t0.5\t0\nu\t1\tthere\t0.4\t1\n").unwrap();
    let o = run(&["validate", "--trace", s(&bad)]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));

    let o = run(&["compare", "--trace", s(&dir.path().join("missing.tsv"))]);
    assert_eq!(code(&o), 1);

    let o = run(&[
        "compare",
        "--trace",
        s(&data("trace.tsv")),
        "--strategy",
        "gt:0",
    ]);
    assert_eq!(code(&o), 1);

    let o = run(&[
        "scale-sweep",
        "--trace",
        s(&data("trace.tsv")),
        "--alphas",
        "2.0",
        "--out-dir",
        s(dir.path()),
    ]);
    assert_eq!(code(&o), 1);

    let o = run(&["frobnicate"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn help_exits_cleanly() {
    let o = run(&["--help"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("rate-sweep"));
}
