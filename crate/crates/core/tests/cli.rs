use std::process::Command;

use hetcrash::cli::{run_command, EXIT_ERROR, EXIT_OK, EXIT_VIOLATION};

fn run(args: &[&str]) -> (i32, String) {
    let mut out = Vec::new();
    let code = run_command(std::iter::once("hetcrash").chain(args.iter().copied()), &mut out);
    (code, String::from_utf8(out).unwrap())
}

fn bin(args: &[&str], seed: Option<&str>) -> (i32, String) {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_hetcrash"));
    cmd.args(args);
    match seed {
        Some(s) => cmd.env("HETCRASH_SEED", s),
        None => cmd.env_remove("HETCRASH_SEED"),
    };
    let out = cmd.output().unwrap();
    (out.status.code().unwrap(), String::from_utf8(out.stdout).unwrap())
}

#[test]
fn run_reports_violations_with_exit_code() {
    let (code, out) = run(&["run", "fig2_t10", "--strategy", "latest-dev"]);
    assert_eq!(code, EXIT_VIOLATION, "{out}");
    assert!(out.contains("verdict=VIOLATION"), "{out}");
    assert!(out.contains("O3"), "{out}");

    let (code, out) = run(&["run", "fig2_t10.trace", "-s", "wb-mark-end"]);
    assert_eq!(code, EXIT_OK, "{out}");
    assert!(out.contains("verdict=PASS"), "{out}");
}

#[test]
fn run_reads_trace_files() {
    let path = std::env::temp_dir().join(format!("hetcrash-cli-{}.trace", std::process::id()));
    std::fs::write(&path, "page_size 2\nwrite 0 0 \"ab\"\nsync\ncrash\n").unwrap();
    let (code, out) = run(&["run", path.to_str().unwrap(), "-s", "naive-disk"]);
    assert_eq!(code, EXIT_VIOLATION, "{out}");
    let (code, out) = run(&["run", path.to_str().unwrap(), "-s", "versioned-mark"]);
    assert_eq!(code, EXIT_OK, "{out}");
    std::fs::remove_file(path).unwrap();
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&["run", "/no/such/file.trace", "-s", "latest-dev"]).0, EXIT_ERROR);
    assert_eq!(run(&["run", "fig1_t5", "-s", "optimistic"]).0, EXIT_ERROR);
    assert_eq!(run(&["sweep", "--world", "d"]).0, EXIT_ERROR);
    assert_eq!(run(&["sweep", "--page-size", "0"]).0, EXIT_ERROR);
    assert_eq!(run(&["frobnicate"]).0, EXIT_ERROR);
    assert_eq!(run(&["--help"]).0, EXIT_OK);
}

#[test]
fn corpus_table() {
    let (code, out) = run(&["corpus"]);
    assert_eq!(code, EXIT_OK);
    let rows: Vec<&str> = out.lines().skip(1).collect();
    assert_eq!(rows.len(), 9);
    for row in rows {
        assert_eq!(row.split_whitespace().last(), Some("PASS"), "{row}");
    }
    let (code, out) = run(&["show", "fig3_t10"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("crash"));
}

#[test]
fn small_sweeps_meet_expectations() {
    let (code, out) = run(&["sweep", "--world", "a", "--max-events", "3"]);
    assert_eq!(code, EXIT_OK, "{out}");
    assert!(!out.contains("UNEXPECTED"), "{out}");

    let (code, out) = run(&[
        "sweep", "--world", "c", "--max-events", "3", "--expect", "versioned-mark=fail",
    ]);
    assert_eq!(code, EXIT_VIOLATION, "{out}");
    assert!(out.contains("strategy=versioned-mark expect=fail"), "{out}");
}

#[test]
fn records_do_not_depend_on_workers() {
    let args = |w| vec!["sweep", "--world", "b", "--max-events", "4", "--records", "--workers", w];
    let (c1, one) = bin(&args("1"), None);
    let (c3, three) = bin(&args("3"), None);
    assert_eq!((c1, c3), (EXIT_OK, EXIT_OK));
    assert!(one.lines().count() > 100);
    assert_eq!(one, three);
}

#[test]
fn sampled_sweeps_follow_the_seed() {
    let args = ["sweep", "--world", "c", "--max-events", "8", "--sample", "200", "--records"];
    let (_, a) = bin(&args, Some("42"));
    let (_, b) = bin(&args, Some("42"));
    let (_, c) = bin(&args, Some("43"));
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert!(a.contains("seed=42"), "{a}");
    assert_eq!(bin(&args, Some("forty-two")).0, EXIT_ERROR);
}
