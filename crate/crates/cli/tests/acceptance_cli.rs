//! Binary-level acceptance checks: the report determinism guarantee (9/9,
//! continuing the numbered suite in the core crate) plus pipeline smoke
//! tests. Every test drives the compiled `tmprompt` binary over a shared
//! synthetic workspace built once per test run.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;
use std::time::Instant;

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tmprompt"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("spawn tmprompt");
    assert!(
        out.status.success(),
        "tmprompt {:?} failed:\n{}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

struct Fixture {
    _dir: TempDir,
    root: PathBuf,
}

/// Corpus, store, index, model, and aligner built once and shared by all
/// tests in this binary.
fn fixture() -> &'static Path {
    static FIXTURE: OnceLock<Fixture> = OnceLock::new();
    &FIXTURE
        .get_or_init(|| {
            let dir = tempfile::tempdir().expect("tempdir");
            let root = dir.path().to_path_buf();
            let p = |name: &str| root.join(name).to_string_lossy().into_owned();
            run_ok(&[
                "gen-corpus",
                "--seed",
                "5",
                "--out",
                &p(""),
                "--train-pairs",
                "400",
                "--high-items",
                "12",
                "--low-items",
                "6",
            ]);
            run_ok(&[
                "ingest",
                "--tsv",
                &p("train.tsv"),
                "--source-lang",
                "src",
                "--target-lang",
                "tgt",
                "--out",
                &p("store.json"),
            ]);
            run_ok(&["index", "--store", &p("store.json"), "--out", &p("index.json")]);
            run_ok(&[
                "train",
                "--store",
                &p("store.json"),
                "--lambda",
                "0.65",
                "--out",
                &p("model.json"),
            ]);
            run_ok(&[
                "train-aligner",
                "--store",
                &p("store.json"),
                "--out",
                &p("aligner.json"),
            ]);
            Fixture { _dir: dir, root }
        })
        .root
}

fn fx(name: &str) -> String {
    fixture().join(name).to_string_lossy().into_owned()
}

fn eval_report(jobs: &str, report: &Path) {
    run_ok(&[
        "eval",
        "--store",
        &fx("store.json"),
        "--index",
        &fx("index.json"),
        "--model",
        &fx("model.json"),
        "--aligner",
        &fx("aligner.json"),
        "--test",
        &fx("test.tsv"),
        "--conjunctions",
        &fx("conjunctions.conf"),
        "--buckets",
        "fms:0,0.2,0.4,0.6,0.8,1.0",
        "--beam",
        "2",
        "--jobs",
        jobs,
        "--report",
        &report.to_string_lossy(),
    ]);
}

#[test]
fn a9_reports_are_identical_across_worker_counts() {
    let started = Instant::now();
    let out = tempfile::tempdir().unwrap();
    let r1 = out.path().join("report-jobs1.txt");
    let r8 = out.path().join("report-jobs8.txt");
    let r8b = out.path().join("report-jobs8-again.txt");
    eval_report("1", &r1);
    eval_report("8", &r8);
    eval_report("8", &r8b);
    let b1 = fs::read(&r1).unwrap();
    let b8 = fs::read(&r8).unwrap();
    let b8b = fs::read(&r8b).unwrap();
    assert!(!b1.is_empty(), "report came out empty");
    assert_eq!(b1, b8, "--jobs 1 and --jobs 8 reports differ");
    assert_eq!(b8, b8b, "two --jobs 8 runs differ");
    println!(
        "[PASS] 9/9 determinism: eval reports byte-identical across --jobs 1, \
         --jobs 8, and a repeat run ({:.1} s)",
        started.elapsed().as_secs_f64()
    );
}

#[test]
fn translate_emits_one_line_per_input_line() {
    let out = tempfile::tempdir().unwrap();
    let input = out.path().join("input.txt");
    let test = fs::read_to_string(fx("test.tsv")).unwrap();
    let mut sources: Vec<&str> = test
        .lines()
        .take(3)
        .map(|l| l.split('\t').next().unwrap())
        .collect();
    sources.insert(1, ""); // blank lines pass through untranslated
    fs::write(&input, sources.join("\n")).unwrap();

    let store = fx("store.json");
    let index = fx("index.json");
    let model = fx("model.json");
    for extra in [&["--beam", "2"][..], &["--no-tm", "--beam", "2"][..]] {
        let mut args = vec![
            "translate",
            "--store",
            &store,
            "--index",
            &index,
            "--model",
            &model,
            "--input",
            input.to_str().unwrap(),
        ];
        args.extend_from_slice(extra);
        let out = run_ok(&args);
        let stdout = String::from_utf8(out.stdout).unwrap();
        let lines: Vec<&str> = stdout.lines().collect();
        assert_eq!(lines.len(), 4, "expected 4 output lines, got {lines:?}");
        assert!(lines[1].is_empty(), "blank input line should stay blank");
        assert!(!lines[0].is_empty() && !lines[2].is_empty() && !lines[3].is_empty());
    }
    println!("[PASS] translate: line-for-line output, blanks preserved");
}

#[test]
fn retrieve_finds_a_stored_sentence_exactly() {
    let out = tempfile::tempdir().unwrap();
    let query = out.path().join("query.txt");
    let train = fs::read_to_string(fx("train.tsv")).unwrap();
    let first_source = train.lines().next().unwrap().split('\t').next().unwrap();
    fs::write(&query, format!("{first_source}\n")).unwrap();

    let res = run_ok(&[
        "retrieve",
        "--store",
        &fx("store.json"),
        "--index",
        &fx("index.json"),
        "--input",
        query.to_str().unwrap(),
    ]);
    let stdout = String::from_utf8(res.stdout).unwrap();
    let first = stdout.lines().next().unwrap();
    assert!(
        first.starts_with("0\t1.000000\t"),
        "expected entry 0 at score 1.000000, got {first:?}"
    );
    println!("[PASS] retrieve: exact stored sentence comes back with score 1");
}

#[test]
fn bucket_breakdown_prints_every_interval() {
    let res = run_ok(&[
        "eval",
        "--store",
        &fx("store.json"),
        "--index",
        &fx("index.json"),
        "--model",
        &fx("model.json"),
        "--test",
        &fx("test.tsv"),
        "--conjunctions",
        &fx("conjunctions.conf"),
        "--systems",
        "baseline,directly",
        "--buckets",
        "fms:0,0.2,0.4,0.6,0.8,1.0",
        "--beam",
        "1",
        "--jobs",
        "2",
    ]);
    let stdout = String::from_utf8(res.stdout).unwrap();
    for label in [
        "[0.00, 0.20)",
        "[0.20, 0.40)",
        "[0.40, 0.60)",
        "[0.60, 0.80)",
        "[0.80, 1.00]",
    ] {
        assert!(stdout.contains(label), "missing bucket {label} in:\n{stdout}");
    }
    println!("[PASS] eval: all five similarity intervals reported");
}

#[test]
fn bad_usage_fails_fast_with_the_right_exit_codes() {
    let out = bin().arg("--definitely-not-a-flag").output().unwrap();
    assert_eq!(out.status.code(), Some(2), "clap usage errors exit 2");

    let out = bin().arg("eval").output().unwrap();
    assert_eq!(out.status.code(), Some(1), "runtime validation errors exit 1");
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(
        stderr.contains("--store"),
        "error should name the missing flag, got: {stderr}"
    );
    println!("[PASS] errors: usage exits 2, missing inputs exit 1 and name the flag");
}
