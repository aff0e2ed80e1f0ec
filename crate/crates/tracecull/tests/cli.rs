//! End-to-end checks of the command-line interface: subcommands, stdout
//! contracts, exit codes, and the files each stage leaves behind.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::tempdir;

fn tracecull(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tracecull"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn line_count(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count()
}

#[test]
fn gen_writes_node_logs_and_ground_truth() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("logs");
    let output = tracecull(&[
        "gen",
        "--requests",
        "30",
        "--simple-frac",
        "0.5",
        "--seed",
        "9",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success());
    // 15 simple on web1 (4 lines each) + 15 complex (6 on web1, 6 on app1, 4 on db1).
    assert_eq!(line_count(&out.join("web1.log")), 15 * 4 + 15 * 6);
    assert_eq!(line_count(&out.join("app1.log")), 15 * 6);
    assert_eq!(line_count(&out.join("db1.log")), 15 * 4);
    assert_eq!(line_count(&out.join("ground_truth.csv")), 31);
}

#[test]
fn gen_is_reproducible_byte_for_byte() {
    let dir = tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let output = tracecull(&[
            "gen",
            "--requests",
            "40",
            "--seed",
            "123",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(output.status.success());
    }
    for file in ["web1.log", "app1.log", "db1.log", "ground_truth.csv"] {
        assert_eq!(
            fs::read(a.join(file)).unwrap(),
            fs::read(b.join(file)).unwrap(),
            "{file} differs between identical runs"
        );
    }
}

#[test]
fn gen_warns_when_size_distributions_overlap() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("overlap");
    let output = tracecull(&[
        "gen",
        "--requests",
        "400",
        "--seed",
        "1",
        "--simple-size",
        "500,100",
        "--complex-size",
        "520,100",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("overlap"), "stderr was: {stderr}");
}

#[test]
fn transform_warns_about_streams_that_start_mid_request() {
    let dir = tempdir().unwrap();
    let log = dir.path().join("partial.log");
    // A reply SEND whose BEGIN predates the capture, then a clean episode.
    fs::write(
        &log,
        "SEND 100 web1 httpd 100 7 10.0.0.1:80 10.0.0.9:41000 64\n\
         BEGIN 200 web1 httpd 100 7 - - 0\n\
         END 300 web1 httpd 100 7 - - 0\n",
    )
    .unwrap();
    let output = tracecull(&[
        "transform",
        "--input",
        log.to_str().unwrap(),
        "--out",
        dir.path().join("partial.tup").to_str().unwrap(),
        "--eliminate",
        "--threshold",
        "500",
    ]);
    assert!(output.status.success());
    assert!(stdout(&output).contains("unmapped_emits=1"));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("unmapped"), "stderr was: {stderr}");
}

#[test]
fn threshold_prints_value_and_cluster_summary() {
    let dir = tempdir().unwrap();
    let out = dir.path();
    assert!(tracecull(&[
        "gen",
        "--requests",
        "200",
        "--seed",
        "5",
        "--out",
        out.to_str().unwrap(),
    ])
    .status
    .success());

    let output = tracecull(&[
        "threshold",
        "--input",
        out.join("web1.log").to_str().unwrap(),
        "--port",
        "80",
    ]);
    assert!(output.status.success());
    let text = stdout(&output);
    let value: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("threshold="))
        .expect("threshold line")
        .parse()
        .expect("numeric threshold");
    assert!(value > 200.0 && value < 800.0, "threshold {value}");
    assert!(text.contains("c_low="));
    assert!(text.contains("c_high="));
    assert!(text.contains("iterations="));
}

#[test]
fn threshold_exits_2_on_empty_sample_set() {
    let dir = tempdir().unwrap();
    let log = dir.path().join("empty.log");
    fs::write(&log, "").unwrap();
    let output = tracecull(&["threshold", "--input", log.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn transform_reports_counts_and_bytes() {
    let dir = tempdir().unwrap();
    let out = dir.path();
    assert!(tracecull(&[
        "gen",
        "--requests",
        "100",
        "--seed",
        "3",
        "--out",
        out.to_str().unwrap(),
    ])
    .status
    .success());

    let plain = tracecull(&[
        "transform",
        "--input",
        out.join("web1.log").to_str().unwrap(),
        "--out",
        out.join("web1.tup").to_str().unwrap(),
    ]);
    assert!(plain.status.success());
    let text = stdout(&plain);
    assert!(text.contains("records_in=440 tuples_out=440 dropped=0"));
    assert_eq!(line_count(&out.join("web1.tup")), 440);

    let eliminated = tracecull(&[
        "transform",
        "--input",
        out.join("web1.log").to_str().unwrap(),
        "--out",
        out.join("web1.elim.tup").to_str().unwrap(),
        "--eliminate",
        "--threshold",
        "500",
    ]);
    assert!(eliminated.status.success());
    let text = stdout(&eliminated);
    assert!(text.contains("records_in=440 tuples_out=280 dropped=160"));
    assert_eq!(line_count(&out.join("web1.elim.tup")), 280);
}

#[test]
fn transform_eliminate_requires_threshold() {
    let dir = tempdir().unwrap();
    let output = tracecull(&[
        "transform",
        "--input",
        dir.path().join("x.log").to_str().unwrap(),
        "--out",
        dir.path().join("x.tup").to_str().unwrap(),
        "--eliminate",
    ]);
    assert_eq!(output.status.code(), Some(2), "clap usage errors exit 2");
}

#[test]
fn correlate_writes_paths_and_summary() {
    let dir = tempdir().unwrap();
    let out = dir.path();
    assert!(tracecull(&[
        "gen",
        "--requests",
        "50",
        "--seed",
        "8",
        "--out",
        out.to_str().unwrap(),
    ])
    .status
    .success());
    for host in ["web1", "app1", "db1"] {
        assert!(tracecull(&[
            "transform",
            "--input",
            out.join(format!("{host}.log")).to_str().unwrap(),
            "--out",
            out.join(format!("{host}.tup")).to_str().unwrap(),
        ])
        .status
        .success());
    }
    let output = tracecull(&[
        "correlate",
        "--inputs",
        out.join("web1.tup").to_str().unwrap(),
        out.join("app1.tup").to_str().unwrap(),
        out.join("db1.tup").to_str().unwrap(),
        "--out",
        out.join("paths.jsonl").to_str().unwrap(),
    ]);
    assert!(output.status.success());
    assert!(stdout(&output).contains("paths=50"));
    assert!(stdout(&output).contains("orphans=0"));
    // 50 path lines + 1 summary line.
    assert_eq!(line_count(&out.join("paths.jsonl")), 51);
}

#[test]
fn pipeline_reproduces_the_default_mix_reduction() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("run");
    let output = tracecull(&[
        "pipeline",
        "--requests",
        "1000",
        "--simple-frac",
        "0.8",
        "--seed",
        "42",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success());
    let text = stdout(&output);
    assert!(text.contains("threshold="));
    assert!(text.contains("No elimination"));
    assert!(text.contains("Elimination"));
    assert!(text.contains("path reduction:  80% (80.00%)"), "stdout was:\n{text}");

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["path_count_before"], 1000);
    assert_eq!(report["path_count_after"], 200);
    assert_eq!(report["path_reduction_pct"], 80.0);
    assert_eq!(report["degenerate_dropped"], 800);

    for file in [
        "web1.log",
        "ground_truth.csv",
        "noelim/web1.tup",
        "noelim/paths.jsonl",
        "elim/web1.tup",
        "elim/paths.jsonl",
        "report.json",
    ] {
        assert!(out.join(file).exists(), "{file} missing");
    }
}

#[test]
fn pipeline_of_zero_requests_exits_clean() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("empty");
    let output = tracecull(&[
        "pipeline",
        "--requests",
        "0",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(0));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["path_count_before"], 0);
    assert_eq!(report["path_count_after"], 0);
    assert_eq!(report["tuple_count_before"], 0);
    assert_eq!(report["path_reduction_pct"], 0.0);
}

#[test]
fn gen_into_an_unwritable_directory_fails_with_exit_1() {
    let output = tracecull(&[
        "gen",
        "--requests",
        "1",
        "--out",
        "/proc/no-such-place/logs",
    ]);
    assert_eq!(output.status.code(), Some(1));
    assert!(!String::from_utf8_lossy(&output.stderr).is_empty());
}

#[test]
fn report_works_without_raw_files() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("run");
    assert!(tracecull(&[
        "pipeline",
        "--requests",
        "20",
        "--seed",
        "2",
        "--out",
        out.to_str().unwrap(),
    ])
    .status
    .success());
    let output = tracecull(&[
        "report",
        "--before",
        out.join("noelim/paths.jsonl").to_str().unwrap(),
        "--after",
        out.join("elim/paths.jsonl").to_str().unwrap(),
    ]);
    assert!(output.status.success());
    assert!(stdout(&output).contains("path reduction"));
}

#[test]
fn report_compares_two_correlated_branches() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("run");
    assert!(tracecull(&[
        "pipeline",
        "--requests",
        "300",
        "--seed",
        "6",
        "--out",
        out.to_str().unwrap(),
    ])
    .status
    .success());

    let report_out = out.join("recomputed.json");
    let output = tracecull(&[
        "report",
        "--before",
        out.join("noelim/paths.jsonl").to_str().unwrap(),
        "--after",
        out.join("elim/paths.jsonl").to_str().unwrap(),
        "--raw",
        out.join("web1.log").to_str().unwrap(),
        out.join("app1.log").to_str().unwrap(),
        out.join("db1.log").to_str().unwrap(),
        "--out",
        report_out.to_str().unwrap(),
    ]);
    assert!(output.status.success());
    assert!(stdout(&output).contains("Causal Paths"));

    // The standalone report must agree with the pipeline's own.
    let recomputed: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&report_out).unwrap()).unwrap();
    let original: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(recomputed, original);
}
