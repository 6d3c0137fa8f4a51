//! End-to-end pipeline through the compiled binary:
//! synth -> run -> aggregate -> stats -> report.

use std::process::{Command, Output};

fn migrid(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_migrid"));
    cmd.args(args);
    cmd.env_remove("MIGRID_DATA_DIR");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("spawn migrid")
}

fn assert_success(out: &Output, what: &str) {
    assert!(
        out.status.success(),
        "{what} failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn full_pipeline_on_synthetic_subjects() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let out = dir.path().join("out");
    let data_s = data.to_str().unwrap();
    let out_s = out.to_str().unwrap();

    // Two small subjects; enough trials for 5-fold CV.
    let synth = migrid(
        &[
            "synth",
            "--data-dir",
            data_s,
            "--subjects",
            "1-3",
            "--runs",
            "4,8",
            "--channels",
            "8",
            "--trials-per-label",
            "10",
            "--effect-strength",
            "2.0",
        ],
        &[],
    );
    assert_success(&synth, "synth");
    assert!(data.join("S001/S001R04.edf").exists());
    assert!(data.join("S003/S003R08.edf").exists());

    let run = migrid(
        &[
            "run",
            "--data-dir",
            data_s,
            "--subjects",
            "1-3",
            "--runs",
            "4,8",
            "--folds",
            "5",
            "--out",
            out_s,
            "--jobs",
            "2",
        ],
        &[],
    );
    assert_success(&run, "run");
    let results = out.join("results.csv");
    let first = std::fs::read(&results).unwrap();
    // 3 subjects x 115 cells + header.
    assert_eq!(
        String::from_utf8_lossy(&first).lines().count(),
        3 * 115 + 1
    );

    // Determinism: identical config and seed reproduce the bytes.
    let rerun = migrid(
        &[
            "run",
            "--data-dir",
            data_s,
            "--subjects",
            "1-3",
            "--runs",
            "4,8",
            "--folds",
            "5",
            "--out",
            out_s,
            "--jobs",
            "1",
        ],
        &[],
    );
    assert_success(&rerun, "rerun");
    let second = std::fs::read(&results).unwrap();
    assert_eq!(first, second, "results.csv changed between identical runs");

    let aggregate = migrid(
        &["aggregate", "--results", results.to_str().unwrap(), "--out", out_s],
        &[],
    );
    assert_success(&aggregate, "aggregate");
    let agg_text = std::fs::read_to_string(out.join("aggregate.csv")).unwrap();
    assert_eq!(agg_text.lines().count(), 115 + 1);

    let stats = migrid(
        &["stats", "--results", results.to_str().unwrap(), "--out", out_s],
        &[],
    );
    assert_success(&stats, "stats");
    let stdout = String::from_utf8_lossy(&stats.stdout);
    assert!(stdout.contains("band:"), "stats output: {stdout}");
    assert!(stdout.contains("Bonferroni threshold"));
    assert!(out.join("anova.csv").exists());
    let pw = std::fs::read_to_string(out.join("pairwise_windows.csv")).unwrap();
    assert_eq!(pw.lines().count(), 10 + 1);
    let pb = std::fs::read_to_string(out.join("pairwise_bands.csv")).unwrap();
    assert_eq!(pb.lines().count(), 253 + 1);

    let report = migrid(
        &["report", "--results", results.to_str().unwrap(), "--out", out_s],
        &[],
    );
    assert_success(&report, "report");
    let svg_a = std::fs::read(out.join("heatmap.svg")).unwrap();
    assert!(String::from_utf8_lossy(&svg_a).starts_with("<svg"));
    let best = std::fs::read_to_string(out.join("best_per_subject.csv")).unwrap();
    assert_eq!(best.lines().count(), 3 + 1);

    // Report is byte-deterministic too.
    let report2 = migrid(
        &["report", "--results", results.to_str().unwrap(), "--out", out_s],
        &[],
    );
    assert_success(&report2, "report rerun");
    let svg_b = std::fs::read(out.join("heatmap.svg")).unwrap();
    assert_eq!(svg_a, svg_b);
}

#[test]
fn missing_data_dir_is_a_config_error() {
    let out = migrid(&["run", "--subjects", "1"], &[]);
    assert_eq!(out.status.code(), Some(2), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn data_dir_env_var_is_honored() {
    let dir = tempfile::tempdir().unwrap();
    let data_s = dir.path().to_str().unwrap();
    let out = migrid(
        &[
            "synth",
            "--subjects",
            "1",
            "--runs",
            "4",
            "--channels",
            "4",
            "--trials-per-label",
            "3",
        ],
        &[("MIGRID_DATA_DIR", data_s)],
    );
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(dir.path().join("S001/S001R04.edf").exists());
}

#[test]
fn missing_results_file_is_a_data_error() {
    let out = migrid(&["stats", "--results", "/nonexistent/results.csv"], &[]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn unreachable_fetch_exits_with_partial_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = migrid(
        &[
            "fetch",
            "--data-dir",
            dir.path().to_str().unwrap(),
            "--subjects",
            "1",
            "--runs",
            "4",
            "--base-url",
            "http://127.0.0.1:1",
        ],
        &[],
    );
    assert_eq!(out.status.code(), Some(4), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn config_file_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("from_config");
    let conf = dir.path().join("migrid.conf");
    std::fs::write(
        &conf,
        format!("data_dir = {}\nsubjects = 2\n", data.display()),
    )
    .unwrap();
    let out = migrid(
        &[
            "synth",
            "--config",
            conf.to_str().unwrap(),
            "--data-dir",
            "/ignored/by/config",
            "--subjects",
            "1",
            "--runs",
            "4",
            "--channels",
            "4",
            "--trials-per-label",
            "3",
        ],
        &[],
    );
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(data.join("S002/S002R04.edf").exists());
    assert!(!data.join("S001").exists());
}

#[test]
fn csv_roundtrip_preserves_six_decimals() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let out = dir.path().join("out");
    let synth = migrid(
        &[
            "synth",
            "--data-dir",
            data.to_str().unwrap(),
            "--subjects",
            "1",
            "--runs",
            "4",
            "--channels",
            "6",
            "--trials-per-label",
            "8",
        ],
        &[],
    );
    assert_success(&synth, "synth");
    let run = migrid(
        &[
            "run",
            "--data-dir",
            data.to_str().unwrap(),
            "--subjects",
            "1",
            "--runs",
            "4",
            "--folds",
            "4",
            "--out",
            out.to_str().unwrap(),
            "--jobs",
            "1",
        ],
        &[],
    );
    assert_success(&run, "run");
    // aggregate of a single subject must reproduce its own values.
    let aggregate = migrid(
        &[
            "aggregate",
            "--results",
            out.join("results.csv").to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ],
        &[],
    );
    assert_success(&aggregate, "aggregate");
    let results = std::fs::read_to_string(out.join("results.csv")).unwrap();
    let agg = std::fs::read_to_string(out.join("aggregate.csv")).unwrap();
    let result_accs: Vec<&str> = results
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(5).unwrap())
        .collect();
    let agg_accs: Vec<&str> = agg
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(4).unwrap())
        .collect();
    assert_eq!(result_accs, agg_accs);
}

#[test]
fn fetch_skips_existing_valid_files() {
    let dir = tempfile::tempdir().unwrap();
    let data_s = dir.path().to_str().unwrap();
    let synth = migrid(
        &[
            "synth",
            "--data-dir",
            data_s,
            "--subjects",
            "1",
            "--runs",
            "4,8,12",
            "--channels",
            "4",
            "--trials-per-label",
            "3",
        ],
        &[],
    );
    assert_success(&synth, "synth");
    let out = migrid(
        &[
            "fetch",
            "--data-dir",
            data_s,
            "--subjects",
            "1",
            "--runs",
            "4,8,12",
            "--base-url",
            "http://127.0.0.1:1",
        ],
        &[],
    );
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("skipped 3"), "stdout: {stdout}");
}

