//! End-to-end tests for the `brwgibbs` binary: schemas, exit codes,
//! determinism, and the frozen kl-scan fixture.

use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_brwgibbs"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 stdout")
}

/// Minimal consumer of the versioned CSV layout: first line must carry a
/// known schema tag, then comments, one header, and data rows.
fn parse_versioned_csv(text: &str, expected_schema: &str) -> Result<Vec<Vec<String>>, String> {
    let mut lines = text.lines();
    let first = lines.next().ok_or("empty file")?;
    let schema = first.strip_prefix("# schema: ").ok_or("missing schema line")?;
    if schema != expected_schema {
        return Err(format!("unknown schema {schema:?}"));
    }
    let mut header: Option<Vec<String>> = None;
    let mut rows = Vec::new();
    for line in lines {
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        let cells: Vec<String> = line.split(',').map(str::to_string).collect();
        match &header {
            None => header = Some(cells),
            Some(h) => {
                if cells.len() != h.len() {
                    return Err(format!("row width {} != header width {}", cells.len(), h.len()));
                }
                rows.push(cells);
            }
        }
    }
    header.ok_or_else(|| "missing header row".to_string())?;
    Ok(rows)
}

// ---------------------------------------------------------------------------
// critical
// ---------------------------------------------------------------------------

#[test]
fn critical_gaussian_d2_prints_known_beta_c() {
    let out = run(&["critical", "gaussian:d=2"]);
    assert!(out.status.success());
    let text = stdout_of(&out);
    let beta_line = text.lines().find(|l| l.starts_with("beta_c=")).expect("beta_c line");
    assert!(beta_line.contains("1.177410"), "got {beta_line}");
}

#[test]
fn critical_gaussian_d3_matches_closed_form() {
    let out = run(&["critical", "gaussian:d=3"]);
    assert!(out.status.success());
    let text = stdout_of(&out);
    let beta_line = text.lines().find(|l| l.starts_with("beta_c=")).expect("beta_c line");
    let value: f64 = beta_line.trim_start_matches("beta_c=").parse().unwrap();
    let expected = (2.0 * 3f64.ln()).sqrt();
    assert!((value - expected).abs() < 5e-7, "printed {value}, closed form {expected}");
}

#[test]
fn critical_single_atom_is_infinite() {
    let out = run(&["critical", "finite:d=2,support=[(0,1.0)]"]);
    assert!(out.status.success());
    assert!(stdout_of(&out).lines().any(|l| l == "beta_c=inf"));
}

// ---------------------------------------------------------------------------
// exit codes
// ---------------------------------------------------------------------------

#[test]
fn usage_errors_exit_1() {
    assert_eq!(run(&["kl-scan", "--bogus"]).status.code(), Some(1));
    assert_eq!(run(&["no-such-command"]).status.code(), Some(1));
    // Malformed list values are usage errors too.
    assert_eq!(
        run(&["kl-scan", "--beta", "abc", "--N", "6"]).status.code(),
        Some(1)
    );
    // Caps above the global hard cap are rejected at parse time.
    assert_eq!(
        run(&["kl-scan", "--beta", "0.5", "--N", "6", "--cap", "134217729"]).status.code(),
        Some(1)
    );
}

#[test]
fn numerical_errors_exit_2() {
    assert_eq!(run(&["critical", "nonsense:d=2"]).status.code(), Some(2));
    assert_eq!(run(&["critical", "bernoulli:d=2,p=1.5"]).status.code(), Some(2));
}

#[test]
fn help_and_version_exit_0() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
    assert_eq!(run(&["kl-scan", "--help"]).status.code(), Some(0));
}

// ---------------------------------------------------------------------------
// sample
// ---------------------------------------------------------------------------

#[test]
fn sample_reports_block_work_count() {
    let out = run(&[
        "sample", "--model", "gaussian:d=2", "--N", "5", "--M", "2", "--beta", "1.0",
        "--seeds", "0..1",
    ]);
    assert!(out.status.success());
    let text = stdout_of(&out);
    assert!(text.contains("tau=14"), "d=2, N=5, M=2 probes (2+4)+(2+4)+2 vertices: {text}");
}

#[test]
fn sample_is_deterministic() {
    let args = [
        "sample", "--model", "bernoulli:d=3,p=0.4", "--N", "7", "--beta", "0.9",
        "--seeds", "3..5", "--algo-seeds", "1..3",
    ];
    let a = run(&args);
    let b = run(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    // Four lines of data: 2 seeds x 2 algo seeds.
    assert_eq!(stdout_of(&a).lines().filter(|l| l.starts_with("seed=")).count(), 4);
}

// ---------------------------------------------------------------------------
// kl-scan
// ---------------------------------------------------------------------------

#[test]
fn kl_scan_beta_zero_rows_are_exactly_zero() {
    let out = run(&[
        "kl-scan", "--beta", "0.0", "--N", "6,9", "--M", "2,3", "--seeds", "0..4",
        "--deterministic",
    ]);
    assert!(out.status.success());
    let rows = parse_versioned_csv(&stdout_of(&out), "brwgibbs.kl-scan.v1").unwrap();
    assert_eq!(rows.len(), 4);
    for row in rows {
        for cell in &row[4..] {
            assert_eq!(cell.parse::<f64>().unwrap(), 0.0, "beta=0 row {row:?}");
        }
    }
}

#[test]
fn kl_scan_full_depth_blocks_are_exact() {
    let out = run(&[
        "kl-scan", "--beta", "0.7,1.3", "--N", "8", "--M", "8", "--seeds", "0..4",
        "--deterministic",
    ]);
    assert!(out.status.success());
    let rows = parse_versioned_csv(&stdout_of(&out), "brwgibbs.kl-scan.v1").unwrap();
    assert_eq!(rows.len(), 2);
    for row in rows {
        let mean: f64 = row[4].parse().unwrap();
        assert!(mean.abs() < 1e-8, "M=N row should vanish: {row:?}");
    }
}

#[test]
fn kl_scan_records_infeasible_points_and_continues() {
    let out = run(&[
        "kl-scan", "--beta", "0.5", "--N", "30,6", "--M", "2", "--seeds", "0..2",
        "--deterministic",
    ]);
    assert_eq!(out.status.code(), Some(0), "scan continues past cap errors");
    let text = stdout_of(&out);
    assert!(text.contains("# error: beta=") && text.contains("cap"), "{text}");
    let rows = parse_versioned_csv(&text, "brwgibbs.kl-scan.v1").unwrap();
    assert_eq!(rows.len(), 1, "the feasible N=6 point still produced a row");
    assert_eq!(rows[0][1], "6");
}

#[test]
fn kl_scan_json_round_trips() {
    let out = run(&[
        "kl-scan", "--beta", "0.8", "--N", "6", "--M", "2,9", "--seeds", "0..3",
        "--format", "json", "--deterministic",
    ]);
    assert!(out.status.success());
    let doc: serde_json::Value = serde_json::from_str(&stdout_of(&out)).unwrap();
    assert_eq!(doc["schema"], "brwgibbs.kl-scan.v1");
    let rows = doc["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows[0]["mean"].as_f64().unwrap() > 0.0);
    assert!(rows[1]["error"].as_str().unwrap().contains("block size"));
}

#[test]
fn unknown_schema_versions_are_rejected() {
    let out = run(&[
        "kl-scan", "--beta", "0.5", "--N", "5", "--seeds", "0..2", "--deterministic",
    ]);
    let text = stdout_of(&out);
    assert!(parse_versioned_csv(&text, "brwgibbs.kl-scan.v1").is_ok());
    let doctored = text.replace("kl-scan.v1", "kl-scan.v9");
    assert!(parse_versioned_csv(&doctored, "brwgibbs.kl-scan.v1").is_err());
}

// ---------------------------------------------------------------------------
// golden fixture
// ---------------------------------------------------------------------------

const GOLDEN_ARGS: [&str; 12] = [
    "kl-scan", "--model", "gaussian:d=2", "--beta", "0.8", "--N", "12", "--M", "1,2,3,4,6,12",
    "--seeds", "0..100", "--deterministic",
];

#[test]
fn kl_scan_fixture_is_reproduced_bit_for_bit() {
    let golden = include_str!("fixtures/kl_scan_golden.csv");
    let out = run(&GOLDEN_ARGS);
    assert!(out.status.success());
    assert_eq!(stdout_of(&out), golden, "regenerated scan deviates from the frozen fixture");
}

#[test]
fn kl_scan_fixture_is_thread_count_invariant() {
    let golden = include_str!("fixtures/kl_scan_golden.csv");
    for threads in ["1", "8"] {
        let out = bin()
            .args(GOLDEN_ARGS)
            .env("BRWGIBBS_THREADS", threads)
            .output()
            .expect("binary runs");
        assert!(out.status.success());
        assert_eq!(
            stdout_of(&out),
            golden,
            "output depends on worker count {threads}"
        );
    }
}

// ---------------------------------------------------------------------------
// hardness
// ---------------------------------------------------------------------------

#[test]
fn hardness_zero_trials_emits_valid_empty_tables() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("h");
    let prefix = prefix.to_str().unwrap();
    let out = run(&[
        "hardness", "--N", "8", "--z", "0.2,0.5", "--trials", "0", "--out", prefix,
        "--deterministic",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let est = std::fs::read_to_string(format!("{prefix}.estimates.csv")).unwrap();
    let rows = parse_versioned_csv(&est, "brwgibbs.hardness-estimates.v1").unwrap();
    assert!(rows.is_empty(), "no data rows expected: {rows:?}");
    let epilogue: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(format!("{prefix}.epilogue.json")).unwrap())
            .unwrap();
    assert_eq!(epilogue["z_monotonicity_ok"], true);
    assert!(epilogue["slope"].is_null());
}

#[test]
fn hardness_tables_and_epilogue_are_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("h");
    let prefix = prefix.to_str().unwrap();
    let out = run(&[
        "hardness", "--N", "8,12", "--z", "0.2,0.6", "--trials", "300", "--searches", "2",
        "--xs", "0.0,1.0", "--out", prefix, "--deterministic",
    ]);
    assert_eq!(out.status.code(), Some(0));

    let est = std::fs::read_to_string(format!("{prefix}.estimates.csv")).unwrap();
    let est_rows = parse_versioned_csv(&est, "brwgibbs.hardness-estimates.v1").unwrap();
    assert_eq!(est_rows.len(), 4, "one row per (N, z)");
    for row in &est_rows {
        let trials: u64 = row[2].parse().unwrap();
        let successes: u64 = row[3].parse().unwrap();
        let phat: f64 = row[4].parse().unwrap();
        assert_eq!(trials, 300);
        assert!((phat - successes as f64 / 300.0).abs() < 1e-15);
    }
    // Same environments across z, so monotonicity in z is exact per N.
    for n in ["8", "12"] {
        let group: Vec<f64> = est_rows
            .iter()
            .filter(|r| r[0] == n)
            .map(|r| r[4].parse().unwrap())
            .collect();
        assert_eq!(group.len(), 2);
        assert!(group[0] >= group[1], "phat must not increase with z: {group:?}");
    }

    let searches = std::fs::read_to_string(format!("{prefix}.searches.csv")).unwrap();
    let search_rows = parse_versioned_csv(&searches, "brwgibbs.hardness-searches.v1").unwrap();
    assert_eq!(search_rows.len(), 8, "2 searches per (N, z)");
    for row in &search_rows {
        let probes: u64 = row[3].parse().unwrap();
        let tau: u64 = row[4].parse().unwrap();
        assert!(probes >= 1);
        assert!(tau >= probes, "each probe reveals at least one vertex");
    }

    let tail = std::fs::read_to_string(format!("{prefix}.tail.csv")).unwrap();
    let tail_rows = parse_versioned_csv(&tail, "brwgibbs.hardness-tail.v1").unwrap();
    assert_eq!(tail_rows.len(), 4, "two thresholds per N");
    for pair in tail_rows.chunks(2) {
        let p0: f64 = pair[0][4].parse().unwrap();
        let p1: f64 = pair[1][4].parse().unwrap();
        assert!(p0 >= p1, "tail must not increase with the threshold");
    }

    let epilogue: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(format!("{prefix}.epilogue.json")).unwrap())
            .unwrap();
    assert_eq!(epilogue["schema"], "brwgibbs.hardness-epilogue.v1");
    assert_eq!(epilogue["z_monotonicity_ok"], true);
    assert_eq!(epilogue["fits"].as_array().unwrap().len(), 2);
}

// ---------------------------------------------------------------------------
// entropy-scan
// ---------------------------------------------------------------------------

#[test]
fn entropy_scan_emits_full_grid() {
    let out = run(&[
        "entropy-scan", "--beta", "0.6,1.8", "--N", "4,8", "--seeds", "0..3",
        "--deterministic",
    ]);
    assert!(out.status.success());
    let rows = parse_versioned_csv(&stdout_of(&out), "brwgibbs.entropy-scan.v1").unwrap();
    assert_eq!(rows.len(), 2 * 2 * 3);
    for row in &rows {
        let entropy: f64 = row[5].parse().unwrap();
        assert!(entropy >= 0.0, "entropy is nonnegative: {row:?}");
        let n: f64 = row[1].parse().unwrap();
        assert!(entropy <= n * 2f64.ln() + 1e-12, "entropy is at most log of the leaf count");
    }
}

#[test]
fn entropy_scan_environments_are_shared_across_beta() {
    // The logW columns differ, but the underlying environments coincide:
    // at fixed (N, seed) the beta=0 partition log-mean is forced, and the
    // identity logW(0) = -n log d + log d^n = 0 pins the shared seeding.
    let out = run(&[
        "entropy-scan", "--beta", "0.0,0.0", "--N", "6", "--seeds", "0..2",
        "--deterministic",
    ]);
    assert!(out.status.success());
    let rows = parse_versioned_csv(&stdout_of(&out), "brwgibbs.entropy-scan.v1").unwrap();
    assert_eq!(rows.len(), 4);
    // Identical beta values give identical rows apart from the beta column.
    assert_eq!(rows[0][1..], rows[2][1..]);
    assert_eq!(rows[1][1..], rows[3][1..]);
}
