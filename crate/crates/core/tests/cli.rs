//! End-to-end tests of the command-line binary: exit codes, output file
//! schemas, byte-level determinism across worker counts, and precedence of
//! the out-dir sources.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_mimo-altmin");
const TRIALS_HEADER: &str =
    "trial_id,snr_db,detector,iterations,bit_errors,bits,real_mults,converged";

/// Runs the binary with `--out-dir` pointed at `dir` and the ambient
/// out-dir override scrubbed, so tests cannot leak files or see each other.
fn run_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .args(["--out-dir", dir.to_str().unwrap()])
        .env_remove("MIMO_ALTMIN_OUT_DIR")
        .output()
        .expect("binary should spawn")
}

fn assert_success(out: &Output) {
    assert_eq!(
        out.status.code(),
        Some(0),
        "expected exit 0, got {:?}; stderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read_json(path: &Path) -> serde_json::Value {
    let text = fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("reading {}: {e}", path.display()));
    serde_json::from_str(&text)
        .unwrap_or_else(|e| panic!("parsing {}: {e}", path.display()))
}

const TINY_SWEEP: &[&str] = &[
    "ber-sweep",
    "--nt",
    "2",
    "--nr",
    "8",
    "--snr",
    "8",
    "--trials",
    "40",
    "--max-bits",
    "4000",
    "--seed",
    "5",
];

#[test]
fn ber_sweep_writes_the_pinned_output_files() {
    let dir = TempDir::new().unwrap();
    let out = run_in(dir.path(), TINY_SWEEP);
    assert_success(&out);

    let csv = fs::read_to_string(dir.path().join("trials.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(TRIALS_HEADER), "trials.csv header is pinned");
    let mut rows = 0;
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 8, "malformed row: {line}");
        assert!(matches!(fields[2], "altmin" | "mmse"), "unexpected detector {}", fields[2]);
        assert!(matches!(fields[7], "true" | "false"), "converged must be a bool: {line}");
        rows += 1;
    }
    assert!(rows > 0, "trials.csv has no data rows");

    let summary = read_json(&dir.path().join("summary.json"));
    assert_eq!(summary["experiment"], "ber-sweep");
    let points = summary["points"].as_array().expect("points array");
    assert_eq!(points.len(), 2, "one point per detector at the single SNR");

    let manifest = read_json(&dir.path().join("manifest.json"));
    assert_eq!(manifest["tool"], "mimo-altmin");
    assert_eq!(manifest["config"]["n_t"], 2);
    let argv: Vec<String> = manifest["argv"]
        .as_array()
        .expect("argv array")
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect();
    assert!(argv.contains(&"ber-sweep".to_string()), "argv {argv:?} lacks the subcommand");
}

#[test]
fn reruns_and_worker_counts_are_byte_identical() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let with_workers = |dir: &Path, workers: &str| {
        let mut args = TINY_SWEEP.to_vec();
        args.extend_from_slice(&["--workers", workers]);
        let out = run_in(dir, &args);
        assert_success(&out);
        fs::read(dir.join("trials.csv")).unwrap()
    };
    let serial = with_workers(a.path(), "1");
    let parallel = with_workers(b.path(), "3");
    assert_eq!(serial, parallel, "trial records must not depend on the worker count");
}

#[test]
fn missing_geometry_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let out = run_in(dir.path(), &["ber-sweep", "--nr", "8"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("nt"), "stderr should name the missing flag: {stderr}");

    let out = run_in(dir.path(), &["ber-sweep", "--nt", "2"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("nr"), "stderr should name the missing flag: {stderr}");
}

#[test]
fn unknown_detector_is_rejected_by_name() {
    let dir = TempDir::new().unwrap();
    let mut args = TINY_SWEEP.to_vec();
    args.extend_from_slice(&["--detectors", "altmin,bogus"]);
    let out = run_in(dir.path(), &args);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("bogus"), "stderr should name the bad detector: {stderr}");
}

#[test]
fn env_var_overrides_the_out_dir_flag() {
    let env_dir = TempDir::new().unwrap();
    let flag_dir = TempDir::new().unwrap();
    let out = Command::new(BIN)
        .args(TINY_SWEEP)
        .args(["--out-dir", flag_dir.path().to_str().unwrap()])
        .env("MIMO_ALTMIN_OUT_DIR", env_dir.path())
        .output()
        .expect("binary should spawn");
    assert_success(&out);
    assert!(env_dir.path().join("trials.csv").exists(), "env dir should receive the output");
    assert!(
        !flag_dir.path().join("trials.csv").exists(),
        "flag dir must be ignored when the env var is set"
    );
}

#[test]
fn snr_range_shorthand_expands() {
    let dir = TempDir::new().unwrap();
    let out = run_in(
        dir.path(),
        &[
            "ber-sweep", "--nt", "2", "--nr", "8", "--snr", "0:4:8", "--trials", "20",
            "--max-bits", "2000", "--seed", "2",
        ],
    );
    assert_success(&out);
    let summary = read_json(&dir.path().join("summary.json"));
    let mut snrs: Vec<f64> = summary["points"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["snr_db"].as_f64().unwrap())
        .collect();
    snrs.sort_by(f64::total_cmp);
    snrs.dedup();
    assert_eq!(snrs, vec![0.0, 4.0, 8.0]);
}

#[test]
fn detect_once_writes_a_full_trace() {
    let dir = TempDir::new().unwrap();
    let out = run_in(
        dir.path(),
        &["detect-once", "--nt", "2", "--nr", "4", "--snr", "10", "--seed", "8", "--t", "6",
          "--trace"],
    );
    assert_success(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("x_true"), "stdout should tabulate the symbols: {stdout}");

    let summary = read_json(&dir.path().join("summary.json"));
    assert_eq!(summary["experiment"], "detect-once");
    let iterations = summary["iterations"].as_u64().unwrap() as usize;

    let trace = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    let mut lines = trace.lines();
    let header = lines.next().unwrap();
    assert!(
        header.starts_with("iter,v_obj,lambda_norm,x_0"),
        "unexpected trace header: {header}"
    );
    // One row after init plus one per completed iteration.
    assert_eq!(lines.count(), iterations + 1);
}

#[test]
fn oracle_check_reports_a_clean_pass() {
    let dir = TempDir::new().unwrap();
    let out = run_in(
        dir.path(),
        &["oracle-check", "--nt", "2", "--nr", "8", "--trials", "10", "--seed", "3"],
    );
    assert_success(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("10/10"), "expected a 10/10 pass line: {stdout}");
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = TempDir::new().unwrap();
    let cfg_path = dir.path().join("run.toml");
    fs::write(
        &cfg_path,
        "[experiment]\nn_t = 2\nn_r = 8\nseed = 9\nsnr_db_list = [8.0]\ntrials = 30\nmax_bits = 3000\n",
    )
    .unwrap();
    let out = run_in(
        dir.path(),
        &["ber-sweep", "--config", cfg_path.to_str().unwrap(), "--seed", "11"],
    );
    assert_success(&out);
    let manifest = read_json(&dir.path().join("manifest.json"));
    assert_eq!(manifest["config"]["n_t"], 2, "geometry should come from the file");
    assert_eq!(manifest["config"]["seed"], 11, "the flag should override the file seed");
}

#[test]
fn unknown_config_keys_are_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let cfg_path = dir.path().join("bad.toml");
    fs::write(&cfg_path, "[experiment]\nn_t = 2\nn_r = 8\nbogus_knob = 1\n").unwrap();
    let out = run_in(dir.path(), &["ber-sweep", "--config", cfg_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("bogus_knob"), "stderr should name the unknown key: {stderr}");
}
