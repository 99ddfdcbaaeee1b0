//! End-to-end runs of the compiled binary: the surrogate-network pipeline
//! (generate → train → eval → sweep → fuse), task training and evaluation on
//! an MNIST subset, the latency benchmark, the energy report, and the exit
//! codes for bad invocations.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_spiking-ssm"));
    let mnist = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist");
    c.env("SPIKING_SSM_DATA", mnist);
    c
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("binary runs");
    assert!(
        out.status.success(),
        "command {:?} failed\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn summary_line(out: &Output) -> String {
    let text = stdout_of(out);
    let line = text
        .lines()
        .rev()
        .find(|l| l.starts_with("summary cmd="))
        .unwrap_or_else(|| panic!("no summary line in output: {text}"))
        .to_string();
    line
}

fn field<'a>(line: &'a str, key: &str) -> &'a str {
    let pat = format!("{key}=");
    line.split_whitespace()
        .find_map(|tok| tok.strip_prefix(&pat))
        .unwrap_or_else(|| panic!("field {key} missing from: {line}"))
}

#[test]
fn surrogate_pipeline_generates_trains_evaluates_sweeps_and_fuses() {
    let dir = tempfile::tempdir().unwrap();
    let data: PathBuf = dir.path().join("data.bin");
    let model: PathBuf = dir.path().join("model.bin");
    let fused: PathBuf = dir.path().join("fused.bin");
    let sweep: PathBuf = dir.path().join("sweep.csv");

    let out = run_ok(&[
        "gen-sdn-data",
        "--count",
        "300",
        "--length",
        "96",
        "--seed",
        "11",
        "--out",
        data.to_str().unwrap(),
    ]);
    let line = summary_line(&out);
    assert_eq!(field(&line, "cmd"), "gen-sdn-data");
    assert_eq!(field(&line, "seed"), "11");
    assert!(data.is_file());

    let out = run_ok(&[
        "train-sdn",
        "--data",
        data.to_str().unwrap(),
        "--epochs",
        "3",
        "--batch",
        "64",
        "--out",
        model.to_str().unwrap(),
    ]);
    let text = stdout_of(&out);
    assert_eq!(text.matches("epoch=").count(), 3, "one line per epoch");
    let line = summary_line(&out);
    let acc: f64 = field(&line, "final_spike_accuracy").parse().unwrap();
    assert!(acc > 0.9, "even a short run should track most spikes, got {acc}");

    let out = run_ok(&["eval-sdn", "--model", model.to_str().unwrap(), "--data", data.to_str().unwrap()]);
    let line = summary_line(&out);
    let eval_acc: f64 = field(&line, "spike_accuracy").parse().unwrap();
    assert!((eval_acc - acc).abs() < 5e-3, "eval should reproduce the training-time metric");

    let out = run_ok(&[
        "sweep-sdn",
        "--model",
        model.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--axis",
        "length",
        "--values",
        "64,96",
        "--out",
        sweep.to_str().unwrap(),
    ]);
    assert_eq!(field(&summary_line(&out), "points"), "2");
    let csv = std::fs::read_to_string(&sweep).unwrap();
    assert!(csv.starts_with("value,accuracy,mse\n"));
    assert_eq!(csv.lines().count(), 3);

    let out = run_ok(&["fuse-sdn", "--model", model.to_str().unwrap(), "--out", fused.to_str().unwrap()]);
    let line = summary_line(&out);
    assert_eq!(field(&line, "train_params"), "185");
    assert_eq!(field(&line, "fused_params"), "153");
    assert!(fused.is_file());
}

#[test]
fn task_training_then_evaluation_round_trips_through_a_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let net: PathBuf = dir.path().join("net.bin");
    let out = run_ok(&[
        "train",
        "--set",
        "depth=1",
        "--set",
        "h=8",
        "--set",
        "n=8",
        "--set",
        "epochs=1",
        "--set",
        "batch=32",
        "--set",
        "mode=sltt",
        "--subset",
        "64",
        "--test-subset",
        "64",
        "--out",
        net.to_str().unwrap(),
    ]);
    let line = summary_line(&out);
    let trained_acc: f64 = field(&line, "test_accuracy").parse().unwrap();
    assert_eq!(field(&line, "mode"), "sltt");

    let out = run_ok(&["eval", "--model", net.to_str().unwrap(), "--subset", "64"]);
    let line = summary_line(&out);
    assert_eq!(field(&line, "spike_mode"), "iterative");
    let eval_acc: f64 = field(&line, "test_accuracy").parse().unwrap();
    assert!(
        (eval_acc - trained_acc).abs() < 1e-9,
        "reloaded network must score identically: {trained_acc} vs {eval_acc}"
    );

    let out = run_ok(&[
        "hist",
        "--model",
        net.to_str().unwrap(),
        "--subset",
        "16",
        "--bins",
        "7",
    ]);
    let text = stdout_of(&out);
    assert!(text.starts_with("layer,bin_left,bin_right,count\n"));
    let occ: f64 = summary_line(&out)
        .split("band_occupancy=block0:")
        .nth(1)
        .unwrap()
        .split(|c: char| c.is_whitespace() || c == ',')
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert!((0.0..=1.0).contains(&occ));
}

#[test]
fn benchmark_emits_latency_and_breakdown_tables() {
    let dir = tempfile::tempdir().unwrap();
    let latency: PathBuf = dir.path().join("latency.csv");
    let breakdown: PathBuf = dir.path().join("breakdown.csv");
    let out = run_ok(&[
        "bench",
        "--lengths",
        "64,128",
        "--batch",
        "2",
        "--repetitions",
        "3",
        "--warmup",
        "1",
        "--set",
        "depth=1",
        "--set",
        "h=8",
        "--set",
        "n=8",
        "--out-latency",
        latency.to_str().unwrap(),
        "--out-breakdown",
        breakdown.to_str().unwrap(),
    ]);
    let line = summary_line(&out);
    assert_eq!(field(&line, "lengths"), "64,128");
    assert!(field(&line, "monotone") == "true" || field(&line, "monotone") == "false");

    let lat = std::fs::read_to_string(&latency).unwrap();
    assert!(lat.starts_with("mode,length,batch,median_ms,p10_ms,p90_ms\n"));
    // Three modes by default, two lengths each.
    assert_eq!(lat.lines().count(), 1 + 3 * 2);
    let brk = std::fs::read_to_string(&breakdown).unwrap();
    assert!(brk.starts_with("mode,module,cpu_ms\n"));
    assert!(brk.contains("leak-integrate"));
    assert!(brk.contains("fire"));
}

#[test]
fn energy_report_matches_the_reference_example() {
    let out = run_ok(&["energy-report", "--mac", "275.2e9", "--ac", "0"]);
    let text = stdout_of(&out);
    assert!(text.contains("(1.266 J)"), "got: {text}");
    assert!(text.starts_with("mac,ac,e_mac_pj,e_ac_pj,joules\n"));
    let line = summary_line(&out);
    assert_eq!(field(&line, "mac"), "275200000000");
}

#[test]
fn exit_codes_distinguish_usage_data_and_success() {
    let out = bin().args(["--definitely-not-a-flag"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1), "unknown flag is a usage error");

    let out = bin().args(["train-sdn", "--data", "/nonexistent.bin", "--out", "/tmp/x.bin"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2), "missing file is a data error");

    let dir = tempfile::tempdir().unwrap();
    let junk = dir.path().join("junk.bin");
    std::fs::write(&junk, b"not a checkpoint at all").unwrap();
    let out = bin().args(["eval-sdn", "--model", junk.to_str().unwrap(), "--data", junk.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2), "corrupt file is a data error");

    let out = bin().args(["--help"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "help is not an error");
    assert!(String::from_utf8_lossy(&out.stdout).contains("spiking-ssm"));

    let out = bin()
        .args(["energy-report", "--mac", "nan", "--ac", "0"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1), "non-finite counts are an argument error");
}

#[test]
fn parallel_evaluation_requires_a_surrogate_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let net: PathBuf = dir.path().join("net.bin");
    run_ok(&[
        "train",
        "--set",
        "depth=1",
        "--set",
        "h=8",
        "--set",
        "n=8",
        "--set",
        "epochs=1",
        "--set",
        "batch=32",
        "--set",
        "mode=bptt",
        "--subset",
        "32",
        "--test-subset",
        "32",
        "--out",
        net.to_str().unwrap(),
    ]);
    let out = bin()
        .args(["eval", "--model", net.to_str().unwrap(), "--subset", "32", "--spike-mode", "parallel"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--sdn"));
}
