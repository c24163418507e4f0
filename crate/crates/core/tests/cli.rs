//! The binary's exit codes and file outputs.

use std::path::Path;
use std::process::{Command, Output};

fn adathresh(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adathresh"))
        .args(args)
        .arg("--out-dir")
        .arg(dir)
        .output()
        .unwrap()
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).display().to_string()
}

#[test]
fn zero_frames_gives_empty_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = adathresh(dir.path(), &["synth", "--seed", "7", "--frames", "0"]);
    assert_eq!(out.status.code(), Some(0));
    for name in ["detections.txt", "ground_truth.txt"] {
        assert_eq!(std::fs::read(dir.path().join(name)).unwrap(), b"");
    }
    let echo = std::fs::read_to_string(dir.path().join("scene.toml")).unwrap();
    assert!(echo.contains("seed = 7") && echo.contains("frames = 0"), "{echo}");
}

#[test]
fn fit_with_too_few_bins_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let dets = dir.path().join("d.txt");
    std::fs::write(&dets, "0,car,5,0,0,4,2,1.5,0,0.9\n0,car,15,0,0,4,2,1.5,0,0.8\n").unwrap();
    let out = adathresh(dir.path(), &["fit", "--detections", dets.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("calibration error"));
}

#[test]
fn io_and_parse_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = adathresh(dir.path(), &["fit", "--detections", &path(dir.path(), "missing.txt")]);
    assert_eq!(out.status.code(), Some(1));

    let bad = dir.path().join("bad.txt");
    std::fs::write(&bad, "0,car,5,0,0,4,2,1.5,0,0.9\n0,car,5,0,0,4,2,1.5,0,1.7\n").unwrap();
    let out = adathresh(dir.path(), &["fit", "--detections", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2"), "{err}");
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[calibration]\nflor_k = 0.1\n").unwrap();
    let out = adathresh(dir.path(), &["check-config", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("flor_k"));

    std::fs::write(&cfg, "[calibration]\nfloor_k = 0.1\n").unwrap();
    let out = adathresh(dir.path(), &["check-config", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("floor_k = 0.1"));

    let out = adathresh(dir.path(), &["fit", "--detections", "x.txt", "--alpha", "-1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn full_pipeline_writes_every_output() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let run = |args: &[&str]| {
        let out = adathresh(d, args);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        String::from_utf8(out.stdout).unwrap()
    };
    run(&["synth", "--seed", "3", "--frames", "150", "--preset", "rain"]);
    let fit = run(&["fit", "--detections", &path(d, "detections.txt")]);
    assert!(fit.starts_with("curve: a="), "{fit}");
    run(&["fit", "--detections", &path(d, "detections.txt"), "--gt", &path(d, "ground_truth.txt"), "--target-policy", "f1-optimal"]);
    run(&["train", "--detections", &path(d, "detections.txt"), "--epochs", "50"]);
    let applied = run(&["apply", "--detections", &path(d, "detections.txt"), "--curve", &path(d, "curve.txt")]);
    assert!(applied.contains("rejected"));
    run(&[
        "apply", "--detections", &path(d, "detections.txt"), "--model", &path(d, "model.txt"), "--features",
        &path(d, "features.csv"), "--output", &path(d, "nn.txt"),
    ]);
    run(&["eval", "--detections", &path(d, "filtered.txt"), "--gt", &path(d, "ground_truth.txt")]);
    let bench = run(&["bench", "--detections", &path(d, "detections.txt"), "--gt", &path(d, "ground_truth.txt"), "--epochs", "50"]);
    for method in ["static_dual", "otsu", "niblack", "nick", "bernsen", "phansalkar", "bradley", "adaptive-curve", "nn"] {
        assert!(bench.contains(method), "{method} missing");
    }
    for name in [
        "curve.txt", "bin_stats.csv", "curve_samples.csv", "model.txt", "loss_trace.csv", "features.csv",
        "filtered.txt", "nn.txt", "report.csv", "report.txt", "pr_curve.csv", "comparison.csv",
    ] {
        assert!(d.join(name).is_file(), "{name} missing");
    }
    let csv = std::fs::read_to_string(d.join("comparison.csv")).unwrap();
    assert!(csv.starts_with("method,param,bin,precision,recall,fp,fn\n"));
    assert_eq!(csv.lines().filter(|l| l.starts_with("bradley,")).map(|l| l.split(',').nth(1).unwrap()).collect::<std::collections::BTreeSet<_>>().len(), 3);
}

#[test]
fn f1_policy_without_ground_truth_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    adathresh(dir.path(), &["synth", "--frames", "50"]);
    let out = adathresh(dir.path(), &["train", "--detections", &path(dir.path(), "detections.txt"), "--target-policy", "f1-optimal"]);
    assert_eq!(out.status.code(), Some(2));
}
