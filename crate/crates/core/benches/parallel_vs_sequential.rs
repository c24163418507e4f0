//! Sequential against rayon-parallel execution for the batch-heavy stages.
//!
//! Build with `--no-default-features` to confirm the sequential fallback: the
//! "parallel" cases then run sequentially and should time the same.

use std::hint::black_box;

use adathresh::cli::bench_reports;
use adathresh::config::RunConfig;
use adathresh::eval::{evaluate, match_sets_with, MatchConfig};
use adathresh::stats::BinConfig;
use adathresh::synth::{generate, preset_overrides, Scene, SceneConfig, WeatherPreset};
use adathresh::threshold::{calibrate_set, CalibrationConfig, CurveFilter};
use adathresh::{Execution, ThresholdFilter};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn fog(frames: usize) -> Scene {
    let mut cfg = SceneConfig {
        seed: 1,
        frames,
        ..Default::default()
    };
    preset_overrides(WeatherPreset::Fog).apply(&mut cfg);
    generate(&cfg).unwrap()
}

fn matching(c: &mut Criterion) {
    let scene = fog(10_000);
    let cfg = MatchConfig::default();
    let mut group = c.benchmark_group("match_100k");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| match_sets_with(black_box(&scene.detections), &scene.ground_truth, &cfg, exec))
        });
    }
    group.finish();
}

fn apply_and_eval(c: &mut Criterion) {
    let scene = fog(10_000);
    let bins = BinConfig::default();
    let curve = calibrate_set(&scene.detections, &bins, &CalibrationConfig::default()).unwrap().curve;
    let filter = CurveFilter::new(curve);
    let cfg = MatchConfig::default();
    let mut group = c.benchmark_group("apply_eval_100k");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                let kept = filter.apply_with(black_box(&scene.detections), exec);
                evaluate("curve", "-", &kept, &scene.ground_truth, &bins, &cfg, exec)
            })
        });
    }
    group.finish();
}

fn method_sweep(c: &mut Criterion) {
    let scene = fog(2_000);
    let mut group = c.benchmark_group("bench_sweep_20k");
    group.sample_size(10);
    for (name, exec) in MODES {
        let mut cfg = RunConfig {
            parallel: exec == Execution::Parallel,
            ..Default::default()
        };
        cfg.train.epochs = 200;
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| bench_reports(&cfg, black_box(&scene.detections), &scene.ground_truth).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, matching, apply_and_eval, method_sweep);
criterion_main!(benches);
