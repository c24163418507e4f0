//! Command-line front end.
//!
//! Every stage reads and writes plain text files so intermediate results can
//! be inspected and diffed. Commands print a short summary to the supplied
//! writer; the binary passes stdout.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::baseline::{self, BaselineMethod, StaticDual};
use crate::config::{RunConfig, TargetPolicy};
use crate::detection::{parse_detection_file, parse_ground_truth_file, DetectionSet, GroundTruthSet};
use crate::error::{Error, Result};
use crate::eval::{self, EvalReport, REPORT_CSV_HEADER};
use crate::filter::ThresholdFilter;
use crate::nn::{self, FeatureContext, NnFilter, TrainSample};
use crate::par::{self, Execution};
use crate::stats::{self, BinConfig, BinSlot};
use crate::synth::{self, WeatherPreset};
use crate::text::fmt_exact;
use crate::threshold::{self, BinTarget, CalibrationPrefilter, CurveFilter, ThresholdCurve};

#[derive(Debug, Parser)]
#[command(name = "adathresh", version, about = "Distance-adaptive confidence thresholding for LiDAR 3D detections")]
pub struct Cli {
    /// Run configuration file (TOML); absent keys take their defaults
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Directory for output files [config: output_dir]
    #[arg(long, global = true, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,

    /// Evaluate frames in parallel [config: parallel]
    #[arg(long, global = true)]
    pub parallel: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic scene: detections.txt, ground_truth.txt, scene.toml
    Synth(SynthArgs),
    /// Fit a threshold curve: curve.txt, bin_stats.csv, curve_samples.csv
    Fit(FitArgs),
    /// Filter detections with a curve or a trained model
    Apply(ApplyArgs),
    /// Train the threshold network: model.txt, loss_trace.csv, features.csv
    Train(TrainArgs),
    /// Evaluate detections against ground truth: report.csv, report.txt, pr_curve.csv
    Eval(EvalArgs),
    /// Compare every method on one dataset: comparison.csv, comparison.txt
    Bench(BenchArgs),
    /// Validate the configuration and print it with defaults filled in
    CheckConfig,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Generator seed [config: scene.seed]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of frames [config: scene.frames]
    #[arg(long)]
    pub frames: Option<usize>,
    /// Weather preset: clear, fog or rain [config: preset]
    #[arg(long, value_enum)]
    pub preset: Option<WeatherPreset>,
}

#[derive(Debug, Args)]
pub struct CalibrationArgs {
    /// Weight of the bin mean [config: calibration.beta]
    #[arg(long)]
    pub beta: Option<f64>,
    /// Weight of the bin deviation [config: calibration.alpha]
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Minimum threshold [config: calibration.floor_k]
    #[arg(long)]
    pub floor_k: Option<f64>,
    /// Detections feeding the bin statistics: none or static-dual [config: calibration.prefilter]
    #[arg(long, value_enum)]
    pub prefilter: Option<CalibrationPrefilter>,
    /// Target policy: calibrated or f1-optimal [config: target_policy]
    #[arg(long, value_enum)]
    pub target_policy: Option<TargetPolicy>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Detection file
    #[arg(long, value_name = "FILE")]
    pub detections: PathBuf,
    /// Ground-truth file, required by the f1-optimal policy
    #[arg(long, value_name = "FILE")]
    pub gt: Option<PathBuf>,
    #[command(flatten)]
    pub calibration: CalibrationArgs,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("filter").required(true).args(["curve", "model"])))]
pub struct ApplyArgs {
    /// Detection file
    #[arg(long, value_name = "FILE")]
    pub detections: PathBuf,
    /// Curve file written by `fit`
    #[arg(long, value_name = "FILE")]
    pub curve: Option<PathBuf>,
    /// Model file written by `train`; needs --features
    #[arg(long, value_name = "FILE", requires = "features")]
    pub model: Option<PathBuf>,
    /// Bin statistics the model reads its features from (features.csv from `train`)
    #[arg(long, value_name = "FILE")]
    pub features: Option<PathBuf>,
    /// Output file [default: <out_dir>/filtered.txt]
    #[arg(long, value_name = "FILE")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Detection file
    #[arg(long, value_name = "FILE")]
    pub detections: PathBuf,
    /// Ground-truth file, required by the f1-optimal policy
    #[arg(long, value_name = "FILE")]
    pub gt: Option<PathBuf>,
    #[command(flatten)]
    pub training: TrainingArgs,
    #[command(flatten)]
    pub calibration: CalibrationArgs,
}

#[derive(Debug, Args)]
pub struct TrainingArgs {
    /// Training epochs [config: train.epochs]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Initial step size [config: train.learning_rate]
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Step multiplier after an accepted step [config: train.step_growth]
    #[arg(long)]
    pub step_growth: Option<f64>,
    /// Initialization seed [config: train.seed]
    #[arg(long)]
    pub train_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Detection file, usually the output of `apply`
    #[arg(long, value_name = "FILE")]
    pub detections: PathBuf,
    /// Ground-truth file
    #[arg(long, value_name = "FILE")]
    pub gt: PathBuf,
    /// Method label written to the report
    #[arg(long, default_value = "filtered")]
    pub method: String,
    /// Parameter label written to the report
    #[arg(long, default_value = "-")]
    pub param: String,
    /// Minimum BEV IoU for a match [config: matching.iou_threshold]
    #[arg(long)]
    pub iou_threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Unfiltered detection file
    #[arg(long, value_name = "FILE")]
    pub detections: PathBuf,
    /// Ground-truth file
    #[arg(long, value_name = "FILE")]
    pub gt: PathBuf,
    #[command(flatten)]
    pub training: TrainingArgs,
    #[command(flatten)]
    pub calibration: CalibrationArgs,
}

/// Loads the config file (or defaults) and applies global flags.
fn base_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(dir) = &cli.out_dir {
        cfg.output_dir = dir.clone();
    }
    if cli.parallel {
        cfg.parallel = true;
    }
    Ok(cfg)
}

fn apply_calibration_args(cfg: &mut RunConfig, a: &CalibrationArgs) {
    if let Some(v) = a.alpha {
        cfg.calibration.alpha = v;
    }
    if let Some(v) = a.beta {
        cfg.calibration.beta = v;
    }
    if let Some(v) = a.floor_k {
        cfg.calibration.floor_k = v;
    }
    if let Some(v) = a.prefilter {
        cfg.calibration.prefilter = v;
    }
    if let Some(v) = a.target_policy {
        cfg.target_policy = v;
    }
}

fn apply_training_args(cfg: &mut RunConfig, a: &TrainingArgs) {
    if let Some(v) = a.epochs {
        cfg.train.epochs = v;
    }
    if let Some(v) = a.learning_rate {
        cfg.train.learning_rate = v;
    }
    if let Some(v) = a.step_growth {
        cfg.train.step_growth = v;
    }
    if let Some(v) = a.train_seed {
        cfg.train.seed = v;
    }
}

/// Final configuration for `cli`, validated.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = base_config(cli)?;
    match &cli.command {
        Command::Synth(a) => {
            if let Some(v) = a.seed {
                cfg.scene.seed = v;
            }
            if let Some(v) = a.frames {
                cfg.scene.frames = v;
            }
            if let Some(v) = a.preset {
                cfg.preset = Some(v);
            }
        }
        Command::Fit(a) => apply_calibration_args(&mut cfg, &a.calibration),
        Command::Bench(a) => {
            apply_calibration_args(&mut cfg, &a.calibration);
            apply_training_args(&mut cfg, &a.training);
        }
        Command::Train(a) => {
            apply_calibration_args(&mut cfg, &a.calibration);
            apply_training_args(&mut cfg, &a.training);
        }
        Command::Eval(a) => {
            if let Some(v) = a.iou_threshold {
                cfg.matching.iou_threshold = v;
            }
        }
        Command::Apply(_) | Command::CheckConfig => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Runs one parsed command line.
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    let cfg = resolve_config(cli)?;
    let report = match &cli.command {
        Command::Synth(_) => cmd_synth(&cfg)?,
        Command::Fit(a) => cmd_fit(&cfg, &a.detections, a.gt.as_deref())?,
        Command::Apply(a) => cmd_apply(&cfg, a)?,
        Command::Train(a) => cmd_train(&cfg, &a.detections, a.gt.as_deref())?,
        Command::Eval(a) => cmd_eval(&cfg, a)?,
        Command::Bench(a) => cmd_bench(&cfg, &a.detections, &a.gt)?,
        Command::CheckConfig => format!("config ok\n{}", cfg.to_toml()),
    };
    out.write_all(report.as_bytes())
        .map_err(|e| Error::io("<stdout>", e))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path.display().to_string(), e))
}

fn load_detections(path: &Path) -> Result<DetectionSet> {
    let mut set = parse_detection_file(&read_file(path)?).map_err(|e| in_file(path, e))?;
    set.source = path.display().to_string();
    Ok(set)
}

fn load_ground_truth(path: &Path) -> Result<GroundTruthSet> {
    let mut set = parse_ground_truth_file(&read_file(path)?).map_err(|e| in_file(path, e))?;
    set.source = path.display().to_string();
    Ok(set)
}

fn in_file(path: &Path, e: Error) -> Error {
    match e {
        Error::Parse { line, message } => Error::Parse {
            line,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    }
}

fn require_gt(gt: Option<&Path>) -> Result<&Path> {
    gt.ok_or_else(|| Error::InvalidArgument("the f1-optimal target policy needs --gt".into()))
}

pub fn cmd_synth(cfg: &RunConfig) -> Result<String> {
    let scene_cfg = cfg.effective_scene();
    let scene = synth::generate(&scene_cfg)?;
    let dir = &cfg.output_dir;
    write_file(&dir.join("detections.txt"), &scene.detections.to_text())?;
    write_file(&dir.join("ground_truth.txt"), &scene.ground_truth.to_text())?;
    write_file(&dir.join("scene.toml"), &scene_cfg.to_toml())?;
    let clutter = scene.is_clutter.iter().filter(|c| **c).count();
    Ok(format!(
        "frames: {}\nground truth: {}\ndetections: {} ({} clutter)\n",
        scene_cfg.frames,
        scene.ground_truth.len(),
        scene.detections.len(),
        clutter
    ))
}

/// Per-bin targets under the configured policy.
fn fit_targets(cfg: &RunConfig, dets: &DetectionSet, gt: Option<&Path>, summary: &stats::BinSummary) -> Result<Vec<BinTarget>> {
    match cfg.target_policy {
        TargetPolicy::Calibrated => Ok(threshold::bin_targets(&summary.bins, &cfg.calibration.params())),
        TargetPolicy::F1Optimal => {
            let gts = load_ground_truth(require_gt(gt)?)?;
            let counts = stats::bin_statistics(dets, &cfg.bins);
            let best = nn::f1_optimal_thresholds(dets, &gts, &cfg.bins, &cfg.matching);
            Ok(best
                .into_iter()
                .zip(&counts.bins)
                .filter_map(|(t, b)| {
                    let t = t.filter(|_| b.n > 0)?;
                    Some(BinTarget {
                        bin_index: b.bin_index,
                        center: b.center(),
                        target: t,
                        weight: b.n as f64,
                    })
                })
                .collect())
        }
    }
}

/// Distance/threshold pairs for plotting, every 0.5 m up to the distill range.
pub fn curve_samples_csv(curve: &ThresholdCurve, max_range: f64) -> String {
    let mut out = String::from("distance,threshold\n");
    let steps = (max_range / 0.5).floor() as usize;
    for i in 0..=steps {
        let d = i as f64 * 0.5;
        let _ = writeln!(out, "{d},{}", fmt_exact(threshold::eval_threshold(curve, d)));
    }
    out
}

pub fn cmd_fit(cfg: &RunConfig, detections: &Path, gt: Option<&Path>) -> Result<String> {
    let dets = load_detections(detections)?;
    let summary = threshold::calibration_summary(&dets, &cfg.bins, cfg.calibration.prefilter);
    let targets = fit_targets(cfg, &dets, gt, &summary)?;
    let curve = threshold::calibrate_from_targets(&targets, cfg.calibration.floor_k)?;

    let dir = &cfg.output_dir;
    write_file(&dir.join("curve.txt"), &curve.to_text())?;
    write_file(&dir.join("bin_stats.csv"), &stats::bin_stats_csv(&summary.bins))?;
    write_file(&dir.join("curve_samples.csv"), &curve_samples_csv(&curve, cfg.distill.max_range))?;

    let mut out = String::new();
    let _ = writeln!(
        out,
        "curve: a={:.6e} b={:.6e} c={:.6} floor_k={} d_max={}",
        curve.a, curve.b, curve.c, curve.floor_k, curve.d_max
    );
    let _ = writeln!(out, "{:>4} {:>8} {:>7} {:>8} {:>8} {:>8}", "bin", "center", "n", "mean", "std", "target");
    for t in &targets {
        let b = &summary.bins[t.bin_index];
        let show = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
        let _ = writeln!(
            out,
            "{:>4} {:>8.1} {:>7} {:>8} {:>8} {:>8.4}",
            t.bin_index,
            t.center,
            b.n,
            show(b.mean),
            show(b.std),
            t.target
        );
    }
    Ok(out)
}

fn load_nn_filter(bins: BinConfig, model: &Path, features: &Path) -> Result<NnFilter> {
    let text = |p: &Path| -> Result<String> {
        String::from_utf8(read_file(p)?).map_err(|_| Error::parse(1, format!("{}: not UTF-8", p.display())))
    };
    let model = nn::model_from_text(&text(model)?).map_err(|e| in_file(model, e))?;
    let stats = stats::parse_bin_stats_csv(&text(features)?).map_err(|e| in_file(features, e))?;
    nn::as_filter(model, FeatureContext::new(bins, stats)?)
}

/// Kept and rejected counts per distance slot.
fn kept_rejected_table(filter: &dyn ThresholdFilter, dets: &DetectionSet, bins: &BinConfig) -> String {
    let n = bins.count;
    let mut counts = vec![(0usize, 0usize); n + 2];
    for d in dets.iter() {
        let slot = match stats::slot_of(bins.range(d), bins) {
            BinSlot::Bin(i) => i,
            BinSlot::Underflow => n,
            BinSlot::Overflow => n + 1,
        };
        if filter.keeps(d) {
            counts[slot].0 += 1;
        } else {
            counts[slot].1 += 1;
        }
    }
    let mut out = format!("{:>10} {:>8} {:>8}\n", "bin", "kept", "rejected");
    for (i, (kept, rejected)) in counts.iter().enumerate() {
        let label = match i {
            i if i < n => i.to_string(),
            i if i == n => "underflow".into(),
            _ => "overflow".into(),
        };
        if i < n || kept + rejected > 0 {
            let _ = writeln!(out, "{label:>10} {kept:>8} {rejected:>8}");
        }
    }
    out
}

pub fn cmd_apply(cfg: &RunConfig, a: &ApplyArgs) -> Result<String> {
    let dets = load_detections(&a.detections)?;
    let filter: Box<dyn ThresholdFilter> = match (&a.curve, &a.model, &a.features) {
        (Some(curve), _, _) => {
            let text = String::from_utf8(read_file(curve)?)
                .map_err(|_| Error::parse(1, format!("{}: not UTF-8", curve.display())))?;
            let curve_v = ThresholdCurve::from_text(&text).map_err(|e| in_file(curve, e))?;
            Box::new(CurveFilter {
                curve: curve_v,
                metric: cfg.bins.metric,
            })
        }
        (None, Some(model), Some(features)) => Box::new(load_nn_filter(cfg.bins, model, features)?),
        _ => return Err(Error::InvalidArgument("apply needs --curve, or --model with --features".into())),
    };
    let kept = filter.apply_with(&dets, Execution::from_flag(cfg.parallel));
    let path = a.output.clone().unwrap_or_else(|| cfg.output_dir.join("filtered.txt"));
    write_file(&path, &kept.to_text())?;
    Ok(format!(
        "{}kept {} of {}\n",
        kept_rejected_table(filter.as_ref(), &dets, &cfg.bins),
        kept.len(),
        dets.len()
    ))
}

/// Training samples and feature context under the configured policy.
pub fn training_data(
    cfg: &RunConfig,
    dets: &DetectionSet,
    gts: Option<&GroundTruthSet>,
) -> Result<(Vec<TrainSample>, FeatureContext)> {
    let summary = threshold::calibration_summary(dets, &cfg.bins, cfg.calibration.prefilter);
    let ctx = FeatureContext::new(cfg.bins, summary.bins.clone())?;
    let samples = match (cfg.target_policy, gts) {
        (TargetPolicy::Calibrated, _) => {
            let targets = threshold::bin_targets(&summary.bins, &cfg.calibration.params());
            let curve = threshold::calibrate_from_targets(&targets, cfg.calibration.floor_k)?;
            nn::distill_samples(&curve, &ctx, cfg.distill.max_range, cfg.distill.step)
        }
        (TargetPolicy::F1Optimal, Some(gts)) => nn::f1_optimal_samples(dets, gts, &ctx, &cfg.matching),
        (TargetPolicy::F1Optimal, None) => return Err(Error::InvalidArgument("the f1-optimal target policy needs --gt".into())),
    };
    if samples.is_empty() {
        return Err(Error::Calibration("no training samples".into()));
    }
    Ok((samples, ctx))
}

/// Trains the network on `dets` and returns it as a filter with its loss trace.
pub fn train_filter(cfg: &RunConfig, dets: &DetectionSet, gts: Option<&GroundTruthSet>) -> Result<(NnFilter, Vec<f64>)> {
    let (samples, ctx) = training_data(cfg, dets, gts)?;
    let model = nn::init(cfg.train.seed, &cfg.train)?;
    let trained = nn::train(&model, &samples, &cfg.train)?;
    Ok((nn::as_filter(trained.model, ctx)?, trained.loss_trace))
}

pub fn cmd_train(cfg: &RunConfig, detections: &Path, gt: Option<&Path>) -> Result<String> {
    let dets = load_detections(detections)?;
    let gts = match (cfg.target_policy, gt) {
        (TargetPolicy::F1Optimal, gt) => Some(load_ground_truth(require_gt(gt)?)?),
        (TargetPolicy::Calibrated, _) => None,
    };
    let (filter, trace) = train_filter(cfg, &dets, gts.as_ref())?;

    let dir = &cfg.output_dir;
    write_file(&dir.join("model.txt"), &nn::model_to_text(&filter.model))?;
    write_file(&dir.join("loss_trace.csv"), &nn::loss_trace_csv(&trace))?;
    write_file(&dir.join("features.csv"), &stats::bin_stats_csv(&filter.ctx.stats))?;
    Ok(format!(
        "epochs: {}\ninitial loss: {:.6e}\nfinal loss: {:.6e}\n",
        trace.len() - 1,
        trace[0],
        trace[trace.len() - 1]
    ))
}

pub fn cmd_eval(cfg: &RunConfig, a: &EvalArgs) -> Result<String> {
    let dets = load_detections(&a.detections)?;
    let gts = load_ground_truth(&a.gt)?;
    let exec = Execution::from_flag(cfg.parallel);
    let report = eval::evaluate(&a.method, &a.param, &dets, &gts, &cfg.bins, &cfg.matching, exec);
    let matched = eval::match_sets_with(&dets, &gts, &cfg.matching, exec);
    let pr = eval::pr_curve(&dets, &gts, &matched);

    let dir = &cfg.output_dir;
    let text = report.to_text();
    write_file(&dir.join("report.csv"), &report.to_csv())?;
    write_file(&dir.join("report.txt"), &text)?;
    write_file(&dir.join("pr_curve.csv"), &eval::pr_curve_csv(&pr))?;
    Ok(text)
}

/// Every method of the comparison table, evaluated on one dataset.
pub fn bench_reports(cfg: &RunConfig, dets: &DetectionSet, gts: &GroundTruthSet) -> Result<Vec<EvalReport>> {
    let mut rows: Vec<(String, String, Box<dyn ThresholdFilter>)> = Vec::new();
    rows.push((
        "static_dual".into(),
        "near=0.5 far=0.3".into(),
        Box::new(StaticDual::with_metric(cfg.bins.metric)),
    ));
    for method in BaselineMethod::ALL {
        for param in cfg.baselines.sweep(method) {
            let filter = baseline::build_baseline(method, param, dets, &cfg.bins, &cfg.baselines)?;
            let label = baseline::param_label(method, param, &cfg.baselines);
            rows.push((method.name().to_string(), label, Box::new(filter)));
        }
    }
    let cal = threshold::calibrate_set(dets, &cfg.bins, &cfg.calibration)?;
    let c = &cfg.calibration;
    rows.push((
        "adaptive-curve".into(),
        format!("alpha={} beta={} k={}", c.alpha, c.beta, c.floor_k),
        Box::new(CurveFilter {
            curve: cal.curve,
            metric: cfg.bins.metric,
        }),
    ));
    let (nn_filter, _) = train_filter(cfg, dets, Some(gts))?;
    let policy = match cfg.target_policy {
        TargetPolicy::Calibrated => "distill",
        TargetPolicy::F1Optimal => "f1-optimal",
    };
    rows.push(("nn".into(), format!("{policy} epochs={}", cfg.train.epochs), Box::new(nn_filter)));

    let exec = Execution::from_flag(cfg.parallel);
    Ok(par::map(&rows, exec, |(method, param, filter)| {
        let kept = filter.apply(dets);
        eval::evaluate(method, param, &kept, gts, &cfg.bins, &cfg.matching, Execution::Sequential)
    }))
}

pub fn cmd_bench(cfg: &RunConfig, detections: &Path, gt: &Path) -> Result<String> {
    let dets = load_detections(detections)?;
    let gts = load_ground_truth(gt)?;
    let reports = bench_reports(cfg, &dets, &gts)?;

    let mut csv = format!("{REPORT_CSV_HEADER}\n");
    let mut text = String::new();
    for r in &reports {
        csv.push_str(&r.csv_rows());
        text.push_str(&r.to_text());
        text.push('\n');
    }
    let dir = &cfg.output_dir;
    write_file(&dir.join("comparison.csv"), &csv)?;
    write_file(&dir.join("comparison.txt"), &text)?;

    let show = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
    let mut out = format!(
        "{:<16} {:<28} {:>9} {:>9} {:>9} {:>7} {:>7}\n",
        "method", "param", "precision", "recall", "f1", "fp", "fn"
    );
    for r in &reports {
        let o = &r.overall;
        let _ = writeln!(
            out,
            "{:<16} {:<28} {:>9} {:>9} {:>9} {:>7} {:>7}",
            r.method,
            r.params,
            show(o.precision()),
            show(o.recall()),
            show(o.f1()),
            o.fp,
            o.fn_
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("adathresh").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn flags_override_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "preset = \"rain\"\n[scene]\nseed = 3\nframes = 10\n[calibration]\nalpha = 0.5\n").unwrap();
        let p = path.to_str().unwrap();

        let cfg = resolve_config(&parse(&["--config", p, "synth", "--seed", "9", "--preset", "fog"])).unwrap();
        assert_eq!(cfg.scene.seed, 9);
        assert_eq!(cfg.scene.frames, 10);
        assert_eq!(cfg.preset, Some(WeatherPreset::Fog));

        let cfg = resolve_config(&parse(&["--config", p, "fit", "--detections", "d.txt"])).unwrap();
        assert_eq!(cfg.calibration.alpha, 0.5);
        let cfg = resolve_config(&parse(&["--config", p, "fit", "--detections", "d.txt", "--alpha", "2"])).unwrap();
        assert_eq!(cfg.calibration.alpha, 2.0);
    }

    #[test]
    fn invalid_override_is_rejected_before_work() {
        let err = resolve_config(&parse(&["fit", "--detections", "missing.txt", "--floor-k", "3"])).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn apply_needs_a_filter() {
        let argv = ["adathresh", "apply", "--detections", "d.txt"];
        assert!(Cli::try_parse_from(argv).is_err());
        let argv = ["adathresh", "apply", "--detections", "d.txt", "--model", "m.txt"];
        assert!(Cli::try_parse_from(argv).is_err());
    }

    #[test]
    fn help_names_config_keys() {
        use clap::CommandFactory;
        let mut cmd = Cli::command();
        let help = cmd.find_subcommand_mut("train").unwrap().render_help().to_string();
        for key in ["train.epochs", "train.learning_rate", "calibration.alpha", "target_policy"] {
            assert!(help.contains(key), "missing {key}");
        }
    }

    #[test]
    fn curve_samples_cover_the_range() {
        let csv = curve_samples_csv(&ThresholdCurve::constant(0.4, 0.2, 55.0), 2.0);
        assert_eq!(csv.lines().count(), 6);
        assert!(csv.ends_with("2,4.0000000000000002e-1\n"));
    }
}
