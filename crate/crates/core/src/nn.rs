//! Small feed-forward threshold predictor.
//!
//! Maps (range / d_max, bin mean score, bin score deviation) to a score
//! threshold in (0, 1) through tanh hidden layers and a sigmoid output.
//! Trained by full-batch gradient descent on mean squared error with a step
//! that is halved whenever a step would increase the loss.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::detection::{Detection, DetectionSet, GroundTruthSet};
use crate::error::{Error, Result};
use crate::eval::{self, MatchConfig};
use crate::filter::ThresholdFilter;
use crate::rng::Rng;
use crate::stats::{self, BinConfig, BinSlot, BinStats};
use crate::text::fmt_exact;
use crate::threshold::{eval_threshold, ThresholdCurve};

pub const FEATURES: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs × inputs`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub layers: Vec<Layer>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub layer_sizes: Vec<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Step multiplier after an accepted step; 1.0 keeps the step fixed
    /// until a rejection halves it.
    pub step_growth: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            layer_sizes: vec![FEATURES, 16, 16, 1],
            learning_rate: 0.01,
            epochs: 2000,
            seed: 0,
            step_growth: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 || self.layer_sizes.contains(&0) {
            return Err(Error::Config("train.layer_sizes needs >= 2 positive entries".into()));
        }
        if *self.layer_sizes.last().unwrap() != 1 {
            return Err(Error::Config("train.layer_sizes must end in 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("train.learning_rate must be > 0".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("train.epochs must be >= 1".into()));
        }
        if !(self.step_growth >= 1.0 && self.step_growth.is_finite()) {
            return Err(Error::Config("train.step_growth must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainSample {
    pub features: [f64; FEATURES],
    pub target: f64,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl MlpModel {
    /// Uniform initialization in ±1/sqrt(fan_in) for weights and biases.
    pub fn init(seed: u64, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = Rng::new(seed);
        let layers = cfg
            .layer_sizes
            .windows(2)
            .map(|w| {
                let (inputs, outputs) = (w[0], w[1]);
                let bound = 1.0 / (inputs as f64).sqrt();
                let mut draw = || rng.uniform_in(-bound, bound);
                let weights = (0..inputs * outputs).map(|_| draw()).collect();
                let biases = (0..outputs).map(|_| draw()).collect();
                Layer {
                    inputs,
                    outputs,
                    weights,
                    biases,
                }
            })
            .collect();
        Ok(MlpModel { layers })
    }

    /// Same shape as `self`, every parameter zero.
    pub fn zeroed(&self) -> Self {
        let mut m = self.clone();
        m.map_params(|_| 0.0);
        m
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.layers[0].inputs];
        sizes.extend(self.layers.iter().map(|l| l.outputs));
        sizes
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// Parameters flattened layer by layer, weights before biases.
    pub fn params(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            v.extend_from_slice(&l.weights);
            v.extend_from_slice(&l.biases);
        }
        v
    }

    pub fn set_params(&mut self, flat: &[f64]) {
        let mut it = flat.iter();
        for l in &mut self.layers {
            for w in l.weights.iter_mut().chain(l.biases.iter_mut()) {
                *w = *it.next().expect("parameter vector length");
            }
        }
    }

    fn map_params(&mut self, f: impl Fn(f64) -> f64) {
        for l in &mut self.layers {
            for w in l.weights.iter_mut().chain(l.biases.iter_mut()) {
                *w = f(*w);
            }
        }
    }

    pub fn forward(&self, features: &[f64]) -> Result<f64> {
        let expected = self.layers[0].inputs;
        if features.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: features.len(),
            });
        }
        Ok(self.forward_unchecked(features))
    }

    fn forward_unchecked(&self, features: &[f64]) -> f64 {
        let mut act = features.to_vec();
        let last = self.layers.len() - 1;
        for (li, l) in self.layers.iter().enumerate() {
            act = (0..l.outputs)
                .map(|o| {
                    let row = &l.weights[o * l.inputs..(o + 1) * l.inputs];
                    let z = l.biases[o] + row.iter().zip(&act).map(|(w, a)| w * a).sum::<f64>();
                    if li == last {
                        sigmoid(z)
                    } else {
                        z.tanh()
                    }
                })
                .collect();
        }
        act[0]
    }

    fn check_samples(&self, samples: &[TrainSample]) -> Result<()> {
        if samples.is_empty() {
            return Err(Error::InvalidArgument("training needs at least one sample".into()));
        }
        if self.layers[0].inputs != FEATURES {
            return Err(Error::DimensionMismatch {
                expected: FEATURES,
                got: self.layers[0].inputs,
            });
        }
        for s in samples {
            if !(0.0..=1.0).contains(&s.target) || s.features.iter().any(|f| !f.is_finite()) {
                return Err(Error::InvalidArgument("sample target outside [0, 1] or non-finite feature".into()));
            }
        }
        Ok(())
    }

    /// Mean squared error over `samples`.
    pub fn loss(&self, samples: &[TrainSample]) -> f64 {
        let n = samples.len() as f64;
        samples
            .iter()
            .map(|s| (self.forward_unchecked(&s.features) - s.target).powi(2))
            .sum::<f64>()
            / n
    }

    /// Loss and its gradient by backpropagation, flattened like `params()`.
    pub fn loss_and_gradient(&self, samples: &[TrainSample]) -> (f64, Vec<f64>) {
        let n = samples.len() as f64;
        let mut grads: Vec<(Vec<f64>, Vec<f64>)> = self
            .layers
            .iter()
            .map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.biases.len()]))
            .collect();
        let mut loss = 0.0;
        let last = self.layers.len() - 1;

        for s in samples {
            // Forward, keeping every layer's activation.
            let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len() + 1);
            acts.push(s.features.to_vec());
            for (li, l) in self.layers.iter().enumerate() {
                let input = &acts[li];
                let out: Vec<f64> = (0..l.outputs)
                    .map(|o| {
                        let row = &l.weights[o * l.inputs..(o + 1) * l.inputs];
                        let z = l.biases[o] + row.iter().zip(input).map(|(w, a)| w * a).sum::<f64>();
                        if li == last {
                            sigmoid(z)
                        } else {
                            z.tanh()
                        }
                    })
                    .collect();
                acts.push(out);
            }
            let y = acts[last + 1][0];
            let residual = y - s.target;
            loss += residual * residual;

            // Backward.
            let mut delta = vec![2.0 * residual / n * y * (1.0 - y)];
            for li in (0..=last).rev() {
                let l = &self.layers[li];
                let input = &acts[li];
                let (gw, gb) = &mut grads[li];
                for o in 0..l.outputs {
                    gb[o] += delta[o];
                    for i in 0..l.inputs {
                        gw[o * l.inputs + i] += delta[o] * input[i];
                    }
                }
                if li > 0 {
                    delta = (0..l.inputs)
                        .map(|i| {
                            let back: f64 = (0..l.outputs).map(|o| l.weights[o * l.inputs + i] * delta[o]).sum();
                            back * (1.0 - input[i] * input[i])
                        })
                        .collect();
                }
            }
        }

        let flat = grads.into_iter().flat_map(|(w, b)| w.into_iter().chain(b)).collect();
        (loss / n, flat)
    }
}

/// Zero-initialized model for `cfg`'s layer sizes (outputs 0.5 everywhere).
pub fn zero_model(cfg: &TrainConfig) -> Result<MlpModel> {
    Ok(MlpModel::init(0, cfg)?.zeroed())
}

pub fn init(seed: u64, cfg: &TrainConfig) -> Result<MlpModel> {
    MlpModel::init(seed, cfg)
}

pub fn forward(model: &MlpModel, features: &[f64]) -> Result<f64> {
    model.forward(features)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trained {
    pub model: MlpModel,
    /// Loss before training followed by the loss after every epoch.
    pub loss_trace: Vec<f64>,
    pub final_step: f64,
}

pub fn train(model: &MlpModel, samples: &[TrainSample], cfg: &TrainConfig) -> Result<Trained> {
    cfg.validate()?;
    model.check_samples(samples)?;

    let mut current = model.clone();
    let mut params = current.params();
    let (mut loss, mut grad) = current.loss_and_gradient(samples);
    if !loss.is_finite() {
        return Err(Error::Training { epoch: 0, loss });
    }
    let mut trace = Vec::with_capacity(cfg.epochs + 1);
    trace.push(loss);
    let mut step = cfg.learning_rate;
    let mut candidate = current.clone();

    for epoch in 1..=cfg.epochs {
        let proposal: Vec<f64> = params.iter().zip(&grad).map(|(p, g)| p - step * g).collect();
        candidate.set_params(&proposal);
        let (next_loss, next_grad) = candidate.loss_and_gradient(samples);
        if next_loss.is_finite() && next_loss <= loss {
            params = proposal;
            loss = next_loss;
            grad = next_grad;
            step *= cfg.step_growth;
        } else {
            step *= 0.5;
            if step == 0.0 {
                return Err(Error::Training { epoch, loss: next_loss });
            }
        }
        trace.push(loss);
    }

    current.set_params(&params);
    Ok(Trained {
        model: current,
        loss_trace: trace,
        final_step: step,
    })
}

pub const GRADIENT_CHECK_STEP: f64 = 1e-5;
/// Denominator floor so that vanishing gradients compare by absolute error.
pub const GRADIENT_CHECK_FLOOR: f64 = 1e-6;

/// Largest relative difference between backprop and central differences.
pub fn gradient_check(model: &MlpModel, samples: &[TrainSample]) -> Result<f64> {
    model.check_samples(samples)?;
    let (_, analytic) = model.loss_and_gradient(samples);
    let base = model.params();
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for (i, &g) in analytic.iter().enumerate() {
        let mut p = base.clone();
        p[i] = base[i] + GRADIENT_CHECK_STEP;
        probe.set_params(&p);
        let up = probe.loss(samples);
        p[i] = base[i] - GRADIENT_CHECK_STEP;
        probe.set_params(&p);
        let down = probe.loss(samples);
        let numeric = (up - down) / (2.0 * GRADIENT_CHECK_STEP);
        let denom = g.abs().max(numeric.abs()).max(GRADIENT_CHECK_FLOOR);
        worst = worst.max((g - numeric).abs() / denom);
    }
    Ok(worst)
}

/// Per-bin statistics the network reads its features from.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureContext {
    pub bins: BinConfig,
    pub stats: Vec<BinStats>,
    pub d_max: f64,
}

impl FeatureContext {
    /// `d_max` is the center of the farthest nonempty bin, matching the
    /// validity range of a curve calibrated on the same statistics.
    pub fn new(bins: BinConfig, stats: Vec<BinStats>) -> Result<Self> {
        let d_max = stats
            .iter()
            .filter(|b| !b.is_empty())
            .map(|b| b.center())
            .fold(f64::NEG_INFINITY, f64::max);
        if !(d_max > 0.0) {
            return Err(Error::InvalidArgument("feature context needs a nonempty bin".into()));
        }
        if stats.len() != bins.count {
            return Err(Error::DimensionMismatch {
                expected: bins.count,
                got: stats.len(),
            });
        }
        Ok(FeatureContext { bins, stats, d_max })
    }

    /// Statistics of the bin holding `range`, or of the nearest nonempty bin.
    fn moments(&self, range: f64) -> (f64, f64) {
        let home = match stats::slot_of(range, &self.bins) {
            BinSlot::Bin(i) => i,
            BinSlot::Underflow => 0,
            BinSlot::Overflow => self.bins.count - 1,
        };
        let nearest = (0..self.stats.len())
            .filter(|&i| !self.stats[i].is_empty())
            .min_by_key(|&i| (i.abs_diff(home), i))
            .expect("context has a nonempty bin");
        let b = &self.stats[nearest];
        (b.mean.unwrap_or(0.0), b.std.unwrap_or(0.0))
    }

    pub fn features(&self, range: f64) -> [f64; FEATURES] {
        let (mean, std) = self.moments(range);
        [range / self.d_max, mean, std]
    }
}

/// Sampling grid for distilling a curve into the network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistillConfig {
    pub max_range: f64,
    pub step: f64,
}

impl Default for DistillConfig {
    fn default() -> Self {
        DistillConfig {
            max_range: 120.0,
            step: 1.0,
        }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_range > 0.0 && self.max_range.is_finite()) {
            return Err(Error::Config("distill.max_range must be > 0".into()));
        }
        if !(self.step > 0.0 && self.step <= self.max_range) {
            return Err(Error::Config("distill.step must be in (0, max_range]".into()));
        }
        Ok(())
    }
}

/// Dense samples of the curve over [0, max_range] at `step` meters.
pub fn distill_samples(curve: &ThresholdCurve, ctx: &FeatureContext, max_range: f64, step: f64) -> Vec<TrainSample> {
    let count = (max_range / step).floor() as usize;
    (0..=count)
        .map(|i| {
            let d = i as f64 * step;
            TrainSample {
                features: ctx.features(d),
                target: eval_threshold(curve, d),
            }
        })
        .collect()
}

/// Per-bin threshold on a 0.01 grid maximizing F1 against ground truth.
/// Ties keep the lower threshold. Bins with neither detections nor ground
/// truth get `None`.
pub fn f1_optimal_thresholds(
    dets: &DetectionSet,
    gts: &GroundTruthSet,
    bins: &BinConfig,
    match_cfg: &MatchConfig,
) -> Vec<Option<f64>> {
    let matched = eval::match_sets(dets, gts, match_cfg);
    let mut per_bin: Vec<Vec<(f64, bool)>> = vec![Vec::new(); bins.count];
    for (d, is_tp) in dets.iter().zip(&matched.det_is_tp) {
        if let BinSlot::Bin(i) = stats::slot_of(bins.range(d), bins) {
            per_bin[i].push((d.score, *is_tp));
        }
    }
    let mut gt_per_bin = vec![0usize; bins.count];
    for g in gts.iter() {
        if let BinSlot::Bin(i) = stats::slot_of(bins.metric.range(&g.bbox), bins) {
            gt_per_bin[i] += 1;
        }
    }

    per_bin
        .iter()
        .zip(&gt_per_bin)
        .map(|(in_bin, &gt_count)| {
            if in_bin.is_empty() && gt_count == 0 {
                return None;
            }
            let mut best = (0.0, f64::NEG_INFINITY);
            for step in 0..=100 {
                let t = step as f64 / 100.0;
                let tp = in_bin.iter().filter(|(s, tp)| *tp && *s > t).count() as f64;
                let fp = in_bin.iter().filter(|(s, tp)| !*tp && *s > t).count() as f64;
                let fn_ = (gt_count as f64 - tp).max(0.0);
                let f1 = if tp == 0.0 { 0.0 } else { 2.0 * tp / (2.0 * tp + fp + fn_) };
                if f1 > best.1 {
                    best = (t, f1);
                }
            }
            Some(best.0)
        })
        .collect()
}

/// One sample per bin at its center, targeting the F1-optimal threshold.
pub fn f1_optimal_samples(
    dets: &DetectionSet,
    gts: &GroundTruthSet,
    ctx: &FeatureContext,
    match_cfg: &MatchConfig,
) -> Vec<TrainSample> {
    f1_optimal_thresholds(dets, gts, &ctx.bins, match_cfg)
        .into_iter()
        .enumerate()
        .filter(|(i, t)| t.is_some() && !ctx.stats[*i].is_empty())
        .map(|(i, t)| TrainSample {
            features: ctx.features(ctx.bins.center(i)),
            target: t.unwrap(),
        })
        .collect()
}

/// The network as a detection filter.
#[derive(Debug, Clone, PartialEq)]
pub struct NnFilter {
    pub model: MlpModel,
    pub ctx: FeatureContext,
}

impl ThresholdFilter for NnFilter {
    fn threshold_for(&self, det: &Detection) -> f64 {
        self.model
            .forward_unchecked(&self.ctx.features(self.ctx.bins.range(det)))
    }
}

pub fn as_filter(model: MlpModel, ctx: FeatureContext) -> Result<NnFilter> {
    if model.layers[0].inputs != FEATURES {
        return Err(Error::DimensionMismatch {
            expected: FEATURES,
            got: model.layers[0].inputs,
        });
    }
    Ok(NnFilter { model, ctx })
}

/// Text form: layer sizes, then per layer one line per weight row followed by
/// one line of biases, all at 17 significant digits.
pub fn model_to_text(model: &MlpModel) -> String {
    let sizes: Vec<String> = model.layer_sizes().iter().map(|s| s.to_string()).collect();
    let mut out = sizes.join(",");
    out.push('\n');
    let join = |xs: &[f64]| xs.iter().map(|&x| fmt_exact(x)).collect::<Vec<_>>().join(",");
    for l in &model.layers {
        for row in l.weights.chunks(l.inputs) {
            let _ = writeln!(out, "{}", join(row));
        }
        let _ = writeln!(out, "{}", join(&l.biases));
    }
    out
}

pub fn model_from_text(text: &str) -> Result<MlpModel> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::parse(1, "empty model file"))?;
    let sizes: Vec<usize> = header
        .split(',')
        .map(|s| s.parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::parse(1, "invalid layer sizes"))?;
    if sizes.len() < 2 || sizes.contains(&0) {
        return Err(Error::parse(1, "need at least two positive layer sizes"));
    }
    let mut row = |expected: usize| -> Result<Vec<f64>> {
        let (idx, line) = lines
            .next()
            .ok_or_else(|| Error::parse(0, "truncated model file"))?;
        let vals: Vec<f64> = line
            .split(',')
            .map(|s| s.parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::parse(idx + 1, "non-numeric parameter"))?;
        if vals.len() != expected || vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::parse(idx + 1, format!("expected {expected} finite values")));
        }
        Ok(vals)
    };
    let mut layers = Vec::new();
    for w in sizes.windows(2) {
        let (inputs, outputs) = (w[0], w[1]);
        let mut weights = Vec::with_capacity(inputs * outputs);
        for _ in 0..outputs {
            weights.extend(row(inputs)?);
        }
        let biases = row(outputs)?;
        layers.push(Layer {
            inputs,
            outputs,
            weights,
            biases,
        });
    }
    Ok(MlpModel { layers })
}

pub fn loss_trace_csv(trace: &[f64]) -> String {
    let mut out = String::from("epoch,loss\n");
    for (i, l) in trace.iter().enumerate() {
        let _ = writeln!(out, "{i},{}", fmt_exact(*l));
    }
    out
}
