//! Classical thresholding methods applied to score-versus-distance data.
//!
//! Each window method turns the scores of one distance bin into a single
//! score threshold, the same way document binarization methods turn a pixel
//! neighbourhood into a gray-level threshold:
//!
//! | method     | threshold                                        |
//! |------------|--------------------------------------------------|
//! | Otsu       | edge maximizing ω₀ω₁(μ₀ − μ₁)²                   |
//! | Niblack    | m + k·s                                          |
//! | NICK       | m + k·sqrt(Σs²/n)                                |
//! | Bernsen    | (max + min)/2 if max − min ≥ limit, else fallback |
//! | Phansalkar | m·(1 + p·exp(−q·m) + k·(s/R − 1))                |
//! | Bradley    | m·(1 − t/100)                                    |

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::detection::{Detection, DetectionSet, RangeMetric};
use crate::error::{Error, Result};
use crate::filter::ThresholdFilter;
use crate::stats::{self, BinConfig, BinSlot, ScoreHistogram};
use crate::threshold::Decision;

/// Local statistics of the scores in one distance window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowStats {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub min_score: f64,
    pub max_score: f64,
}

impl WindowStats {
    pub fn from_scores(scores: &[f64]) -> Result<Self> {
        let (mean, std) = stats::mean_std(scores).ok_or(Error::EmptyWindow)?;
        let min_score = scores.iter().copied().fold(f64::INFINITY, f64::min);
        let max_score = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(WindowStats {
            n: scores.len(),
            mean,
            std,
            min_score,
            max_score,
        })
    }
}

/// Otsu's threshold over a histogram: the boundary between adjacent bins
/// that maximizes between-class variance. Ties go to the lower boundary.
pub fn otsu(h: &ScoreHistogram) -> Result<f64> {
    let nonzero = h.mass.iter().filter(|&&p| p > 0.0).count();
    if nonzero < 2 {
        return Err(Error::DegenerateHistogram(format!(
            "Otsu needs at least 2 occupied bins, found {nonzero}"
        )));
    }
    let total_w: f64 = h.mass.iter().sum();
    let total_rp: f64 = h.centers.iter().zip(&h.mass).map(|(r, p)| r * p).sum();

    let mut best = (0usize, f64::NEG_INFINITY);
    let (mut w0, mut rp0) = (0.0, 0.0);
    for j in 0..h.len() - 1 {
        w0 += h.mass[j];
        rp0 += h.centers[j] * h.mass[j];
        let w1 = total_w - w0;
        if w0 <= 0.0 || w1 <= 0.0 {
            continue;
        }
        let mu0 = rp0 / w0;
        let mu1 = (total_rp - rp0) / w1;
        let between = w0 * w1 * (mu0 - mu1).powi(2);
        if between > best.1 {
            best = (j, between);
        }
    }
    let j = best.0;
    Ok((h.centers[j] + h.centers[j + 1]) / 2.0)
}

pub fn niblack(w: &WindowStats, k: f64) -> f64 {
    w.mean + k * w.std
}

pub fn nick(scores: &[f64], k: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::EmptyWindow);
    }
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let mean_sq = scores.iter().map(|s| s * s).sum::<f64>() / n;
    Ok(mean + k * mean_sq.sqrt())
}

pub fn bernsen(w: &WindowStats, contrast_limit: f64, fallback: f64) -> f64 {
    if w.max_score - w.min_score >= contrast_limit {
        (w.max_score + w.min_score) / 2.0
    } else {
        fallback
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhansalkarParams {
    pub k: f64,
    pub p: f64,
    pub q: f64,
    pub r: f64,
}

impl Default for PhansalkarParams {
    fn default() -> Self {
        PhansalkarParams {
            k: 0.25,
            p: 2.0,
            q: 10.0,
            r: 0.5,
        }
    }
}

pub fn phansalkar(w: &WindowStats, params: &PhansalkarParams) -> Result<f64> {
    if !(params.r > 0.0) {
        return Err(Error::InvalidArgument(format!("Phansalkar R must be > 0, got {}", params.r)));
    }
    let m = w.mean;
    Ok(m * (1.0 + params.p * (-params.q * m).exp() + params.k * (w.std / params.r - 1.0)))
}

pub fn bradley(w: &WindowStats, t_pct: f64) -> Result<f64> {
    if !(0.0..100.0).contains(&t_pct) {
        return Err(Error::InvalidArgument(format!("Bradley t must be in [0, 100), got {t_pct}")));
    }
    Ok(w.mean * (1.0 - t_pct / 100.0))
}

pub const STATIC_NEAR: f64 = 0.5;
pub const STATIC_FAR: f64 = 0.3;
pub const STATIC_BOUNDARY: f64 = 40.0;

/// 0.5 below 40 m, 0.3 at or beyond.
pub fn static_dual(score: f64, range: f64) -> Decision {
    let t = if range < STATIC_BOUNDARY {
        STATIC_NEAR
    } else {
        STATIC_FAR
    };
    if score > t {
        Decision::Keep
    } else {
        Decision::Reject
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StaticDual {
    pub near: f64,
    pub far: f64,
    pub boundary: f64,
    pub metric: RangeMetric,
}

impl Default for StaticDual {
    fn default() -> Self {
        StaticDual {
            near: STATIC_NEAR,
            far: STATIC_FAR,
            boundary: STATIC_BOUNDARY,
            metric: RangeMetric::Bev,
        }
    }
}

impl StaticDual {
    pub fn with_metric(metric: RangeMetric) -> Self {
        StaticDual {
            metric,
            ..Default::default()
        }
    }
}

impl ThresholdFilter for StaticDual {
    fn threshold_for(&self, det: &Detection) -> f64 {
        if self.metric.range(&det.bbox) < self.boundary {
            self.near
        } else {
            self.far
        }
    }
}

/// One threshold per distance bin; out-of-span detections use the nearest bin.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedThreshold {
    pub bins: BinConfig,
    pub thresholds: Vec<f64>,
}

impl ThresholdFilter for BinnedThreshold {
    fn threshold_for(&self, det: &Detection) -> f64 {
        let i = match stats::slot_of(self.bins.range(det), &self.bins) {
            BinSlot::Bin(i) => i,
            BinSlot::Underflow => 0,
            BinSlot::Overflow => self.bins.count - 1,
        };
        self.thresholds[i]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineMethod {
    Otsu,
    Niblack,
    Nick,
    Bernsen,
    Phansalkar,
    Bradley,
}

impl BaselineMethod {
    pub const ALL: [BaselineMethod; 6] = [
        BaselineMethod::Otsu,
        BaselineMethod::Niblack,
        BaselineMethod::Nick,
        BaselineMethod::Bernsen,
        BaselineMethod::Phansalkar,
        BaselineMethod::Bradley,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BaselineMethod::Otsu => "otsu",
            BaselineMethod::Niblack => "niblack",
            BaselineMethod::Nick => "nick",
            BaselineMethod::Bernsen => "bernsen",
            BaselineMethod::Phansalkar => "phansalkar",
            BaselineMethod::Bradley => "bradley",
        }
    }
}

impl fmt::Display for BaselineMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Parameters for the window methods and their benchmark sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub histogram_bins: usize,
    pub niblack_k: Vec<f64>,
    pub nick_k: Vec<f64>,
    pub bernsen_contrast: Vec<f64>,
    pub phansalkar: PhansalkarParams,
    pub bradley_t: Vec<f64>,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            histogram_bins: stats::DEFAULT_HISTOGRAM_BINS,
            niblack_k: vec![-0.2],
            nick_k: vec![-0.1],
            bernsen_contrast: vec![0.15],
            phansalkar: PhansalkarParams::default(),
            bradley_t: vec![15.0, 25.0, 35.0],
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.histogram_bins < 2 {
            return Err(Error::Config("baselines.histogram_bins must be >= 2".into()));
        }
        if !(self.phansalkar.r > 0.0) {
            return Err(Error::Config("baselines.phansalkar.r must be > 0".into()));
        }
        if let Some(t) = self.bradley_t.iter().find(|t| !(0.0..100.0).contains(*t)) {
            return Err(Error::Config(format!("baselines.bradley_t {t} outside [0, 100)")));
        }
        if let Some(c) = self.bernsen_contrast.iter().find(|c| !(**c >= 0.0)) {
            return Err(Error::Config(format!("baselines.bernsen_contrast {c} must be >= 0")));
        }
        Ok(())
    }

    /// Parameter values swept for `method`; Otsu and Phansalkar run once.
    pub fn sweep(&self, method: BaselineMethod) -> Vec<Option<f64>> {
        let wrap = |v: &[f64]| v.iter().map(|&x| Some(x)).collect();
        match method {
            BaselineMethod::Otsu | BaselineMethod::Phansalkar => vec![None],
            BaselineMethod::Niblack => wrap(&self.niblack_k),
            BaselineMethod::Nick => wrap(&self.nick_k),
            BaselineMethod::Bernsen => wrap(&self.bernsen_contrast),
            BaselineMethod::Bradley => wrap(&self.bradley_t),
        }
    }
}

/// Human-readable parameter label used in benchmark tables.
pub fn param_label(method: BaselineMethod, param: Option<f64>, cfg: &BaselineConfig) -> String {
    match (method, param) {
        (BaselineMethod::Phansalkar, _) => {
            let p = &cfg.phansalkar;
            format!("k={} p={} q={} R={}", p.k, p.p, p.q, p.r)
        }
        (BaselineMethod::Bradley, Some(t)) => format!("t={t}%"),
        (BaselineMethod::Bernsen, Some(c)) => format!("contrast={c}"),
        (_, Some(k)) => format!("k={k}"),
        (_, None) => "-".to_string(),
    }
}

/// Global Otsu threshold over every score in the set, 0.5 when degenerate.
pub fn global_otsu(set: &DetectionSet, hist_bins: usize) -> f64 {
    let scores: Vec<f64> = set.iter().map(|d| d.score).collect();
    stats::score_histogram(&scores, hist_bins)
        .and_then(|h| otsu(&h))
        .unwrap_or(STATIC_NEAR)
}

/// Per-bin thresholds for `method`, computed from the scores of `set`.
///
/// Empty windows, and windows where the method is undefined (Otsu on a
/// single occupied histogram bin), take the global Otsu threshold.
pub fn build_baseline(
    method: BaselineMethod,
    param: Option<f64>,
    set: &DetectionSet,
    bins: &BinConfig,
    cfg: &BaselineConfig,
) -> Result<BinnedThreshold> {
    let fallback = global_otsu(set, cfg.histogram_bins);
    let (per_bin, _, _) = stats::scores_by_bin(set, bins);
    let need = |p: Option<f64>| {
        p.ok_or_else(|| Error::InvalidArgument(format!("{method} needs a parameter")))
    };
    let mut thresholds = Vec::with_capacity(bins.count);
    for scores in &per_bin {
        let Ok(w) = WindowStats::from_scores(scores) else {
            thresholds.push(fallback);
            continue;
        };
        let t = match method {
            BaselineMethod::Otsu => {
                let h = stats::score_histogram(scores, cfg.histogram_bins)?;
                otsu(&h).unwrap_or(fallback)
            }
            BaselineMethod::Niblack => niblack(&w, need(param)?),
            BaselineMethod::Nick => nick(scores, need(param)?)?,
            BaselineMethod::Bernsen => bernsen(&w, need(param)?, fallback),
            BaselineMethod::Phansalkar => phansalkar(&w, &cfg.phansalkar)?,
            BaselineMethod::Bradley => bradley(&w, need(param)?)?,
        };
        thresholds.push(t);
    }
    Ok(BinnedThreshold {
        bins: *bins,
        thresholds,
    })
}
