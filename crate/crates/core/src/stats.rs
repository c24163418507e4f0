//! Distance binning, per-bin confidence statistics, and score histograms.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::detection::{Detection, DetectionSet, RangeMetric};
use crate::error::{Error, Result};
use crate::text::fmt_sig;

/// Half-open distance bins `[origin + i·width, origin + (i+1)·width)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BinConfig {
    pub origin: f64,
    pub width: f64,
    pub count: usize,
    pub metric: RangeMetric,
}

impl Default for BinConfig {
    fn default() -> Self {
        BinConfig {
            origin: 0.0,
            width: 10.0,
            count: 6,
            metric: RangeMetric::Bev,
        }
    }
}

impl BinConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.width > 0.0 && self.width.is_finite()) {
            return Err(Error::Config(format!("bins.width must be > 0, got {}", self.width)));
        }
        if self.count == 0 {
            return Err(Error::Config("bins.count must be >= 1".into()));
        }
        if !(self.origin >= 0.0 && self.origin.is_finite()) {
            return Err(Error::Config(format!("bins.origin must be >= 0, got {}", self.origin)));
        }
        Ok(())
    }

    pub fn lower(&self, i: usize) -> f64 {
        self.origin + i as f64 * self.width
    }

    pub fn upper(&self, i: usize) -> f64 {
        self.origin + (i + 1) as f64 * self.width
    }

    pub fn center(&self, i: usize) -> f64 {
        self.lower(i) + self.width / 2.0
    }

    /// End of the last bin; ranges at or beyond it overflow.
    pub fn span_end(&self) -> f64 {
        self.upper(self.count - 1)
    }

    pub fn range(&self, d: &Detection) -> f64 {
        self.metric.range(&d.bbox)
    }
}

/// Where a range falls relative to the bin partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinSlot {
    Bin(usize),
    Underflow,
    Overflow,
}

impl BinSlot {
    pub fn index(self) -> Option<usize> {
        match self {
            BinSlot::Bin(i) => Some(i),
            _ => None,
        }
    }
}

pub fn assign_bin(range: f64, cfg: &BinConfig) -> Result<BinSlot> {
    if range.is_nan() || range < 0.0 {
        return Err(Error::InvalidArgument(format!("negative range {range}")));
    }
    Ok(slot_of(range, cfg))
}

pub(crate) fn slot_of(range: f64, cfg: &BinConfig) -> BinSlot {
    if range < cfg.origin {
        return BinSlot::Underflow;
    }
    if range >= cfg.span_end() {
        return BinSlot::Overflow;
    }
    let mut i = ((range - cfg.origin) / cfg.width).floor() as usize;
    i = i.min(cfg.count - 1);
    // Division rounding can land one bin off near an edge.
    while i > 0 && cfg.lower(i) > range {
        i -= 1;
    }
    while i + 1 < cfg.count && cfg.upper(i) <= range {
        i += 1;
    }
    BinSlot::Bin(i)
}

/// Score statistics of one distance bin. `mean` and `std` are absent when `n == 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinStats {
    pub bin_index: usize,
    pub lower: f64,
    pub upper: f64,
    pub n: usize,
    pub mean: Option<f64>,
    pub std: Option<f64>,
}

impl BinStats {
    pub fn center(&self) -> f64 {
        self.lower + (self.upper - self.lower) / 2.0
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinSummary {
    pub bins: Vec<BinStats>,
    pub underflow: usize,
    pub overflow: usize,
}

impl BinSummary {
    pub fn nonempty(&self) -> impl Iterator<Item = &BinStats> {
        self.bins.iter().filter(|b| !b.is_empty())
    }
}

/// Mean and population deviation of `scores`; `None` when empty.
pub fn mean_std(scores: &[f64]) -> Option<(f64, f64)> {
    if scores.is_empty() {
        return None;
    }
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

/// Splits detection scores by bin, in input order.
pub fn scores_by_bin(set: &DetectionSet, cfg: &BinConfig) -> (Vec<Vec<f64>>, usize, usize) {
    let mut per_bin = vec![Vec::new(); cfg.count];
    let (mut under, mut over) = (0, 0);
    for d in set.iter() {
        match slot_of(cfg.range(d), cfg) {
            BinSlot::Bin(i) => per_bin[i].push(d.score),
            BinSlot::Underflow => under += 1,
            BinSlot::Overflow => over += 1,
        }
    }
    (per_bin, under, over)
}

/// Per-bin count, mean score and population deviation of scores.
pub fn bin_statistics(set: &DetectionSet, cfg: &BinConfig) -> BinSummary {
    let (per_bin, underflow, overflow) = scores_by_bin(set, cfg);
    let bins = per_bin
        .iter()
        .enumerate()
        .map(|(i, scores)| {
            let ms = mean_std(scores);
            BinStats {
                bin_index: i,
                lower: cfg.lower(i),
                upper: cfg.upper(i),
                n: scores.len(),
                mean: ms.map(|m| m.0),
                std: ms.map(|m| m.1),
            }
        })
        .collect();
    BinSummary {
        bins,
        underflow,
        overflow,
    }
}

pub const BIN_STATS_HEADER: &str = "bin_index,lower,upper,n,mean,std";

/// CSV rendering; absent statistics are written as empty fields.
pub fn bin_stats_csv(bins: &[BinStats]) -> String {
    let mut out = String::from(BIN_STATS_HEADER);
    out.push('\n');
    let opt = |v: Option<f64>| v.map(|x| fmt_sig(x, 17)).unwrap_or_default();
    for b in bins {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            b.bin_index,
            fmt_sig(b.lower, 17),
            fmt_sig(b.upper, 17),
            b.n,
            opt(b.mean),
            opt(b.std)
        );
    }
    out
}

pub fn parse_bin_stats_csv(text: &str) -> Result<Vec<BinStats>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == BIN_STATS_HEADER => {}
        _ => return Err(Error::parse(1, "missing bin stats header")),
    }
    let num = |line: usize, s: &str| -> Result<f64> {
        s.parse()
            .map_err(|_| Error::parse(line, format!("non-numeric field {s:?}")))
    };
    let opt = |line: usize, s: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            num(line, s).map(Some)
        }
    };
    let mut out = Vec::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        if raw.is_empty() {
            continue;
        }
        let f: Vec<&str> = raw.split(',').collect();
        if f.len() != 6 {
            return Err(Error::parse(line, "expected 6 fields"));
        }
        let int = |s: &str| -> Result<usize> {
            s.parse()
                .map_err(|_| Error::parse(line, format!("invalid integer {s:?}")))
        };
        let b = BinStats {
            bin_index: int(f[0])?,
            lower: num(line, f[1])?,
            upper: num(line, f[2])?,
            n: int(f[3])?,
            mean: opt(line, f[4])?,
            std: opt(line, f[5])?,
        };
        if (b.n == 0) != b.mean.is_none() || b.mean.is_none() != b.std.is_none() {
            return Err(Error::parse(line, "statistics inconsistent with count"));
        }
        out.push(b);
    }
    Ok(out)
}

/// Normalized histogram of scores over explicit bin centers.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreHistogram {
    pub centers: Vec<f64>,
    pub mass: Vec<f64>,
}

pub const DEFAULT_HISTOGRAM_BINS: usize = 256;

impl ScoreHistogram {
    /// Builds a histogram from explicit centers and (already normalized) mass.
    pub fn from_parts(centers: Vec<f64>, mass: Vec<f64>) -> Result<Self> {
        if centers.len() != mass.len() {
            return Err(Error::DimensionMismatch {
                expected: centers.len(),
                got: mass.len(),
            });
        }
        if mass.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidArgument("negative histogram mass".into()));
        }
        Ok(ScoreHistogram { centers, mass })
    }

    /// True when the histogram carries no mass (built from no scores).
    pub fn is_empty(&self) -> bool {
        self.mass.iter().all(|&p| p == 0.0)
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    /// Upper edge of bin `i` for a uniform histogram over [0, 1].
    pub fn edge_after(&self, i: usize) -> f64 {
        (i + 1) as f64 / self.centers.len() as f64
    }
}

/// Uniform `bins`-bin histogram over [0, 1]; a score of 1.0 lands in the top bin.
pub fn score_histogram(scores: &[f64], bins: usize) -> Result<ScoreHistogram> {
    if bins == 0 {
        return Err(Error::InvalidArgument("histogram needs at least one bin".into()));
    }
    let mut counts = vec![0usize; bins];
    for &s in scores {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::InvalidArgument(format!("score {s} outside [0, 1]")));
        }
        let i = ((s * bins as f64) as usize).min(bins - 1);
        counts[i] += 1;
    }
    let n = scores.len();
    let centers = (0..bins).map(|i| (i as f64 + 0.5) / bins as f64).collect();
    let mass = counts
        .iter()
        .map(|&c| if n == 0 { 0.0 } else { c as f64 / n as f64 })
        .collect();
    Ok(ScoreHistogram { centers, mass })
}

pub fn hist_mean(h: &ScoreHistogram) -> Result<f64> {
    if h.is_empty() {
        return Err(Error::DegenerateHistogram("empty histogram".into()));
    }
    Ok(h.centers.iter().zip(&h.mass).map(|(r, p)| r * p).sum())
}

/// Which deviation to report from a histogram.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DeviationForm {
    /// sqrt(Σ (r - m)² p(r)), the standard deviation.
    #[default]
    Standard,
    /// Σ (r - m) p(r) exactly as the formula is often transcribed. It is the
    /// first central moment and therefore zero up to rounding; kept only for
    /// auditing that transcription.
    FirstCentralMoment,
}

pub fn hist_deviation(h: &ScoreHistogram, form: DeviationForm) -> Result<f64> {
    let m = hist_mean(h)?;
    let pairs = h.centers.iter().zip(&h.mass);
    Ok(match form {
        DeviationForm::Standard => pairs.map(|(r, p)| (r - m).powi(2) * p).sum::<f64>().sqrt(),
        DeviationForm::FirstCentralMoment => pairs.map(|(r, p)| (r - m) * p).sum(),
    })
}

pub fn hist_std(h: &ScoreHistogram) -> Result<f64> {
    hist_deviation(h, DeviationForm::Standard)
}
