//! Distance-adaptive threshold: a weighted quadratic fitted to per-bin score
//! targets, clamped below by a floor, plus the dual-condition keep rule.

use serde::{Deserialize, Serialize};

use crate::baseline::StaticDual;
use crate::detection::{Detection, DetectionSet, RangeMetric};
use crate::error::{Error, Result};
use crate::filter::ThresholdFilter;
use crate::stats::{self, BinConfig, BinStats, BinSummary};
use crate::text::fmt_exact;

/// T(d) = a·d² + b·d + c, frozen beyond `d_max` and clamped to `[floor_k, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdCurve {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub floor_k: f64,
    pub d_max: f64,
}

impl ThresholdCurve {
    pub fn constant(c: f64, floor_k: f64, d_max: f64) -> Self {
        ThresholdCurve {
            a: 0.0,
            b: 0.0,
            c,
            floor_k,
            d_max,
        }
    }

    /// Raw polynomial value, no freezing or clamping.
    pub fn polynomial(&self, d: f64) -> f64 {
        (self.a * d + self.b) * d + self.c
    }

    pub fn with_floor(self, floor_k: f64) -> Self {
        ThresholdCurve { floor_k, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.a, self.b, self.c].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite curve coefficient".into()));
        }
        if !(0.0..=1.0).contains(&self.floor_k) {
            return Err(Error::InvalidArgument(format!("floor_k {} outside [0, 1]", self.floor_k)));
        }
        if !(self.d_max > 0.0 && self.d_max.is_finite()) {
            return Err(Error::InvalidArgument(format!("d_max {} must be > 0", self.d_max)));
        }
        Ok(())
    }

    /// One-line `a,b,c,floor_k,d_max` record, 17 significant digits.
    pub fn to_text(&self) -> String {
        format!(
            "{},{},{},{},{}\n",
            fmt_exact(self.a),
            fmt_exact(self.b),
            fmt_exact(self.c),
            fmt_exact(self.floor_k),
            fmt_exact(self.d_max)
        )
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let line = text
            .lines()
            .find(|l| !l.is_empty() && !l.starts_with('#'))
            .ok_or_else(|| Error::parse(1, "empty curve file"))?;
        let line_no = text.lines().position(|l| l == line).unwrap_or(0) + 1;
        let v: Vec<f64> = line
            .split(',')
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::parse(line_no, "non-numeric curve field"))?;
        if v.len() != 5 {
            return Err(Error::parse(line_no, format!("expected 5 curve fields, found {}", v.len())));
        }
        let curve = ThresholdCurve {
            a: v[0],
            b: v[1],
            c: v[2],
            floor_k: v[3],
            d_max: v[4],
        };
        curve
            .validate()
            .map_err(|e| Error::parse(line_no, e.to_string()))?;
        Ok(curve)
    }
}

/// Multipliers of the dual-condition rule; also shape calibration targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuleParams {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for RuleParams {
    fn default() -> Self {
        RuleParams {
            alpha: 1.0,
            beta: 1.0,
        }
    }
}

impl RuleParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite() && self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!(
                "alpha and beta must be finite and >= 0, got {} and {}",
                self.alpha, self.beta
            )));
        }
        Ok(())
    }
}

pub const DEFAULT_FLOOR_K: f64 = 0.2;

/// Weighted least-squares polynomial of the given degree via the normal
/// equations, solved by Gaussian elimination with partial pivoting.
///
/// Abscissae are scaled to [-1, 1] before forming the normal matrix and the
/// coefficients mapped back afterwards. Returned in ascending power order.
pub fn fit_polynomial(points: &[(f64, f64)], weights: &[f64], degree: usize) -> Result<Vec<f64>> {
    let terms = degree + 1;
    if points.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: points.len(),
            got: weights.len(),
        });
    }
    if weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
        return Err(Error::InvalidArgument("weights must be finite and > 0".into()));
    }
    if points.iter().any(|&(d, t)| !d.is_finite() || !t.is_finite()) {
        return Err(Error::InvalidArgument("non-finite fit point".into()));
    }
    let mut xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    if xs.len() < terms {
        return Err(Error::DegenerateFit(format!(
            "need {terms} distinct abscissae, found {}",
            xs.len()
        )));
    }

    let scale = points.iter().map(|p| p.0.abs()).fold(0.0, f64::max);
    let scale = if scale > 0.0 { scale } else { 1.0 };

    let mut normal = vec![vec![0.0; terms + 1]; terms];
    for (&(d, t), &w) in points.iter().zip(weights) {
        let u = d / scale;
        let mut powers = vec![1.0; terms];
        for k in 1..terms {
            powers[k] = powers[k - 1] * u;
        }
        for i in 0..terms {
            for j in 0..terms {
                normal[i][j] += w * powers[i] * powers[j];
            }
            normal[i][terms] += w * powers[i] * t;
        }
    }

    let solved = solve_augmented(normal)?;
    Ok(solved
        .iter()
        .enumerate()
        .map(|(k, c)| c / scale.powi(k as i32))
        .collect())
}

fn solve_augmented(mut m: Vec<Vec<f64>>) -> Result<Vec<f64>> {
    let n = m.len();
    let magnitude = m
        .iter()
        .flat_map(|row| row[..n].iter())
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
            .expect("non-empty range");
        if m[pivot][col].abs() <= 1e-12 * magnitude {
            return Err(Error::DegenerateFit("singular normal equations".into()));
        }
        m.swap(col, pivot);
        for row in col + 1..n {
            let factor = m[row][col] / m[col][col];
            let (upper, lower) = m.split_at_mut(row);
            for (dst, src) in lower[0][col..].iter_mut().zip(&upper[col][col..]) {
                *dst -= factor * src;
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = m[row][n];
        for k in row + 1..n {
            acc -= m[row][k] * x[k];
        }
        x[row] = acc / m[row][row];
    }
    Ok(x)
}

fn max_abscissa(points: &[(f64, f64)]) -> f64 {
    points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max)
}

/// Weighted quadratic fit; `floor_k` is left at 0 for the caller to set.
pub fn fit_quadratic(points: &[(f64, f64)], weights: &[f64]) -> Result<ThresholdCurve> {
    let c = fit_polynomial(points, weights, 2)?;
    Ok(ThresholdCurve {
        a: c[2],
        b: c[1],
        c: c[0],
        floor_k: 0.0,
        d_max: max_abscissa(points),
    })
}

/// Weighted straight-line fallback (`a = 0`).
pub fn fit_linear(points: &[(f64, f64)], weights: &[f64]) -> Result<ThresholdCurve> {
    let c = fit_polynomial(points, weights, 1)?;
    Ok(ThresholdCurve {
        a: 0.0,
        b: c[1],
        c: c[0],
        floor_k: 0.0,
        d_max: max_abscissa(points),
    })
}

/// Weighted-mean fallback (`a = b = 0`).
pub fn fit_constant(points: &[(f64, f64)], weights: &[f64]) -> Result<ThresholdCurve> {
    let c = fit_polynomial(points, weights, 0)?;
    Ok(ThresholdCurve {
        a: 0.0,
        b: 0.0,
        c: c[0],
        floor_k: 0.0,
        d_max: max_abscissa(points),
    })
}

/// Σ wᵢ (T(dᵢ) − tᵢ)² of the raw polynomial.
pub fn weighted_residual(curve: &ThresholdCurve, points: &[(f64, f64)], weights: &[f64]) -> f64 {
    points
        .iter()
        .zip(weights)
        .map(|(&(d, t), w)| w * (curve.polynomial(d) - t).powi(2))
        .sum()
}

/// One calibration point: target threshold at a bin center, weighted by count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinTarget {
    pub bin_index: usize,
    pub center: f64,
    pub target: f64,
    pub weight: f64,
}

/// Targets `clamp(β·mean − α·std, 0, 1)` for every nonempty bin.
pub fn bin_targets(stats: &[BinStats], params: &RuleParams) -> Vec<BinTarget> {
    stats
        .iter()
        .filter_map(|b| {
            let (mean, std) = (b.mean?, b.std?);
            Some(BinTarget {
                bin_index: b.bin_index,
                center: b.center(),
                target: (params.beta * mean - params.alpha * std).clamp(0.0, 1.0),
                weight: b.n as f64,
            })
        })
        .collect()
}

/// Fits the curve through explicit per-bin targets.
pub fn calibrate_from_targets(targets: &[BinTarget], floor_k: f64) -> Result<ThresholdCurve> {
    if targets.len() < 3 {
        return Err(Error::Calibration(format!(
            "need at least 3 nonempty bins, found {}",
            targets.len()
        )));
    }
    if !(0.0..=1.0).contains(&floor_k) {
        return Err(Error::Calibration(format!("floor_k {floor_k} outside [0, 1]")));
    }
    let points: Vec<(f64, f64)> = targets.iter().map(|t| (t.center, t.target)).collect();
    let weights: Vec<f64> = targets.iter().map(|t| t.weight).collect();
    let curve = fit_quadratic(&points, &weights).map_err(|e| Error::Calibration(e.to_string()))?;
    Ok(curve.with_floor(floor_k))
}

/// Bin statistics to threshold curve with the default mean-minus-deviation targets.
pub fn calibrate(stats: &[BinStats], params: &RuleParams, floor_k: f64) -> Result<ThresholdCurve> {
    params.validate()?;
    calibrate_from_targets(&bin_targets(stats, params), floor_k)
}

pub fn eval_threshold(curve: &ThresholdCurve, d: f64) -> f64 {
    let t = curve.polynomial(d.min(curve.d_max));
    t.clamp(curve.floor_k, 1.0).max(curve.floor_k)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Keep,
    Reject,
}

/// Keep iff `score > α·σ` and `score > β·m`.
pub fn decide(score: f64, m: f64, sigma: f64, params: &RuleParams) -> Decision {
    if score > params.alpha * sigma && score > params.beta * m {
        Decision::Keep
    } else {
        Decision::Reject
    }
}

/// The fitted curve applied per detection range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveFilter {
    pub curve: ThresholdCurve,
    pub metric: RangeMetric,
}

impl CurveFilter {
    pub fn new(curve: ThresholdCurve) -> Self {
        CurveFilter {
            curve,
            metric: RangeMetric::Bev,
        }
    }
}

impl ThresholdFilter for CurveFilter {
    fn threshold_for(&self, det: &Detection) -> f64 {
        eval_threshold(&self.curve, self.metric.range(&det.bbox))
    }
}

pub fn apply_curve(set: &DetectionSet, curve: &ThresholdCurve) -> DetectionSet {
    CurveFilter::new(*curve).apply(set)
}

/// The dual-condition rule with per-bin histogram mean and deviation.
///
/// Detections outside the bin span use the nearest bin's statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct DualConditionFilter {
    pub bins: BinConfig,
    pub params: RuleParams,
    /// `(m, sigma)` per bin; `None` for bins without detections.
    pub moments: Vec<Option<(f64, f64)>>,
}

impl DualConditionFilter {
    pub fn from_set(set: &DetectionSet, bins: BinConfig, params: RuleParams, hist_bins: usize) -> Result<Self> {
        let (per_bin, _, _) = stats::scores_by_bin(set, &bins);
        let moments = per_bin
            .iter()
            .map(|scores| {
                if scores.is_empty() {
                    return Ok(None);
                }
                let h = stats::score_histogram(scores, hist_bins)?;
                Ok(Some((stats::hist_mean(&h)?, stats::hist_std(&h)?)))
            })
            .collect::<Result<_>>()?;
        Ok(DualConditionFilter {
            bins,
            params,
            moments,
        })
    }

    fn moments_for(&self, range: f64) -> (f64, f64) {
        let i = match stats::slot_of(range, &self.bins) {
            stats::BinSlot::Bin(i) => i,
            stats::BinSlot::Underflow => 0,
            stats::BinSlot::Overflow => self.bins.count - 1,
        };
        self.moments[i].unwrap_or((0.0, 0.0))
    }
}

impl ThresholdFilter for DualConditionFilter {
    fn threshold_for(&self, det: &Detection) -> f64 {
        let (m, sigma) = self.moments_for(self.bins.range(det));
        (self.params.alpha * sigma).max(self.params.beta * m)
    }
}

/// Which detections feed the bin statistics used for calibration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum CalibrationPrefilter {
    /// Every detection.
    None,
    /// Only detections surviving the static 0.5 near / 0.3 far thresholds.
    #[default]
    StaticDual,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    pub alpha: f64,
    pub beta: f64,
    pub floor_k: f64,
    pub prefilter: CalibrationPrefilter,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            alpha: 1.0,
            beta: 1.0,
            floor_k: DEFAULT_FLOOR_K,
            prefilter: CalibrationPrefilter::StaticDual,
        }
    }
}

impl CalibrationConfig {
    pub fn params(&self) -> RuleParams {
        RuleParams {
            alpha: self.alpha,
            beta: self.beta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params().validate()?;
        if !(0.0..=1.0).contains(&self.floor_k) {
            return Err(Error::Config(format!("floor_k {} outside [0, 1]", self.floor_k)));
        }
        Ok(())
    }
}

/// Everything produced by calibrating on a detection set.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub summary: BinSummary,
    pub targets: Vec<BinTarget>,
    pub curve: ThresholdCurve,
}

/// Bin statistics of the detections selected by `prefilter`.
pub fn calibration_summary(set: &DetectionSet, bins: &BinConfig, prefilter: CalibrationPrefilter) -> BinSummary {
    match prefilter {
        CalibrationPrefilter::None => stats::bin_statistics(set, bins),
        CalibrationPrefilter::StaticDual => stats::bin_statistics(&StaticDual::with_metric(bins.metric).apply(set), bins),
    }
}

/// Prefilter, bin, build targets, fit.
pub fn calibrate_set(set: &DetectionSet, bins: &BinConfig, cfg: &CalibrationConfig) -> Result<Calibration> {
    cfg.validate()?;
    let summary = calibration_summary(set, bins, cfg.prefilter);
    let targets = bin_targets(&summary.bins, &cfg.params());
    let curve = calibrate_from_targets(&targets, cfg.floor_k)?;
    Ok(Calibration {
        summary,
        targets,
        curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::Box3D;
    use proptest::prelude::*;

    fn det(range: f64, score: f64) -> Detection {
        Detection {
            frame_id: 0,
            class_label: "car".into(),
            bbox: Box3D::new(range, 0.0, 0.0, 4.0, 2.0, 1.5, 0.0).unwrap(),
            score,
        }
    }

    fn bins_with(means: &[f64], stds: &[f64], n: usize) -> Vec<BinStats> {
        let cfg = BinConfig::default();
        means
            .iter()
            .zip(stds)
            .enumerate()
            .map(|(i, (&m, &s))| BinStats {
                bin_index: i,
                lower: cfg.lower(i),
                upper: cfg.upper(i),
                n,
                mean: Some(m),
                std: Some(s),
            })
            .collect()
    }

    #[test]
    fn exact_parabola_through_three_points() {
        let pts = [(0.0, 1.0), (1.0, 0.0), (2.0, 1.0)];
        let curve = fit_quadratic(&pts, &[1.0; 3]).unwrap();
        assert!((curve.a - 1.0).abs() < 1e-12);
        assert!((curve.b + 2.0).abs() < 1e-12);
        assert!((curve.c - 1.0).abs() < 1e-12);
        assert!(weighted_residual(&curve, &pts, &[1.0; 3]) < 1e-20);
        assert_eq!(curve.d_max, 2.0);
    }

    #[test]
    fn recovers_shallow_quadratic_on_bin_centers() {
        let truth = |d: f64| 0.5 - 0.004 * d + 0.00001 * d * d;
        let pts: Vec<_> = (0..6).map(|i| 5.0 + 10.0 * i as f64).map(|d| (d, truth(d))).collect();
        let curve = fit_quadratic(&pts, &[1.0; 6]).unwrap();
        assert!((curve.a - 0.00001).abs() < 1e-9);
        assert!((curve.b + 0.004).abs() < 1e-9);
        assert!((curve.c - 0.5).abs() < 1e-9);
    }

    #[test]
    fn two_abscissae_is_degenerate() {
        let err = fit_quadratic(&[(0.0, 1.0), (0.0, 0.0), (1.0, 0.5)], &[1.0; 3]).unwrap_err();
        assert!(matches!(err, Error::DegenerateFit(_)));
        // The lower-degree fallbacks accept the same data.
        let line = fit_linear(&[(0.0, 1.0), (0.0, 0.0), (1.0, 0.5)], &[1.0; 3]).unwrap();
        assert!((line.c - 0.5).abs() < 1e-12 && line.b.abs() < 1e-12);
        let flat = fit_constant(&[(3.0, 0.2), (3.0, 0.4)], &[1.0, 3.0]).unwrap();
        assert!((flat.c - 0.35).abs() < 1e-12);
    }

    #[test]
    fn bad_weights_rejected() {
        let pts = [(0.0, 1.0), (1.0, 0.0), (2.0, 1.0)];
        assert!(fit_quadratic(&pts, &[1.0, 0.0, 1.0]).is_err());
        assert!(fit_quadratic(&pts, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn calibrate_on_linear_means() {
        let stats = bins_with(&[0.9, 0.8, 0.7, 0.6, 0.5, 0.4], &[0.0; 6], 10);
        let curve = calibrate(&stats, &RuleParams::default(), 0.2).unwrap();
        // Centers 5..55: t = 0.95 - 0.01 d.
        assert!(curve.a.abs() < 1e-9);
        assert!((curve.b + 0.01).abs() < 1e-9);
        assert!((curve.c - 0.95).abs() < 1e-9);
        assert_eq!(curve.floor_k, 0.2);
        assert_eq!(curve.d_max, 55.0);
    }

    #[test]
    fn alpha_zero_targets_are_means() {
        let means = [0.9, 0.7, 0.65, 0.5];
        let stats = bins_with(&means, &[0.3, 0.1, 0.05, 0.2], 4);
        let params = RuleParams { alpha: 0.0, beta: 1.0 };
        let t: Vec<f64> = bin_targets(&stats, &params).iter().map(|t| t.target).collect();
        assert_eq!(t, means);
    }

    #[test]
    fn targets_clamp_at_zero() {
        let stats = bins_with(&[0.3], &[0.5], 1);
        assert_eq!(bin_targets(&stats, &RuleParams::default())[0].target, 0.0);
    }

    #[test]
    fn calibrate_needs_three_bins() {
        let mut stats = bins_with(&[0.9, 0.8, 0.7], &[0.0; 3], 5);
        stats[1].n = 0;
        stats[1].mean = None;
        stats[1].std = None;
        assert!(matches!(
            calibrate(&stats, &RuleParams::default(), 0.2),
            Err(Error::Calibration(_))
        ));
    }

    #[test]
    fn eval_threshold_examples() {
        let flat = ThresholdCurve::constant(0.5, 0.2, 60.0);
        for d in [0.0, 30.0, 600.0] {
            assert_eq!(eval_threshold(&flat, d), 0.5);
        }
        let low = ThresholdCurve { a: 0.0, b: -0.01, c: 0.5, floor_k: 0.2, d_max: 60.0 };
        assert!((low.polynomial(60.0) + 0.1).abs() < 1e-12);
        assert_eq!(eval_threshold(&low, 80.0), 0.2);
        let lin = ThresholdCurve { a: 0.0, b: -0.005, c: 0.5, floor_k: 0.1, d_max: 60.0 };
        assert!((eval_threshold(&lin, 40.0) - 0.30).abs() < 1e-12);
        assert!((eval_threshold(&lin, 70.0) - 0.20).abs() < 1e-12);
    }

    #[test]
    fn decide_examples() {
        let p = RuleParams { alpha: 1.0, beta: 1.0 };
        assert_eq!(decide(0.6, 0.5, 0.2, &p), Decision::Keep);
        assert_eq!(decide(0.4, 0.5, 0.2, &p), Decision::Reject);
        let zero = RuleParams { alpha: 0.0, beta: 0.0 };
        assert_eq!(decide(0.0, 0.7, 0.3, &zero), Decision::Reject);
        assert_eq!(decide(0.01, 0.7, 0.3, &zero), Decision::Keep);
        // Strict: equality rejects.
        assert_eq!(decide(0.5, 0.5, 0.1, &p), Decision::Reject);
    }

    #[test]
    fn apply_curve_examples() {
        let curve = ThresholdCurve::constant(0.5, 0.0, 60.0);
        assert!(apply_curve(&DetectionSet::empty("e"), &curve).is_empty());
        let set = DetectionSet::new(
            vec![det(5.0, 0.5), det(70.0, 0.51), det(20.0, 0.9), det(1.0, 0.1)],
            "s",
        );
        let kept: Vec<f64> = apply_curve(&set, &curve).iter().map(|d| d.score).collect();
        assert_eq!(kept, vec![0.51, 0.9]);
    }

    #[test]
    fn curve_text_round_trip() {
        let curve = ThresholdCurve { a: 1.0 / 3.0e5, b: -0.0071234567, c: 0.91, floor_k: 0.2, d_max: 55.0 };
        let text = curve.to_text();
        assert_eq!(text.lines().count(), 1);
        assert_eq!(ThresholdCurve::from_text(&text).unwrap(), curve);
        assert!(ThresholdCurve::from_text("1,2,3\n").is_err());
        assert!(ThresholdCurve::from_text("0,0,0.5,1.5,60\n").is_err());
    }

    #[test]
    fn dual_condition_filter_uses_bin_moments() {
        let set = DetectionSet::new(vec![det(5.0, 0.2), det(6.0, 0.8), det(45.0, 0.4)], "s");
        let f = DualConditionFilter::from_set(&set, BinConfig::default(), RuleParams::default(), 256).unwrap();
        let kept = f.apply(&set);
        // A lone detection cannot exceed its own bin mean.
        assert_eq!(kept.len(), 1);
        assert_eq!(kept.records[0].score, 0.8);
        // Empty bins fall back to zero moments: any positive score passes.
        assert!(f.keeps(&det(25.0, 0.01)));
    }

    proptest! {
        #[test]
        fn exact_quadratic_recovered(a in -0.001f64..0.001, b in -0.05f64..0.05, c in -1.0f64..1.0) {
            let pts: Vec<_> = (0..6).map(|i| 5.0 + 10.0 * i as f64).map(|d| (d, (a * d + b) * d + c)).collect();
            let w = [1.0; 6];
            let curve = fit_quadratic(&pts, &w).unwrap();
            prop_assert!(weighted_residual(&curve, &pts, &w) <= 1e-9);
            for (got, want) in [(curve.a, a), (curve.b, b), (curve.c, c)] {
                prop_assert!((got - want).abs() <= 1e-9 * want.abs().max(1e-3));
            }
        }

        #[test]
        fn weight_scaling_invariance(scale in 0.01f64..100.0, noise in prop::collection::vec(-0.05f64..0.05, 6)) {
            let pts: Vec<_> = (0..6).map(|i| {
                let d = 5.0 + 10.0 * i as f64;
                (d, 0.9 - 0.007 * d + noise[i])
            }).collect();
            let w: Vec<f64> = (1..=6).map(|i| i as f64).collect();
            let ws: Vec<f64> = w.iter().map(|x| x * scale).collect();
            let c1 = fit_quadratic(&pts, &w).unwrap();
            let c2 = fit_quadratic(&pts, &ws).unwrap();
            prop_assert!((c1.a - c2.a).abs() <= 1e-12);
            prop_assert!((c1.b - c2.b).abs() <= 1e-12);
            prop_assert!((c1.c - c2.c).abs() <= 1e-12);
        }

        #[test]
        fn threshold_stays_in_floor_to_one(a in -0.01f64..0.01, b in -0.1f64..0.1, c in -2.0f64..2.0,
                                           floor in 0.0f64..=1.0, d_max in 1.0f64..100.0, frac in 0.0f64..=10.0) {
            let curve = ThresholdCurve { a, b, c, floor_k: floor, d_max };
            let t = eval_threshold(&curve, frac * d_max);
            prop_assert!(t >= floor && t <= 1.0);
        }

        #[test]
        fn curve_filter_monotone_and_idempotent(ranges in prop::collection::vec(0.0f64..90.0, 0..50),
                                                 scores in prop::collection::vec(0.0f64..=1.0, 50),
                                                 bump in 0.0f64..0.5) {
            let curve = ThresholdCurve { a: 0.00005, b: -0.01, c: 0.8, floor_k: 0.2, d_max: 55.0 };
            let set = DetectionSet::new(ranges.iter().zip(&scores).map(|(&r, &s)| det(r, s)).collect(), "p");
            let once = apply_curve(&set, &curve);
            prop_assert_eq!(apply_curve(&once, &curve), once.clone());
            let f = CurveFilter::new(curve);
            for d in set.iter() {
                if f.keeps(d) {
                    let mut higher = d.clone();
                    higher.score = (d.score + bump).min(1.0);
                    prop_assert!(f.keeps(&higher));
                }
            }
        }

        #[test]
        fn zero_rule_is_positivity(score in 0.0f64..=1.0, m in 0.0f64..=1.0, s in 0.0f64..=1.0) {
            let zero = RuleParams { alpha: 0.0, beta: 0.0 };
            prop_assert_eq!(decide(score, m, s, &zero) == Decision::Keep, score > 0.0);
        }
    }
}
