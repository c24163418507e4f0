//! Matching detections to ground truth and scoring the result.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::detection::{Box3D, DetectionSet, GroundTruthSet, Record};
use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::stats::{self, BinConfig, BinSlot};
use crate::text::fmt_sig;

/// On-edge tolerance for polygon clipping, meters.
const CLIP_EPS: f64 = 1e-9;

type Point = [f64; 2];

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn polygon_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let twice: f64 = (0..n)
        .map(|i| {
            let (p, q) = (poly[i], poly[(i + 1) % n]);
            p[0] * q[1] - q[0] * p[1]
        })
        .sum();
    twice.abs() / 2.0
}

fn line_intersection(p: Point, q: Point, a: Point, b: Point) -> Point {
    let d1 = [q[0] - p[0], q[1] - p[1]];
    let d2 = [b[0] - a[0], b[1] - a[1]];
    let denom = d1[0] * d2[1] - d1[1] * d2[0];
    if denom.abs() < f64::EPSILON {
        return q;
    }
    let t = ((a[0] - p[0]) * d2[1] - (a[1] - p[1]) * d2[0]) / denom;
    [p[0] + t * d1[0], p[1] + t * d1[1]]
}

/// Sutherland–Hodgman: clips `subject` by the convex counter-clockwise `clip`.
fn clip_polygon(subject: &[Point], clip: &[Point]) -> Vec<Point> {
    let mut output = subject.to_vec();
    for i in 0..clip.len() {
        if output.is_empty() {
            break;
        }
        let (a, b) = (clip[i], clip[(i + 1) % clip.len()]);
        let edge_len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
        let inside = |p: Point| cross(a, b, p) >= -CLIP_EPS * edge_len;
        let input = std::mem::take(&mut output);
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
            match (inside(prev), inside(cur)) {
                (true, true) => output.push(cur),
                (true, false) => output.push(line_intersection(prev, cur, a, b)),
                (false, true) => {
                    output.push(line_intersection(prev, cur, a, b));
                    output.push(cur);
                }
                (false, false) => {}
            }
        }
    }
    output
}

/// Ground-plane intersection-over-union of two yawed boxes.
pub fn bev_iou(a: &Box3D, b: &Box3D) -> f64 {
    let reach = (a.dx.hypot(a.dy) + b.dx.hypot(b.dy)) / 2.0;
    if (a.x - b.x).hypot(a.y - b.y) > reach {
        return 0.0;
    }
    let pa = a.bev_corners();
    let pb = b.bev_corners();
    let inter = polygon_area(&clip_polygon(&pa, &pb));
    let union = a.dx * a.dy + b.dx * b.dy - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchCriterion {
    #[default]
    Iou,
    CenterDistance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchConfig {
    pub criterion: MatchCriterion,
    pub iou_threshold: f64,
    pub center_distance_threshold: f64,
    pub class_aware: bool,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            criterion: MatchCriterion::Iou,
            iou_threshold: 0.5,
            center_distance_threshold: 2.0,
            class_aware: true,
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.iou_threshold > 0.0 && self.iou_threshold <= 1.0) {
            return Err(Error::Config(format!(
                "matching.iou_threshold {} outside (0, 1]",
                self.iou_threshold
            )));
        }
        if !(self.center_distance_threshold > 0.0) {
            return Err(Error::Config("matching.center_distance_threshold must be > 0".into()));
        }
        Ok(())
    }

    /// Match quality where larger is better, or `None` below threshold.
    fn quality(&self, det: &Box3D, gt: &Box3D) -> Option<f64> {
        match self.criterion {
            MatchCriterion::Iou => {
                let iou = bev_iou(det, gt);
                (iou >= self.iou_threshold).then_some(iou)
            }
            MatchCriterion::CenterDistance => {
                let d = (det.x - gt.x).hypot(det.y - gt.y);
                (d <= self.center_distance_threshold).then_some(-d)
            }
        }
    }
}

/// Outcome of matching, indexed like the input sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchResult {
    /// Matched ground-truth index for each detection.
    pub det_match: Vec<Option<usize>>,
    pub det_is_tp: Vec<bool>,
    pub gt_matched: Vec<bool>,
}

impl MatchResult {
    pub fn tp(&self) -> usize {
        self.det_is_tp.iter().filter(|&&t| t).count()
    }
    pub fn fp(&self) -> usize {
        self.det_is_tp.len() - self.tp()
    }
    pub fn fn_(&self) -> usize {
        self.gt_matched.iter().filter(|&&m| !m).count()
    }
}

fn frame_ranges<R: Record>(records: &[R]) -> BTreeMap<u64, Range<usize>> {
    let mut out = BTreeMap::new();
    let mut start = 0;
    while start < records.len() {
        let id = records[start].frame_id();
        let mut end = start + 1;
        while end < records.len() && records[end].frame_id() == id {
            end += 1;
        }
        out.insert(id, start..end);
        start = end;
    }
    out
}

/// Greedy matching of one frame; returns local gt index per local detection.
fn match_frame(
    dets: &[crate::detection::Detection],
    gts: &[crate::detection::GroundTruthObject],
    cfg: &MatchConfig,
) -> Vec<Option<usize>> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score));
    let mut claimed = vec![false; gts.len()];
    let mut out = vec![None; dets.len()];
    for di in order {
        let d = &dets[di];
        let mut best: Option<(usize, f64)> = None;
        for (gi, g) in gts.iter().enumerate() {
            if claimed[gi] || (cfg.class_aware && g.class_label != d.class_label) {
                continue;
            }
            if let Some(q) = cfg.quality(&d.bbox, &g.bbox) {
                if best.is_none_or(|(_, bq)| q > bq) {
                    best = Some((gi, q));
                }
            }
        }
        if let Some((gi, _)) = best {
            claimed[gi] = true;
            out[di] = Some(gi);
        }
    }
    out
}

/// Greedy score-descending one-to-one matching within each frame.
pub fn match_sets(dets: &DetectionSet, gts: &GroundTruthSet, cfg: &MatchConfig) -> MatchResult {
    match_sets_with(dets, gts, cfg, Execution::Sequential)
}

pub fn match_sets_with(dets: &DetectionSet, gts: &GroundTruthSet, cfg: &MatchConfig, exec: Execution) -> MatchResult {
    let det_frames: Vec<(u64, Range<usize>)> = frame_ranges(&dets.records).into_iter().collect();
    let gt_frames = frame_ranges(&gts.records);

    let per_frame = par::map(&det_frames, exec, |(id, dr)| {
        let gr = gt_frames.get(id).cloned().unwrap_or(0..0);
        let local = match_frame(&dets.records[dr.clone()], &gts.records[gr.clone()], cfg);
        local.into_iter().map(|m| m.map(|g| g + gr.start)).collect::<Vec<_>>()
    });

    let mut det_match = vec![None; dets.len()];
    let mut gt_matched = vec![false; gts.len()];
    for ((_, dr), matches) in det_frames.iter().zip(per_frame) {
        for (di, m) in dr.clone().zip(matches) {
            det_match[di] = m;
            if let Some(g) = m {
                gt_matched[g] = true;
            }
        }
    }
    let det_is_tp = det_match.iter().map(Option::is_some).collect();
    MatchResult {
        det_match,
        det_is_tp,
        gt_matched,
    }
}

/// Bin label in reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinLabel {
    Bin(usize),
    Underflow,
    Overflow,
    All,
}

impl fmt::Display for BinLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BinLabel::Bin(i) => write!(f, "{i}"),
            BinLabel::Underflow => f.write_str("underflow"),
            BinLabel::Overflow => f.write_str("overflow"),
            BinLabel::All => f.write_str("all"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Counts {
    pub label: BinLabel,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Counts {
    fn new(label: BinLabel) -> Self {
        Counts {
            label,
            tp: 0,
            fp: 0,
            fn_: 0,
        }
    }

    pub fn precision(&self) -> Option<f64> {
        let denom = self.tp + self.fp;
        (denom > 0).then(|| self.tp as f64 / denom as f64)
    }

    pub fn recall(&self) -> Option<f64> {
        let denom = self.tp + self.fn_;
        (denom > 0).then(|| self.tp as f64 / denom as f64)
    }

    pub fn f1(&self) -> Option<f64> {
        let denom = 2 * self.tp + self.fp + self.fn_;
        (denom > 0).then(|| 2.0 * self.tp as f64 / denom as f64)
    }

    pub fn add(&mut self, other: &Counts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }
}

/// Per-bin and overall detection quality for one filtering method.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub method: String,
    pub params: String,
    /// One entry per bin, then underflow and overflow entries when nonzero.
    pub bins: Vec<Counts>,
    pub overall: Counts,
    pub average_precision: f64,
}

impl EvalReport {
    pub fn bin(&self, i: usize) -> &Counts {
        &self.bins[i]
    }

    /// Counts summed over bins `range`.
    pub fn sum_bins(&self, range: Range<usize>) -> Counts {
        let mut c = Counts::new(BinLabel::All);
        for i in range {
            c.add(&self.bins[i]);
        }
        c
    }

    fn rows(&self) -> impl Iterator<Item = &Counts> {
        self.bins.iter().chain(std::iter::once(&self.overall))
    }

    /// Rows in the `method,param,bin,precision,recall,fp,fn` schema, no header.
    pub fn csv_rows(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| fmt_sig(x, 9)).unwrap_or_default();
        let mut out = String::new();
        for c in self.rows() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                self.method,
                self.params,
                c.label,
                opt(c.precision()),
                opt(c.recall()),
                c.fp,
                c.fn_
            );
        }
        out
    }

    pub fn to_csv(&self) -> String {
        format!("{REPORT_CSV_HEADER}\n{}", self.csv_rows())
    }

    /// Aligned-column table for terminals.
    pub fn to_text(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
        let mut out = String::new();
        let _ = writeln!(out, "method: {}  params: {}", self.method, self.params);
        let _ = writeln!(
            out,
            "{:>10} {:>7} {:>7} {:>7} {:>9} {:>9} {:>9}",
            "bin", "tp", "fp", "fn", "precision", "recall", "f1"
        );
        for c in self.rows() {
            let _ = writeln!(
                out,
                "{:>10} {:>7} {:>7} {:>7} {:>9} {:>9} {:>9}",
                c.label.to_string(),
                c.tp,
                c.fp,
                c.fn_,
                opt(c.precision()),
                opt(c.recall()),
                opt(c.f1())
            );
        }
        let _ = writeln!(out, "AP: {:.4}", self.average_precision);
        out
    }
}

pub const REPORT_CSV_HEADER: &str = "method,param,bin,precision,recall,fp,fn";

/// Bins TP and FN by ground-truth range and FP by detection range.
pub fn per_bin_metrics(
    dets: &DetectionSet,
    gts: &GroundTruthSet,
    matched: &MatchResult,
    bins: &BinConfig,
) -> Vec<Counts> {
    // Slots 0..count are bins, then underflow, then overflow.
    let n = bins.count;
    let mut all: Vec<Counts> = (0..n).map(|i| Counts::new(BinLabel::Bin(i))).collect();
    all.push(Counts::new(BinLabel::Underflow));
    all.push(Counts::new(BinLabel::Overflow));
    let index = |slot: BinSlot| match slot {
        BinSlot::Bin(i) => i,
        BinSlot::Underflow => n,
        BinSlot::Overflow => n + 1,
    };
    for (d, m) in dets.iter().zip(&matched.det_match) {
        if m.is_none() {
            all[index(stats::slot_of(bins.metric.range(&d.bbox), bins))].fp += 1;
        }
    }
    for (g, &hit) in gts.iter().zip(&matched.gt_matched) {
        let c = &mut all[index(stats::slot_of(bins.metric.range(&g.bbox), bins))];
        if hit {
            c.tp += 1;
        } else {
            c.fn_ += 1;
        }
    }
    let extras = all.split_off(n);
    let mut per_bin = all;
    per_bin.extend(extras.into_iter().filter(|c| c.tp + c.fp + c.fn_ > 0));
    per_bin
}

/// (score, recall, precision) after each distinct score level, descending.
pub fn pr_curve(dets: &DetectionSet, gts: &GroundTruthSet, matched: &MatchResult) -> Vec<(f64, f64, f64)> {
    let total_gt = gts.len();
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets.records[b].score.total_cmp(&dets.records[a].score));
    let mut points = Vec::new();
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut k = 0;
    while k < order.len() {
        let level = dets.records[order[k]].score;
        while k < order.len() && dets.records[order[k]].score == level {
            if matched.det_is_tp[order[k]] {
                tp += 1;
            }
            seen += 1;
            k += 1;
        }
        let recall = if total_gt == 0 { 0.0 } else { tp as f64 / total_gt as f64 };
        points.push((level, recall, tp as f64 / seen as f64));
    }
    points
}

/// All-point interpolated AP from an already computed matching.
pub fn average_precision_from(dets: &DetectionSet, gts: &GroundTruthSet, matched: &MatchResult) -> f64 {
    let points = pr_curve(dets, gts, matched);
    let mut envelope: Vec<f64> = points.iter().map(|p| p.2).collect();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (p, env) in points.iter().zip(&envelope) {
        ap += (p.1 - prev_recall) * env;
        prev_recall = p.1;
    }
    ap.clamp(0.0, 1.0)
}

/// Average precision; 0 when there is no ground truth.
pub fn average_precision(dets: &DetectionSet, gts: &GroundTruthSet, cfg: &MatchConfig) -> f64 {
    average_precision_from(dets, gts, &match_sets(dets, gts, cfg))
}

pub fn pr_curve_csv(points: &[(f64, f64, f64)]) -> String {
    let mut out = String::from("score,recall,precision\n");
    for (s, r, p) in points {
        let _ = writeln!(out, "{},{},{}", fmt_sig(*s, 9), fmt_sig(*r, 9), fmt_sig(*p, 9));
    }
    out
}

/// Matches, bins and scores one filtered detection set.
pub fn evaluate(
    method: &str,
    params: &str,
    dets: &DetectionSet,
    gts: &GroundTruthSet,
    bins: &BinConfig,
    cfg: &MatchConfig,
    exec: Execution,
) -> EvalReport {
    let matched = match_sets_with(dets, gts, cfg, exec);
    let per_bin = per_bin_metrics(dets, gts, &matched, bins);
    let mut overall = Counts::new(BinLabel::All);
    for c in &per_bin {
        overall.add(c);
    }
    EvalReport {
        method: method.to_string(),
        params: params.to_string(),
        bins: per_bin,
        overall,
        average_precision: average_precision_from(dets, gts, &matched),
    }
}
