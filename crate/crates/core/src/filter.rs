//! Score-threshold filters over detection sets.
//!
//! Every post-processing method in the toolkit reduces to a per-detection
//! threshold that depends on where the detection is, never on its score, so
//! a detection survives iff `score > threshold_for(detection)`. Idempotence
//! and score monotonicity follow from that shape.

use crate::detection::{Detection, DetectionSet};
use crate::par::{self, Execution};

pub trait ThresholdFilter: Sync {
    /// Score threshold applied to `det`; must not depend on `det.score`.
    fn threshold_for(&self, det: &Detection) -> f64;

    fn keeps(&self, det: &Detection) -> bool {
        det.score > self.threshold_for(det)
    }

    /// Kept detections in input order.
    fn apply(&self, set: &DetectionSet) -> DetectionSet {
        self.apply_with(set, Execution::Sequential)
    }

    fn apply_with(&self, set: &DetectionSet, exec: Execution) -> DetectionSet {
        set.with_records(par::filter_cloned(&set.records, exec, |d| self.keeps(d)))
    }
}

/// A single constant threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StaticThreshold(pub f64);

impl ThresholdFilter for StaticThreshold {
    fn threshold_for(&self, _det: &Detection) -> f64 {
        self.0
    }
}

impl<F: ThresholdFilter + ?Sized> ThresholdFilter for &F {
    fn threshold_for(&self, det: &Detection) -> f64 {
        (**self).threshold_for(det)
    }
}

impl<F: ThresholdFilter + ?Sized> ThresholdFilter for Box<F> {
    fn threshold_for(&self, det: &Detection) -> f64 {
        (**self).threshold_for(det)
    }
}
