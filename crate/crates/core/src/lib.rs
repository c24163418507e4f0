//! Distance-adaptive confidence thresholding for LiDAR 3D detections.
//!
//! The pipeline bins detections by range, summarizes score distributions per
//! bin, fits a quadratic threshold curve over range, and filters detections
//! against it. Baseline thresholding methods, a small MLP approximation of the
//! curve, an evaluation harness and a synthetic scene generator live alongside.

// Validation uses `!(x > 0.0)` on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline;
pub mod cli;
pub mod config;
pub mod detection;
pub mod error;
pub mod eval;
pub mod filter;
pub mod nn;
pub mod par;
pub mod rng;
pub mod stats;
pub mod synth;
pub mod text;
pub mod threshold;

pub use detection::{Box3D, Detection, DetectionSet, GroundTruthObject, GroundTruthSet, RangeMetric};
pub use error::{Error, Result};
pub use filter::ThresholdFilter;
pub use par::Execution;
pub use stats::{BinConfig, BinStats};
pub use threshold::{RuleParams, ThresholdCurve};
