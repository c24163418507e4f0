//! Seeded synthetic scenes: ground truth at controlled ranges, detections
//! whose confidence decays with range, range-dependent misses, and
//! low-confidence clutter standing in for weather and vegetation returns.
//!
//! Random stream order per frame:
//!
//! 1. object count, one integer draw;
//! 2. per object: range and azimuth (redrawn while closer than
//!    `min_separation` to an earlier object, at most 100 tries), then yaw;
//! 3. per object, in order: detection coin; when detected, x and y jitter,
//!    yaw jitter, score noise;
//! 4. clutter count (Poisson), then per clutter box: range, azimuth, yaw,
//!    score (Beta, variable number of words).

use std::f64::consts::PI;

use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::detection::{normalize_yaw, Box3D, Detection, DetectionSet, GroundTruthObject, GroundTruthSet};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::text::quantize9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub seed: u64,
    pub frames: usize,
    pub objects_min: usize,
    pub objects_max: usize,
    pub r_min: f64,
    pub r_max: f64,
    /// Mean score c0 + c1·d + c2·d², clamped to [0, 1].
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub score_noise: f64,
    /// Detection probability clamp(1 − d / det_range_scale, det_floor, 1).
    pub det_range_scale: f64,
    pub det_floor: f64,
    pub jitter: f64,
    pub yaw_jitter: f64,
    pub clutter_rate: f64,
    pub clutter_score_mean: f64,
    pub clutter_score_std: f64,
    pub min_separation: f64,
    pub class_label: String,
    pub size: [f64; 3],
    pub z: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            seed: 0,
            frames: 100,
            objects_min: 2,
            objects_max: 6,
            r_min: 2.0,
            r_max: 90.0,
            c0: 0.92,
            c1: -0.007,
            c2: 0.0,
            score_noise: 0.06,
            det_range_scale: 120.0,
            det_floor: 0.2,
            jitter: 0.15,
            yaw_jitter: 0.02,
            clutter_rate: 3.0,
            clutter_score_mean: 0.25,
            clutter_score_std: 0.12,
            min_separation: 6.0,
            class_label: "car".into(),
            size: [4.2, 1.8, 1.5],
            z: -0.9,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("scene: {msg}")));
        if !(self.r_min >= 0.0 && self.r_min < self.r_max && self.r_max.is_finite()) {
            return bad(format!("need 0 <= r_min < r_max, got {} and {}", self.r_min, self.r_max));
        }
        if self.objects_min > self.objects_max {
            return bad("objects_min > objects_max".into());
        }
        for (name, v) in [
            ("score_noise", self.score_noise),
            ("jitter", self.jitter),
            ("yaw_jitter", self.yaw_jitter),
            ("clutter_rate", self.clutter_rate),
            ("min_separation", self.min_separation),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be finite and >= 0"));
            }
        }
        if !(self.det_range_scale > 0.0) || !(0.0..=1.0).contains(&self.det_floor) {
            return bad("det_range_scale must be > 0 and det_floor in [0, 1]".into());
        }
        let m = self.clutter_score_mean;
        let s = self.clutter_score_std;
        if !(m > 0.0 && m < 1.0 && s > 0.0 && s * s < m * (1.0 - m)) {
            return bad("clutter score mean/std do not define a Beta distribution".into());
        }
        if self.class_label.is_empty() || self.class_label.contains(',') {
            return bad("class_label must be non-empty without commas".into());
        }
        if self.size.iter().any(|v| !(*v > 0.0)) {
            return bad("size extents must be > 0".into());
        }
        Ok(())
    }

    pub fn mean_score(&self, d: f64) -> f64 {
        (self.c0 + self.c1 * d + self.c2 * d * d).clamp(0.0, 1.0)
    }

    pub fn detection_probability(&self, d: f64) -> f64 {
        (1.0 - d / self.det_range_scale).clamp(self.det_floor, 1.0)
    }

    /// Beta shape parameters with the configured clutter mean and deviation.
    pub fn clutter_beta(&self) -> (f64, f64) {
        let m = self.clutter_score_mean;
        let v = self.clutter_score_std.powi(2);
        let common = m * (1.0 - m) / v - 1.0;
        (m * common, (1.0 - m) * common)
    }

    /// Expected clutter fraction among all detections.
    pub fn expected_clutter_fraction(&self) -> f64 {
        // Mean detection probability over uniform range, by midpoint quadrature.
        let steps = 10_000;
        let h = (self.r_max - self.r_min) / steps as f64;
        let mean_pdet = (0..steps)
            .map(|i| self.detection_probability(self.r_min + (i as f64 + 0.5) * h))
            .sum::<f64>()
            / steps as f64;
        let objects = (self.objects_min + self.objects_max) as f64 / 2.0;
        let true_rate = objects * mean_pdet;
        self.clutter_rate / (self.clutter_rate + true_rate)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scene config serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum WeatherPreset {
    Clear,
    Fog,
    Rain,
}

impl std::str::FromStr for WeatherPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clear" => Ok(WeatherPreset::Clear),
            "fog" => Ok(WeatherPreset::Fog),
            "rain" => Ok(WeatherPreset::Rain),
            other => Err(Error::UnknownPreset(other.to_string())),
        }
    }
}

/// Parameter changes a preset makes to a scene.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneOverrides {
    pub clutter_rate: f64,
    pub score_noise: f64,
}

impl SceneOverrides {
    pub fn apply(&self, cfg: &mut SceneConfig) {
        cfg.clutter_rate = self.clutter_rate;
        cfg.score_noise = self.score_noise;
    }
}

pub fn weather_preset(name: &str) -> Result<SceneOverrides> {
    Ok(preset_overrides(name.parse()?))
}

pub fn preset_overrides(preset: WeatherPreset) -> SceneOverrides {
    match preset {
        WeatherPreset::Clear => SceneOverrides {
            clutter_rate: 3.0,
            score_noise: 0.06,
        },
        WeatherPreset::Fog => SceneOverrides {
            clutter_rate: 8.0,
            score_noise: 0.10,
        },
        WeatherPreset::Rain => SceneOverrides {
            clutter_rate: 6.0,
            score_noise: 0.08,
        },
    }
}

/// Generated scene plus which detections are clutter.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub ground_truth: GroundTruthSet,
    pub detections: DetectionSet,
    /// Parallel to `detections.records`.
    pub is_clutter: Vec<bool>,
}

fn place(cfg: &SceneConfig, r: f64, theta: f64, yaw: f64) -> Box3D {
    let [dx, dy, dz] = cfg.size;
    Box3D {
        x: quantize9(r * theta.cos()),
        y: quantize9(r * theta.sin()),
        z: quantize9(cfg.z),
        dx: quantize9(dx),
        dy: quantize9(dy),
        dz: quantize9(dz),
        yaw: quantize_yaw(yaw),
    }
}

/// Wrapped and quantized yaw that stays inside (-pi, pi] after rounding.
fn quantize_yaw(yaw: f64) -> f64 {
    let q = quantize9(normalize_yaw(yaw));
    if q > PI || q <= -PI {
        quantize9(PI).min(PI)
    } else {
        q
    }
}

pub fn generate(cfg: &SceneConfig) -> Result<Scene> {
    cfg.validate()?;
    let mut rng = Rng::new(cfg.seed);
    let (ba, bb) = cfg.clutter_beta();
    let beta = Beta::new(ba, bb).map_err(|e| Error::Config(format!("clutter beta: {e}")))?;

    let mut gts = Vec::new();
    let mut dets = Vec::new();
    let mut is_clutter = Vec::new();

    for frame in 0..cfg.frames as u64 {
        let count = rng.int_in(cfg.objects_min as u64, cfg.objects_max as u64);
        let mut placed: Vec<(f64, f64, f64)> = Vec::new();
        for _ in 0..count {
            let mut spot = None;
            for _ in 0..100 {
                let r = rng.uniform_in(cfg.r_min, cfg.r_max);
                let theta = rng.uniform_in(-PI, PI);
                let (x, y) = (r * theta.cos(), r * theta.sin());
                let clear = placed
                    .iter()
                    .all(|&(px, py, _)| (px - x).hypot(py - y) >= cfg.min_separation);
                if clear {
                    spot = Some((r, theta));
                    break;
                }
            }
            let yaw = rng.uniform_in(-PI, PI);
            if let Some((r, theta)) = spot {
                placed.push((r * theta.cos(), r * theta.sin(), yaw));
                gts.push(GroundTruthObject {
                    frame_id: frame,
                    class_label: cfg.class_label.clone(),
                    bbox: place(cfg, r, theta, yaw),
                });
            }
        }

        let frame_gts = &gts[gts.len() - placed.len()..];
        let mut frame_dets = Vec::new();
        for g in frame_gts {
            let d = g.bbox.x.hypot(g.bbox.y);
            if !rng.bernoulli(cfg.detection_probability(d)) {
                continue;
            }
            let jx = rng.normal(0.0, cfg.jitter);
            let jy = rng.normal(0.0, cfg.jitter);
            let jyaw = rng.normal(0.0, cfg.yaw_jitter);
            let noise = rng.normal(0.0, cfg.score_noise);
            let mut bbox = g.bbox;
            bbox.x = quantize9(bbox.x + jx);
            bbox.y = quantize9(bbox.y + jy);
            bbox.yaw = quantize_yaw(bbox.yaw + jyaw);
            frame_dets.push(Detection {
                frame_id: frame,
                class_label: cfg.class_label.clone(),
                bbox,
                score: quantize9((cfg.mean_score(d) + noise).clamp(0.0, 1.0)),
            });
        }
        let true_count = frame_dets.len();

        let clutter = rng.poisson(cfg.clutter_rate);
        for _ in 0..clutter {
            let r = rng.uniform_in(cfg.r_min, cfg.r_max);
            let theta = rng.uniform_in(-PI, PI);
            let yaw = rng.uniform_in(-PI, PI);
            let score: f64 = beta.sample(rng.engine());
            frame_dets.push(Detection {
                frame_id: frame,
                class_label: cfg.class_label.clone(),
                bbox: place(cfg, r, theta, yaw),
                score: quantize9(score.clamp(0.0, 1.0)),
            });
        }
        is_clutter.extend((0..frame_dets.len()).map(|i| i >= true_count));
        dets.extend(frame_dets);
    }

    Ok(Scene {
        ground_truth: GroundTruthSet::new(gts, format!("synthetic seed {}", cfg.seed)),
        detections: DetectionSet::new(dets, format!("synthetic seed {}", cfg.seed)),
        is_clutter,
    })
}

/// Ground truth and detections for `cfg`.
pub fn generate_scene(cfg: &SceneConfig) -> Result<(GroundTruthSet, DetectionSet)> {
    let s = generate(cfg)?;
    Ok((s.ground_truth, s.detections))
}
