//! Run configuration file.
//!
//! A TOML document with one table per module. Every key is optional and
//! unknown keys are rejected. Command-line flags override file values after
//! the weather preset (if any) has been applied to `[scene]`.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use crate::baseline::BaselineConfig;
use crate::error::{Error, Result};
use crate::eval::MatchConfig;
use crate::nn::{DistillConfig, TrainConfig};
use crate::stats::BinConfig;
use crate::synth::{preset_overrides, SceneConfig, WeatherPreset};
use crate::threshold::CalibrationConfig;

/// Where calibration and training targets come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum TargetPolicy {
    /// clamp(beta·mean − alpha·std) per bin; for training, dense samples of the fitted curve.
    #[default]
    Calibrated,
    /// Per-bin F1-optimal threshold against ground truth (needs --gt).
    F1Optimal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    /// Frame-parallel evaluation; off for bit-reproducible runs by default.
    pub parallel: bool,
    /// Weather preset applied on top of `[scene]`.
    pub preset: Option<WeatherPreset>,
    pub target_policy: TargetPolicy,
    pub bins: BinConfig,
    pub calibration: CalibrationConfig,
    pub baselines: BaselineConfig,
    pub matching: MatchConfig,
    pub scene: SceneConfig,
    pub train: TrainConfig,
    pub distill: DistillConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            output_dir: PathBuf::from("out"),
            parallel: false,
            preset: None,
            target_policy: TargetPolicy::Calibrated,
            bins: BinConfig::default(),
            calibration: CalibrationConfig::default(),
            baselines: BaselineConfig::default(),
            matching: MatchConfig::default(),
            scene: SceneConfig::default(),
            train: TrainConfig::default(),
            distill: DistillConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string() + &span_note(text, e.span())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.bins.validate()?;
        self.calibration.validate()?;
        self.baselines.validate()?;
        self.matching.validate()?;
        self.scene.validate()?;
        self.train.validate()?;
        self.distill.validate()?;
        if self.train.layer_sizes[0] != crate::nn::FEATURES {
            return Err(Error::Config(format!(
                "train.layer_sizes must start with {} inputs",
                crate::nn::FEATURES
            )));
        }
        Ok(())
    }

    /// Scene settings with the preset folded in.
    pub fn effective_scene(&self) -> SceneConfig {
        let mut scene = self.scene.clone();
        if let Some(p) = self.preset {
            preset_overrides(p).apply(&mut scene);
        }
        scene
    }
}

fn span_note(text: &str, span: Option<std::ops::Range<usize>>) -> String {
    match span {
        Some(s) => {
            let line = text[..s.start.min(text.len())].matches('\n').count() + 1;
            format!(" (line {line})")
        }
        None => String::new(),
    }
}
