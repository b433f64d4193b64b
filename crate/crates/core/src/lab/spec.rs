//! Declarative run specifications, written in TOML.

use serde::{Deserialize, Serialize};

use super::dataset::{Factor, COMBINATIONS};
use super::net::Activation;
use super::LabError;
use crate::curves::Step;

/// Grayscale-reconstruction pretext with a linear hue probe.
pub const ILLPOSED_HUE: &str = include_str!("../../specs/illposed_hue.spec");
/// Autoencoding pretext with a linear shape probe.
pub const WELLPOSED_SHAPE: &str = include_str!("../../specs/wellposed_shape.spec");
/// Representation-size sweep of the ill-posed pair.
pub const SIZE_SWEEP: &str = include_str!("../../specs/size_sweep.spec");

/// Bundled specs by file name.
pub const BUNDLED: [(&str, &str); 3] = [
    ("illposed_hue.spec", ILLPOSED_HUE),
    ("wellposed_shape.spec", WELLPOSED_SHAPE),
    ("size_sweep.spec", SIZE_SWEEP),
];

pub fn bundled(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PretextTask {
    Autoencode,
    /// Reconstruct the clean image from a copy with additive Gaussian noise.
    Denoise,
    /// Reconstruct the per-pixel channel maximum from the color image.
    GrayscaleReconstruct,
    /// Predict which of four quarter turns was applied.
    Rotate4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    Linear,
    Mlp2,
    Mlp3,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Augmentations {
    /// Random cyclic channel shift, i.e. a hue rotation by a multiple of 120 degrees.
    #[serde(default)]
    pub color_jitter: bool,
    #[serde(default)]
    pub horizontal_flip: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    #[serde(default = "defaults::samples")]
    pub samples: usize,
    #[serde(default = "defaults::noise")]
    pub noise: f64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            samples: defaults::samples(),
            noise: defaults::noise(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretextSpec {
    pub task: PretextTask,
    pub representation_size: usize,
    #[serde(default = "defaults::hidden")]
    pub hidden_size: usize,
    #[serde(default = "defaults::activation")]
    pub activation: Activation,
    pub epochs: u64,
    /// Explicit snapshot epochs; mutually exclusive with `snapshot_every`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot_steps: Option<Vec<Step>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot_every: Option<u64>,
    #[serde(default = "defaults::batch")]
    pub batch_size: usize,
    #[serde(default = "defaults::pretext_lr")]
    pub learning_rate: f64,
    #[serde(default = "defaults::denoise_std")]
    pub denoise_std: f64,
    #[serde(default)]
    pub augmentations: Augmentations,
}

impl PretextSpec {
    /// Snapshot epochs in ascending order, always starting at 0.
    pub fn snapshots(&self) -> Vec<Step> {
        match (&self.snapshot_steps, self.snapshot_every) {
            (Some(steps), _) => steps.clone(),
            (None, Some(every)) => {
                let mut s: Vec<Step> = (0..=self.epochs).step_by(every.max(1) as usize).collect();
                if *s.last().unwrap() != self.epochs {
                    s.push(self.epochs);
                }
                s
            }
            (None, None) => (0..=self.epochs).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    #[serde(default = "defaults::head")]
    pub head: Head,
    pub factor: Factor,
    /// Upper bound on probe epochs; early stopping usually ends sooner.
    #[serde(default = "defaults::target_epochs")]
    pub epochs: u64,
    #[serde(default = "defaults::patience")]
    pub patience: usize,
    #[serde(default)]
    pub min_delta: f64,
    #[serde(default = "defaults::batch")]
    pub batch_size: usize,
    #[serde(default = "defaults::target_lr")]
    pub learning_rate: f64,
    #[serde(default = "defaults::hidden")]
    pub hidden_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSpec {
    #[serde(default = "defaults::patience")]
    pub patience: usize,
    #[serde(default)]
    pub min_delta: f64,
    #[serde(default = "defaults::target_metric")]
    pub target_metric: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pretext_metric: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub complement_base: Option<f64>,
}

impl Default for AnalysisSpec {
    fn default() -> Self {
        Self {
            patience: defaults::patience(),
            min_delta: 0.0,
            target_metric: defaults::target_metric(),
            pretext_metric: None,
            complement_base: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub representation_sizes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolRunSpec {
    pub name: String,
    pub seed: u64,
    #[serde(default = "defaults::folds")]
    pub folds: usize,
    #[serde(default)]
    pub dataset: DatasetSpec,
    pub pretext: PretextSpec,
    pub target: TargetSpec,
    #[serde(default)]
    pub analysis: AnalysisSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

mod defaults {
    use super::*;

    pub fn samples() -> usize {
        5 * COMBINATIONS
    }
    pub fn noise() -> f64 {
        0.1
    }
    pub fn hidden() -> usize {
        32
    }
    pub fn activation() -> Activation {
        Activation::Tanh
    }
    pub fn batch() -> usize {
        32
    }
    pub fn pretext_lr() -> f64 {
        1e-3
    }
    pub fn target_lr() -> f64 {
        1e-2
    }
    pub fn denoise_std() -> f64 {
        0.2
    }
    pub fn head() -> Head {
        Head::Linear
    }
    pub fn target_epochs() -> u64 {
        100
    }
    pub fn patience() -> usize {
        3
    }
    pub fn folds() -> usize {
        5
    }
    pub fn target_metric() -> String {
        "cross_entropy".into()
    }
}

fn check(ok: bool, message: impl FnOnce() -> String) -> Result<(), LabError> {
    if ok {
        Ok(())
    } else {
        Err(LabError::Config(message()))
    }
}

impl ProtocolRunSpec {
    pub fn from_toml(text: &str) -> Result<Self, LabError> {
        let spec: Self = toml::from_str(text).map_err(|e| LabError::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run specs always serialize")
    }

    pub fn validate(&self) -> Result<(), LabError> {
        let p = &self.pretext;
        let t = &self.target;
        check(self.folds >= 2, || format!("folds must be at least 2, got {}", self.folds))?;
        check(
            self.dataset.samples > 0 && self.dataset.samples.is_multiple_of(COMBINATIONS),
            || format!("dataset.samples must be a positive multiple of {COMBINATIONS}"),
        )?;
        check(self.dataset.samples >= self.folds, || "fewer samples than folds".into())?;
        check((0.0..=1.0).contains(&self.dataset.noise), || "dataset.noise must lie in [0, 1]".into())?;
        check(p.representation_size > 0, || "pretext.representation_size must be positive".into())?;
        check(p.hidden_size > 0 && t.hidden_size > 0, || "hidden sizes must be positive".into())?;
        check(p.epochs > 0, || "pretext.epochs must be positive".into())?;
        check(p.batch_size > 0 && t.batch_size > 0, || "batch sizes must be positive".into())?;
        check(
            p.learning_rate > 0.0 && t.learning_rate > 0.0,
            || "learning rates must be positive".into(),
        )?;
        check(p.denoise_std >= 0.0, || "pretext.denoise_std must be non-negative".into())?;
        check(
            !(p.snapshot_steps.is_some() && p.snapshot_every.is_some()),
            || "give either pretext.snapshot_steps or pretext.snapshot_every, not both".into(),
        )?;
        check(p.snapshot_every != Some(0), || "pretext.snapshot_every must be positive".into())?;
        let snaps = p.snapshots();
        check(
            snaps.first() == Some(&0),
            || "pretext snapshots must start at epoch 0, the untrained model that defines the OFM baseline".into(),
        )?;
        check(snaps.windows(2).all(|w| w[0] < w[1]), || "pretext.snapshot_steps must increase".into())?;
        check(
            *snaps.last().unwrap() <= p.epochs,
            || format!("snapshot {} lies beyond pretext.epochs = {}", snaps.last().unwrap(), p.epochs),
        )?;
        check(t.epochs > 0, || "target.epochs must be positive".into())?;
        check(t.patience >= 1 && self.analysis.patience >= 1, || "patience must be at least 1".into())?;
        check(
            t.min_delta >= 0.0 && self.analysis.min_delta >= 0.0,
            || "min_delta must be non-negative".into(),
        )?;
        if let Some(sweep) = &self.sweep {
            check(!sweep.representation_sizes.is_empty(), || "sweep needs at least one size".into())?;
            check(
                sweep.representation_sizes.iter().all(|&s| s > 0),
                || "sweep sizes must be positive".into(),
            )?;
        }
        Ok(())
    }
}
