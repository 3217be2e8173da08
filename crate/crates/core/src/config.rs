//! Experiment configuration, read from and echoed to TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::text::{default_templates, parse_templates, TextConfig, TextPrompt};
use crate::vision::{SpatialConfig, VisionConfig, VisualPromptKind};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub prompt: PromptConfig,
    pub input: SpatialConfig,
    pub optimizer: OptimizerConfig,
    pub freeze: FreezeConfig,
    pub eval: ViewSet,
    pub paths: PathsConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Joint embedding width d (512 at full size).
    pub embed_dim: usize,
    pub visual_prompt: VisualPromptKind,
    /// Replace the text branch with a linear classifier over video features.
    pub unimodal: bool,
    pub text: TextConfig,
    pub vision: VisionConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            embed_dim: 32,
            visual_prompt: VisualPromptKind::Transf,
            unimodal: false,
            text: TextConfig::default(),
            vision: VisionConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PromptConfig {
    /// Wrap labels in templates; `false` feeds the bare label text.
    pub text_prompt: bool,
    /// Template file (`kind<TAB>pattern` lines); the built-in set if unset.
    pub templates: Option<PathBuf>,
}

impl PromptConfig {
    /// Template list in force: the configured file, the built-in set, or
    /// bare labels when prompting is off.
    pub fn text_prompt(&self) -> Result<TextPrompt> {
        if !self.text_prompt {
            return Ok(TextPrompt::LabelOnly);
        }
        let templates = match &self.templates {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                parse_templates(&text)?
            }
            None => default_templates(),
        };
        if templates.is_empty() {
            return Err(Error::Config("template file holds no templates".into()));
        }
        Ok(TextPrompt::Templates(templates))
    }
}

impl Default for PromptConfig {
    fn default() -> Self {
        Self {
            text_prompt: true,
            templates: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub base_lr_pretrained: f64,
    pub base_lr_new: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub warmup_fraction: f64,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            base_lr_pretrained: 5e-6,
            base_lr_new: 5e-5,
            weight_decay: 0.2,
            epochs: 50,
            warmup_fraction: 0.1,
            batch_size: 32,
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-8,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FreezeConfig {
    pub text: bool,
    pub vision: bool,
}

/// Views averaged at evaluation time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ViewSet {
    pub spatial_crops: usize,
    pub temporal_clips: usize,
    /// Frame stride inside one temporal clip; a clip spans `frames · stride`.
    pub stride: usize,
}

impl Default for ViewSet {
    fn default() -> Self {
        Self {
            spatial_crops: 3,
            temporal_clips: 10,
            stride: 1,
        }
    }
}

impl ViewSet {
    pub fn single() -> Self {
        Self {
            spatial_crops: 1,
            temporal_clips: 1,
            stride: 1,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    /// Dataset directory or manifest file.
    pub data: Option<PathBuf>,
    /// Checkpoint to initialise from; random initialisation if unset.
    pub init: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Settings that train the synthetic benchmark from random
    /// initialisation in a few minutes on one CPU core.
    pub fn desk() -> Self {
        let mut cfg = Self::default();
        cfg.optimizer.base_lr_pretrained = 1e-3;
        cfg.optimizer.base_lr_new = 1e-3;
        cfg.optimizer.weight_decay = 0.01;
        cfg.optimizer.epochs = 20;
        cfg.optimizer.batch_size = 8;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        let o = &self.optimizer;
        let bad = |m: String| Err(Error::Config(m));
        if !(o.base_lr_pretrained > 0.0 && o.base_lr_new > 0.0) {
            return bad("learning rates must be positive".into());
        }
        if !(0.0..1.0).contains(&o.warmup_fraction) {
            return bad(format!("warmup_fraction {} outside [0, 1)", o.warmup_fraction));
        }
        if o.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(0.0..1.0).contains(&o.beta1) || !(0.0..1.0).contains(&o.beta2) || o.eps <= 0.0 || o.weight_decay < 0.0 {
            return bad("invalid optimizer moments, eps or weight decay".into());
        }
        if self.input.crop != self.model.vision.image_size {
            return bad(format!(
                "input crop {} differs from vision image_size {}",
                self.input.crop, self.model.vision.image_size
            ));
        }
        if self.input.resize < self.input.crop {
            return bad("input resize must be at least the crop size".into());
        }
        let v = &self.eval;
        if v.spatial_crops == 0 || v.temporal_clips == 0 || v.stride == 0 {
            return bad("view counts and stride must be at least 1".into());
        }
        let m = &self.model;
        if m.embed_dim == 0 || m.text.context_len < 2 {
            return bad("embed_dim must be positive and context_len at least 2".into());
        }
        for (what, width, heads) in [
            ("text", m.text.width, m.text.heads),
            ("vision", m.vision.width, m.vision.heads),
            ("temporal", m.embed_dim, m.vision.temporal_heads),
        ] {
            if heads == 0 || width % heads != 0 {
                return bad(format!("{what} width {width} not divisible by {heads} heads"));
            }
        }
        if m.vision.conv_kernel.is_multiple_of(2) {
            return bad("conv_kernel must be odd".into());
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// SHA-256 of the model section, hex encoded. Checkpoints record it so
    /// that loading into a differently configured model can be flagged.
    pub fn model_hash(&self) -> String {
        let text = toml::to_string(&self.model).expect("config serialises");
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// A model small enough for unit tests: 16×16 inputs, 2 frames, width 16.
#[cfg(test)]
pub(crate) fn tiny() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::desk();
    cfg.input = SpatialConfig { resize: 16, crop: 16 };
    cfg.model.embed_dim = 8;
    cfg.model.text = TextConfig {
        context_len: 8,
        width: 16,
        layers: 1,
        heads: 2,
    };
    cfg.model.vision = VisionConfig {
        image_size: 16,
        patch: 8,
        width: 16,
        layers: 1,
        heads: 2,
        frames: 2,
        temporal_layers: 1,
        temporal_heads: 2,
        conv_kernel: 3,
    };
    cfg.optimizer.batch_size = 4;
    cfg.optimizer.epochs = 1;
    cfg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn echo_round_trips() {
        let mut cfg = ExperimentConfig::desk();
        cfg.paths.data = Some("data/synth".into());
        cfg.model.visual_prompt = VisualPromptKind::TransfCls;
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_documents_use_defaults() {
        let cfg = ExperimentConfig::from_toml("[optimizer]\nepochs = 3\n[model]\nvisual_prompt = \"shift\"\n").unwrap();
        assert_eq!(cfg.optimizer.epochs, 3);
        assert_eq!(cfg.optimizer.base_lr_new, 5e-5);
        assert_eq!(cfg.model.visual_prompt, VisualPromptKind::Shift);
    }

    #[test]
    fn unknown_keys_rejected() {
        for doc in ["bogus = 1", "[optimizer]\nlr = 1.0", "[model.vision]\nwidht = 3"] {
            assert!(matches!(ExperimentConfig::from_toml(doc), Err(Error::Config(_))), "{doc}");
        }
    }

    #[test]
    fn invalid_values_rejected() {
        for doc in [
            "[optimizer]\nwarmup_fraction = 1.0",
            "[optimizer]\nbase_lr_new = 0.0",
            "[input]\ncrop = 16\nresize = 16",
            "[model.vision]\nheads = 5",
        ] {
            assert!(ExperimentConfig::from_toml(doc).is_err(), "{doc}");
        }
    }

    #[test]
    fn model_hash_tracks_the_model_section_only() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.optimizer.epochs = 1;
        assert_eq!(a.model_hash(), b.model_hash());
        b.model.embed_dim = 16;
        assert_ne!(a.model_hash(), b.model_hash());
    }
}
