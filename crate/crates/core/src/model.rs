//! The video-text dual encoder, or its unimodal classifier variant.

use ndarray::{Array2, Ix2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autograd::{Graph, Tensor, Var};
use crate::config::{FreezeConfig, ModelConfig};
use crate::data::LabelVocabulary;
use crate::error::{Error, Result};
use crate::nn::{Linear, Placement};
use crate::objective::{cosine_similarity, Temperature};
use crate::params::{Component, ParamGroupTag, ParamId, ParamScope, ParamStore};
use crate::text::{embed_prompted_labels, PromptMode, TextEncoder, TextPrompt, TokenSequence, Tokenizer};
use crate::train::checkpoint::{Checkpoint, CheckpointTensor};
use crate::vision::VideoEncoder;

#[derive(Clone, Debug)]
pub enum Head {
    /// Text encoder and temperature for video-text matching.
    Contrastive { text: TextEncoder, log_scale: ParamId },
    /// Linear layer from video embeddings to class logits.
    Classifier(Linear),
}

#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub tokenizer: Tokenizer,
    pub vision: VideoEncoder,
    pub head: Head,
}

/// Outcome of copying checkpoint tensors into a model.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub loaded: usize,
    /// Model parameters the checkpoint does not contain; they keep their
    /// initial values.
    pub missing: Vec<String>,
    /// Checkpoint tensors the model has no use for.
    pub unused: Vec<String>,
}

impl Model {
    /// Random initialisation. `num_classes` sizes the unimodal classifier
    /// and is ignored otherwise.
    pub fn new(config: &ModelConfig, tokenizer: Tokenizer, num_classes: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let d = config.embed_dim;
        let vision = VideoEncoder::new(&mut store, &config.vision, config.visual_prompt, d, &mut rng)?;
        let head = if config.unimodal {
            if num_classes == 0 {
                return Err(Error::InvalidArgument("classifier needs at least one class".into()));
            }
            let at = Placement::new(ParamGroupTag::New, Component::Classifier);
            Head::Classifier(Linear::new(&mut store, at, "classifier", d, num_classes, true, &mut rng))
        } else {
            let text = TextEncoder::new(&mut store, &config.text, tokenizer.len(), d, &mut rng);
            let log_scale = store.add(
                "log_scale",
                Tensor::from_elem(ndarray::IxDyn(&[1]), Temperature::default().log_scale),
                ParamGroupTag::New,
                Component::Temperature,
            );
            Head::Contrastive { text, log_scale }
        };
        Ok(Self {
            config: config.clone(),
            store,
            tokenizer,
            vision,
            head,
        })
    }

    /// Builds a model around a checkpoint's tokenizer and copies its
    /// tensors in. Tensors the checkpoint lacks keep their initial values.
    pub fn from_checkpoint(config: &ModelConfig, ckpt: &Checkpoint, num_classes: usize, seed: u64) -> Result<(Self, LoadReport)> {
        let tokenizer = if ckpt.tokens.is_empty() {
            return Err(Error::Checkpoint("checkpoint carries no tokenizer".into()));
        } else {
            Tokenizer::parse(&ckpt.tokens.join("\n")).map_err(|e| Error::Checkpoint(e.to_string()))?
        };
        let mut model = Self::new(config, tokenizer, num_classes, seed)?;
        let report = model.load_tensors(ckpt)?;
        Ok((model, report))
    }

    pub fn load_tensors(&mut self, ckpt: &Checkpoint) -> Result<LoadReport> {
        let mut report = LoadReport::default();
        for id in self.store.ids().collect::<Vec<_>>() {
            let param = self.store.get_mut(id);
            match ckpt.get(&param.name) {
                None => report.missing.push(param.name.clone()),
                Some(t) => {
                    if t.shape != param.value.shape() {
                        return Err(Error::Checkpoint(format!(
                            "shape mismatch for {}: checkpoint {:?}, model {:?}",
                            param.name,
                            t.shape,
                            param.value.shape()
                        )));
                    }
                    for (dst, &src) in param.value.iter_mut().zip(&t.values) {
                        *dst = f64::from(src);
                    }
                    report.loaded += 1;
                }
            }
        }
        report.unused = ckpt
            .tensors
            .iter()
            .filter(|t| self.store.lookup(&t.name).is_none())
            .map(|t| t.name.clone())
            .collect();
        Ok(report)
    }

    pub fn to_checkpoint(&self, step: u64, config_hash: &str) -> Checkpoint {
        let tokens = self.tokenizer.to_text().lines().map(str::to_string).collect();
        let tensors = self
            .store
            .iter()
            .map(|p| CheckpointTensor {
                name: p.name.clone(),
                shape: p.value.shape().to_vec(),
                tag: p.tag,
                values: p.value.iter().map(|&v| v as f32).collect(),
            })
            .collect();
        Checkpoint {
            step,
            config_hash: config_hash.to_string(),
            tokens,
            tensors,
        }
    }

    pub fn is_unimodal(&self) -> bool {
        matches!(self.head, Head::Classifier(_))
    }

    pub fn temperature(&self) -> Option<Temperature> {
        match &self.head {
            Head::Contrastive { log_scale, .. } => Some(Temperature::new(self.store.get(*log_scale).value[[0]])),
            Head::Classifier(_) => None,
        }
    }

    pub fn text_encoder(&self) -> Option<&TextEncoder> {
        match &self.head {
            Head::Contrastive { text, .. } => Some(text),
            Head::Classifier(_) => None,
        }
    }

    /// Freezes the chosen encoders. With both frozen every pretrained
    /// tensor is fixed, including a temperature loaded from a checkpoint.
    pub fn freeze(&mut self, which: FreezeConfig) {
        if which.text && which.vision {
            for p in self.store.iter_mut().filter(|p| p.tag == ParamGroupTag::Pretrained) {
                p.frozen = true;
            }
        }
        if which.text {
            self.store.freeze_component(Component::TextEncoder);
        }
        if which.vision {
            self.store.freeze_component(Component::VisionEncoder);
        }
    }

    pub fn video_forward<'g>(&self, scope: &ParamScope<'g, '_>, clips: &Tensor) -> Result<Var<'g>> {
        self.vision.forward(scope, clips)
    }

    pub fn encode_video_batch(&self, clips: &Tensor) -> Result<Array2<f64>> {
        self.vision.encode(&self.store, clips)
    }

    pub fn tokenize(&self, texts: &[String]) -> Vec<TokenSequence> {
        let len = self.config.text.context_len;
        texts.iter().map(|t| self.tokenizer.tokenize(t, len)).collect()
    }

    /// One embedding per label: the normalised mean over all prompts of
    /// that label.
    pub fn label_embeddings(&self, vocab: &LabelVocabulary, prompt: &TextPrompt) -> Result<Array2<f64>> {
        let text = self
            .text_encoder()
            .ok_or_else(|| Error::InvalidArgument("unimodal model has no text encoder".into()))?;
        embed_prompted_labels(text, &self.store, &self.tokenizer, vocab, prompt, PromptMode::Ensemble)
    }

    /// Scores of every clip against every class: cosine similarities with
    /// `labels` for the dual encoder, classifier logits otherwise.
    pub fn scores(&self, clips: &Tensor, labels: Option<&Array2<f64>>) -> Result<Array2<f64>> {
        match &self.head {
            Head::Contrastive { .. } => {
                let labels = labels.ok_or_else(|| Error::InvalidArgument("label embeddings required".into()))?;
                let video = self.encode_video_batch(clips)?;
                Ok(cosine_similarity(video.view(), labels.view())?.0)
            }
            Head::Classifier(linear) => {
                let graph = Graph::new();
                let scope = ParamScope::new(&graph, &self.store);
                let logits = linear.forward(&scope, self.vision.forward(&scope, clips)?);
                let value = logits.value().clone();
                Ok(value.into_dimensionality::<Ix2>().expect("logits are 2-d"))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vision::VisualPromptKind;

    fn small() -> ModelConfig {
        ModelConfig {
            embed_dim: 8,
            text: crate::text::TextConfig {
                context_len: 8,
                width: 16,
                layers: 1,
                heads: 2,
            },
            vision: crate::vision::VisionConfig {
                image_size: 16,
                width: 16,
                layers: 1,
                heads: 2,
                frames: 2,
                temporal_layers: 1,
                temporal_heads: 2,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    fn tokenizer() -> Tokenizer {
        Tokenizer::build(["move left", "grow up"])
    }

    #[test]
    fn checkpoint_restores_every_tensor() {
        let a = Model::new(&small(), tokenizer(), 0, 1).unwrap();
        let ckpt = a.to_checkpoint(3, "h");
        let (b, report) = Model::from_checkpoint(&small(), &ckpt, 0, 2).unwrap();
        assert_eq!(report.loaded, a.store.len());
        assert!(report.missing.is_empty() && report.unused.is_empty());
        for (p, q) in a.store.iter().zip(b.store.iter()) {
            assert_eq!(p.value, q.value, "{}", p.name);
        }
        assert_eq!(b.to_checkpoint(3, "h").to_bytes(), ckpt.to_bytes());
    }

    #[test]
    fn other_width_is_a_shape_error() {
        let ckpt = Model::new(&small(), tokenizer(), 0, 1).unwrap().to_checkpoint(0, "h");
        let mut wider = small();
        wider.embed_dim = 4;
        assert!(matches!(Model::from_checkpoint(&wider, &ckpt, 0, 1), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn other_head_keeps_initial_values() {
        let ckpt = Model::new(&small(), tokenizer(), 0, 1).unwrap().to_checkpoint(0, "h");
        let mut cfg = small();
        cfg.visual_prompt = VisualPromptKind::Lstm;
        let (_, report) = Model::from_checkpoint(&cfg, &ckpt, 0, 1).unwrap();
        assert!(report.missing.iter().all(|n| n.starts_with("temporal.")));
        assert!(!report.missing.is_empty() && !report.unused.is_empty());
    }

    #[test]
    fn unimodal_head_has_one_output_per_class() {
        let mut cfg = small();
        cfg.unimodal = true;
        let m = Model::new(&cfg, tokenizer(), 5, 0).unwrap();
        let Head::Classifier(linear) = &m.head else { panic!("expected classifier") };
        assert_eq!(m.store.get(linear.weight).value.shape(), &[8, 5]);
        assert!(m.text_encoder().is_none());
        let clips = Tensor::zeros(ndarray::IxDyn(&[3, 2, 16, 16, 3]));
        assert_eq!(m.scores(&clips, None).unwrap().dim(), (3, 5));
    }
}
