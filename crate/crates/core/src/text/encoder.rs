//! Causal transformer text encoder; the feature of a sequence is the final
//! activation at its EOS token, projected into the joint space.

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::template::PromptTemplate;
use super::tokenizer::{TokenSequence, Tokenizer};
use crate::autograd::{Graph, Var};
use crate::data::LabelVocabulary;
use crate::error::{Error, Result};
use crate::nn::{LayerNorm, Placement, Transformer};
use crate::params::{normal, Component, ParamGroupTag, ParamId, ParamScope, ParamStore};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TextConfig {
    /// Padded sequence length (77 for the full-size encoder).
    pub context_len: usize,
    /// Transformer width (512 at full size).
    pub width: usize,
    /// Number of blocks (12 at full size).
    pub layers: usize,
    /// Attention heads (8 at full size).
    pub heads: usize,
}

impl Default for TextConfig {
    fn default() -> Self {
        Self {
            context_len: 16,
            width: 64,
            layers: 2,
            heads: 4,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TextEncoder {
    pub token_embedding: ParamId,
    pub positional: ParamId,
    pub transformer: Transformer,
    pub ln_final: LayerNorm,
    pub projection: ParamId,
    context_len: usize,
    width: usize,
}

impl TextEncoder {
    pub fn new(
        store: &mut ParamStore,
        cfg: &TextConfig,
        vocab_size: usize,
        embed_dim: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let at = Placement::new(ParamGroupTag::Pretrained, Component::TextEncoder);
        let w = cfg.width;
        Self {
            token_embedding: at.add(store, "text.token_embedding".into(), normal(&[vocab_size, w], 0.02, rng)),
            positional: at.add(store, "text.positional".into(), normal(&[cfg.context_len, w], 0.01, rng)),
            transformer: Transformer::new(store, at, "text.blocks", w, cfg.layers, cfg.heads, false, rng),
            ln_final: LayerNorm::new(store, at, "text.ln_final", w),
            projection: at.add(store, "text.projection".into(), normal(&[w, embed_dim], (w as f64).powf(-0.5), rng)),
            context_len: cfg.context_len,
            width: w,
        }
    }

    pub fn context_len(&self) -> usize {
        self.context_len
    }

    /// `[N, d]` unnormalised text features.
    pub fn forward<'g>(&self, scope: &ParamScope<'g, '_>, tokens: &[TokenSequence]) -> Result<Var<'g>> {
        if tokens.is_empty() {
            return Err(Error::Shape("empty token batch".into()));
        }
        let vocab = scope.store().get(self.token_embedding).value.shape()[0];
        let mut flat = Vec::with_capacity(tokens.len() * self.context_len);
        let mut eos = Vec::with_capacity(tokens.len());
        for (i, seq) in tokens.iter().enumerate() {
            if seq.ids.len() != self.context_len {
                return Err(Error::Shape(format!(
                    "sequence {i} has length {}, encoder expects {}",
                    seq.ids.len(),
                    self.context_len
                )));
            }
            if seq.eos_position >= self.context_len {
                return Err(Error::Shape(format!(
                    "sequence {i}: EOS position {} outside context of {}",
                    seq.eos_position, self.context_len
                )));
            }
            if let Some(&bad) = seq.ids.iter().find(|&&id| id >= vocab) {
                return Err(Error::Shape(format!("sequence {i}: token id {bad} >= vocabulary {vocab}")));
            }
            flat.extend_from_slice(&seq.ids);
            eos.push(seq.eos_position);
        }
        let x = scope
            .param(self.token_embedding)
            .gather_rows(&flat)
            .reshape(&[tokens.len(), self.context_len, self.width])
            .add(scope.param(self.positional));
        let x = self.transformer.forward(scope, x, true);
        let x = self.ln_final.forward(scope, x.gather_positions(&eos));
        Ok(x.matmul(scope.param(self.projection)))
    }

    /// Gradient-free forward pass.
    pub fn encode(&self, store: &ParamStore, tokens: &[TokenSequence]) -> Result<Array2<f64>> {
        let graph = Graph::new();
        let scope = ParamScope::new(&graph, store);
        let out = self.forward(&scope, tokens)?;
        let value = out.value().clone();
        Ok(value.into_dimensionality().expect("text features are 2-d"))
    }
}

/// How label strings become encoder input.
#[derive(Clone, Debug, PartialEq)]
pub enum TextPrompt {
    /// The bare label.
    LabelOnly,
    Templates(Vec<PromptTemplate>),
}

impl TextPrompt {
    /// Every string the prompt can produce for `label`.
    pub fn texts(&self, label: &str) -> Vec<String> {
        match self {
            TextPrompt::LabelOnly => vec![label.to_string()],
            TextPrompt::Templates(t) => t.iter().map(|t| t.fill(label)).collect(),
        }
    }

    /// One string per label, each drawn uniformly from that label's options.
    pub fn sample(&self, labels: &[&str], rng: &mut impl Rng) -> Vec<String> {
        labels
            .iter()
            .map(|label| match self {
                TextPrompt::LabelOnly => label.to_string(),
                TextPrompt::Templates(t) => t[rng.random_range(0..t.len())].fill(label),
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PromptMode {
    /// One template per label drawn with the given seed; rows are raw
    /// features.
    Sample(u64),
    /// Mean of the L2-normalised features of every template, renormalised.
    Ensemble,
}

pub(crate) fn normalize_rows(m: &mut Array2<f64>) -> Result<()> {
    for (row, mut r) in m.rows_mut().into_iter().enumerate() {
        let norm = r.dot(&r).sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::DegenerateEmbedding { row });
        }
        r /= norm;
    }
    Ok(())
}

/// Embeds every label of `vocab` under `prompt`; returns `|vocab| × d`.
pub fn embed_prompted_labels(
    encoder: &TextEncoder,
    store: &ParamStore,
    tokenizer: &Tokenizer,
    vocab: &LabelVocabulary,
    prompt: &TextPrompt,
    mode: PromptMode,
) -> Result<Array2<f64>> {
    if let TextPrompt::Templates(t) = prompt {
        if t.is_empty() {
            return Err(Error::InvalidArgument("template list is empty".into()));
        }
    }
    let labels: Vec<&str> = vocab.iter().collect();
    let tokenize = |texts: &[String]| -> Vec<TokenSequence> {
        texts
            .iter()
            .map(|t| tokenizer.tokenize(t, encoder.context_len()))
            .collect()
    };
    match mode {
        PromptMode::Sample(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let texts = prompt.sample(&labels, &mut rng);
            encoder.encode(store, &tokenize(&texts))
        }
        PromptMode::Ensemble => {
            let per_label = prompt.texts(labels[0]).len();
            let texts: Vec<String> = labels.iter().flat_map(|l| prompt.texts(l)).collect();
            let mut all = encoder.encode(store, &tokenize(&texts))?;
            normalize_rows(&mut all)?;
            let dim = all.ncols();
            let mut out = Array2::<f64>::zeros((labels.len(), dim));
            for (i, mut row) in out.rows_mut().into_iter().enumerate() {
                let block = all.slice(ndarray::s![i * per_label..(i + 1) * per_label, ..]);
                row.assign(&block.mean_axis(ndarray::Axis(0)).unwrap());
            }
            normalize_rows(&mut out)?;
            Ok(out)
        }
    }
}

/// [`embed_prompted_labels`] over a template list.
pub fn embed_label_set(
    encoder: &TextEncoder,
    store: &ParamStore,
    tokenizer: &Tokenizer,
    vocab: &LabelVocabulary,
    templates: &[PromptTemplate],
    mode: PromptMode,
) -> Result<Array2<f64>> {
    if templates.is_empty() {
        return Err(Error::InvalidArgument("template list is empty".into()));
    }
    embed_prompted_labels(
        encoder,
        store,
        tokenizer,
        vocab,
        &TextPrompt::Templates(templates.to_vec()),
        mode,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::template::{default_templates, PromptKind};

    fn setup() -> (TextEncoder, ParamStore, Tokenizer, LabelVocabulary) {
        let vocab = LabelVocabulary::new(["move left", "grow up", "shrink down"]).unwrap();
        let templates = default_templates();
        let corpus = vocab
            .iter()
            .map(str::to_string)
            .chain(templates.iter().map(|t| t.pattern().to_string()));
        let tokenizer = Tokenizer::build(corpus);
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cfg = TextConfig {
            context_len: 12,
            width: 16,
            layers: 2,
            heads: 2,
        };
        let enc = TextEncoder::new(&mut store, &cfg, tokenizer.len(), 8, &mut rng);
        (enc, store, tokenizer, vocab)
    }

    #[test]
    fn output_shape_and_purity() {
        let (enc, store, tok, _) = setup();
        let a = tok.tokenize("move left", 12);
        let b = tok.tokenize("grow up", 12);
        let out = enc.encode(&store, &[a.clone(), b, a]).unwrap();
        assert_eq!(out.dim(), (3, 8));
        assert_eq!(out.row(0), out.row(2));
        assert_ne!(out.row(0), out.row(1));
    }

    #[test]
    fn bad_eos_rejected() {
        let (enc, store, tok, _) = setup();
        let mut seq = tok.tokenize("move", 12);
        seq.eos_position = 12;
        assert!(matches!(enc.encode(&store, &[seq]), Err(Error::Shape(_))));
    }

    #[test]
    fn single_template_matches_direct_encoding() {
        let (enc, store, tok, vocab) = setup();
        let t = PromptTemplate::new(PromptKind::Prefix, "a video of action {label}").unwrap();
        let direct: Vec<_> = vocab.iter().map(|l| tok.tokenize(&t.fill(l), 12)).collect();
        let mut direct = enc.encode(&store, &direct).unwrap();
        let sampled = embed_label_set(&enc, &store, &tok, &vocab, std::slice::from_ref(&t), PromptMode::Sample(3)).unwrap();
        assert_eq!(sampled, direct);
        normalize_rows(&mut direct).unwrap();
        let ens = embed_label_set(&enc, &store, &tok, &vocab, &[t], PromptMode::Ensemble).unwrap();
        assert!(ens.iter().zip(direct.iter()).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn repeated_templates_equal_single() {
        let (enc, store, tok, vocab) = setup();
        let t = PromptTemplate::new(PromptKind::Cloze, "human {label} in a scene").unwrap();
        let one = embed_label_set(&enc, &store, &tok, &vocab, std::slice::from_ref(&t), PromptMode::Ensemble).unwrap();
        let many = embed_label_set(&enc, &store, &tok, &vocab, &vec![t; 5], PromptMode::Ensemble).unwrap();
        assert!(one.iter().zip(many.iter()).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn ensemble_rows_are_unit_norm() {
        let (enc, store, tok, vocab) = setup();
        let ens = embed_label_set(&enc, &store, &tok, &vocab, &default_templates(), PromptMode::Ensemble).unwrap();
        for row in ens.rows() {
            assert!((row.dot(&row).sqrt() - 1.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn empty_templates_rejected() {
        let (enc, store, tok, vocab) = setup();
        assert!(embed_label_set(&enc, &store, &tok, &vocab, &[], PromptMode::Ensemble).is_err());
    }

    #[test]
    fn sampling_is_seeded() {
        let (enc, store, tok, vocab) = setup();
        let t = default_templates();
        let a = embed_label_set(&enc, &store, &tok, &vocab, &t, PromptMode::Sample(5)).unwrap();
        let b = embed_label_set(&enc, &store, &tok, &vocab, &t, PromptMode::Sample(5)).unwrap();
        assert_eq!(a, b);
    }
}
