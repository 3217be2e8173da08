//! Fine-tuning: batching, the optimisation step, the epoch loop with
//! validation, and checkpoints.

pub mod checkpoint;
pub mod optimizer;
pub mod schedule;

use std::fmt::Write as _;

use ndarray::{Array2, Ix2, IxDyn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use checkpoint::{Checkpoint, CheckpointTensor};
pub use optimizer::AdamW;
pub use schedule::{lr_at, lr_factor, warmup_steps};

use crate::autograd::{Graph, Tensor, Var};
use crate::config::{ExperimentConfig, OptimizerConfig, ViewSet};
use crate::data::{DatasetManifest, Split};
use crate::error::{Error, Result};
use crate::inference::evaluate;
use crate::model::{Head, Model};
use crate::objective::contrastive_loss;
use crate::params::{Component, ParamGroupTag, ParamScope};
use crate::text::{TextPrompt, TokenSequence, Tokenizer};
use crate::vision::{prepare_batch, SampleMode};

/// One prepared mini-batch. Element `i` pairs clip `i` with label `i` and,
/// for the dual encoder, with the prompt text `texts[i]`.
#[derive(Clone, Debug)]
pub struct TrainBatch {
    pub clips: Tensor,
    pub labels: Vec<usize>,
    pub texts: Vec<TokenSequence>,
}

/// Softmax cross-entropy averaged over rows, for the unimodal baseline.
pub fn cross_entropy<'g>(logits: Var<'g>, labels: &[usize]) -> Result<Var<'g>> {
    let value: Array2<f64> = logits
        .value()
        .clone()
        .into_dimensionality::<Ix2>()
        .map_err(|_| Error::Shape("logits must be a matrix".into()))?;
    let (n, c) = value.dim();
    if labels.len() != n || labels.iter().any(|&l| l >= c) {
        return Err(Error::Shape(format!("{} labels for {n}x{c} logits", labels.len())));
    }
    let mut probs = value;
    let mut loss = 0.0;
    for (mut row, &label) in probs.rows_mut().into_iter().zip(labels) {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - row[label];
        row.mapv_inplace(|v| (v - lse).exp());
    }
    let mut grad = probs;
    for (i, &label) in labels.iter().enumerate() {
        grad[[i, label]] -= 1.0;
    }
    grad /= n as f64;
    let graph = logits.graph();
    let value = Tensor::from_elem(IxDyn(&[]), loss / n as f64);
    Ok(graph.custom(&[logits], value, move |up, _, _| {
        vec![Some((&grad * up.iter().copied().next().unwrap_or(0.0)).into_dyn())]
    }))
}

/// One optimisation step at `step` of `total`. Returns the batch loss.
pub fn train_step(
    model: &mut Model,
    opt: &mut AdamW,
    batch: &TrainBatch,
    cfg: &OptimizerConfig,
    step: usize,
    total: usize,
) -> Result<f64> {
    let lr = lr_at(step, total, cfg)?;
    let (loss, grads) = {
        let graph = Graph::new();
        let scope = ParamScope::new(&graph, &model.store);
        let video = model.video_forward(&scope, &batch.clips)?;
        let loss = match &model.head {
            Head::Contrastive { text, log_scale } => {
                let text = text.forward(&scope, &batch.texts)?;
                contrastive_loss(video, text, scope.param(*log_scale), &batch.labels)?
            }
            Head::Classifier(linear) => cross_entropy(linear.forward(&scope, video), &batch.labels)?,
        };
        let value = loss.scalar();
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("loss {value} at step {step}")));
        }
        let mut grads = graph.backward(loss);
        (value, scope.collect(&mut grads))
    };
    for (g, p) in grads.iter().zip(model.store.iter()) {
        if g.as_ref().is_some_and(|g| g.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite(format!("gradient of {} at step {step}", p.name)));
        }
    }
    opt.step(&mut model.store, grads, lr, cfg);
    Ok(loss)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricRecord {
    pub step: usize,
    pub split: String,
    pub metric: String,
    pub value: f64,
}

/// Line-oriented log: `step<TAB>split<TAB>metric<TAB>value`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsLog {
    pub records: Vec<MetricRecord>,
}

impl MetricsLog {
    pub fn push(&mut self, step: usize, split: &str, metric: &str, value: f64) {
        log::info!("step {step} {split} {metric} {value:.4}");
        self.records.push(MetricRecord {
            step,
            split: split.into(),
            metric: metric.into(),
            value,
        });
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self, split: &str, metric: &str) -> Option<f64> {
        self.records
            .iter()
            .rev()
            .find(|r| r.split == split && r.metric == metric)
            .map(|r| r.value)
    }

    pub fn to_text(&self) -> String {
        self.records.iter().fold(String::new(), |mut out, r| {
            let _ = writeln!(out, "{}\t{}\t{}\t{}", r.step, r.split, r.metric, r.value);
            out
        })
    }
}

#[derive(Clone, Debug)]
pub struct FitResult {
    /// Model after the last step.
    pub model: Model,
    /// Snapshot with the best validation top-1 (the last one without a
    /// validation split).
    pub best: Checkpoint,
    pub best_top1: Option<f64>,
    pub metrics: MetricsLog,
    pub steps: usize,
}

/// Tokenizer over the label strings and template words of an experiment.
pub fn build_tokenizer(manifest: &DatasetManifest, prompt: &TextPrompt) -> Tokenizer {
    let mut corpus: Vec<String> = manifest.vocab.labels().to_vec();
    if let TextPrompt::Templates(t) = prompt {
        corpus.extend(t.iter().map(|t| t.pattern().to_string()));
    }
    Tokenizer::build(corpus)
}

/// Fresh or checkpoint-initialised model with the configured parts frozen.
pub fn build_model(manifest: &DatasetManifest, cfg: &ExperimentConfig, init: Option<&Checkpoint>) -> Result<Model> {
    let classes = manifest.vocab.len();
    let seed = cfg.optimizer.seed;
    let mut model = match init {
        None => Model::new(&cfg.model, build_tokenizer(manifest, &cfg.prompt.text_prompt()?), classes, seed)?,
        Some(ckpt) => {
            if ckpt.config_hash != cfg.model_hash() {
                log::warn!("checkpoint was written under a different model configuration");
            }
            let (mut model, report) = Model::from_checkpoint(&cfg.model, ckpt, classes, seed)?;
            log::info!(
                "initialised {} tensors from checkpoint; {} kept their initial values",
                report.loaded,
                report.missing.len()
            );
            if ckpt.tensors.iter().any(|t| t.name == "log_scale") {
                model.store.set_tag(Component::Temperature, ParamGroupTag::Pretrained);
            }
            model
        }
    };
    model.freeze(cfg.freeze);
    Ok(model)
}

/// Training items: one per (clip, label) pair.
fn train_items(manifest: &DatasetManifest) -> Vec<(usize, usize)> {
    manifest
        .entries
        .iter()
        .enumerate()
        .filter(|(_, e)| e.split == Split::Train)
        .flat_map(|(i, e)| e.labels.iter().map(move |&l| (i, l)))
        .collect()
}

pub fn fit(manifest: &DatasetManifest, cfg: &ExperimentConfig, init: Option<&Checkpoint>) -> Result<FitResult> {
    cfg.validate()?;
    let model = build_model(manifest, cfg, init)?;
    fit_model(model, manifest, cfg)
}

/// Runs the epoch loop on an already built model.
pub fn fit_model(mut model: Model, manifest: &DatasetManifest, cfg: &ExperimentConfig) -> Result<FitResult> {
    let o = &cfg.optimizer;
    let hash = cfg.model_hash();
    let mut items = train_items(manifest);
    if items.is_empty() {
        return Err(Error::EmptyDataset("no training clips".into()));
    }
    let prompt = cfg.prompt.text_prompt()?;
    let val = manifest.load_split(Split::Val)?;
    let per_epoch = items.len().div_ceil(o.batch_size);
    let total = o.epochs * per_epoch;
    let mut rng = ChaCha8Rng::seed_from_u64(o.seed.wrapping_add(1));
    let mut opt = AdamW::new(&model.store);
    let mut metrics = MetricsLog::default();
    let mut best = model.to_checkpoint(0, &hash);
    let mut best_top1: Option<f64> = None;
    let mut step = 0;
    for epoch in 0..o.epochs {
        items.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in items.chunks(o.batch_size) {
            let clips = chunk
                .iter()
                .map(|&(i, _)| manifest.load_clip(&manifest.entries[i]))
                .collect::<Result<Vec<_>>>()?;
            let frames: Vec<_> = clips.iter().map(|c| c.frames()).collect();
            let tensor = prepare_batch(&frames, cfg.model.vision.frames, cfg.input, SampleMode::Train, &mut rng);
            let labels: Vec<usize> = chunk.iter().map(|&(_, l)| l).collect();
            let texts = if model.is_unimodal() {
                Vec::new()
            } else {
                let names: Vec<&str> = labels.iter().map(|&l| manifest.vocab.labels()[l].as_str()).collect();
                model.tokenize(&prompt.sample(&names, &mut rng))
            };
            let batch = TrainBatch {
                clips: tensor,
                labels,
                texts,
            };
            loss_sum += train_step(&mut model, &mut opt, &batch, o, step, total)?;
            step += 1;
        }
        metrics.push(step, "train", "loss", loss_sum / per_epoch as f64);
        if val.is_empty() {
            best = model.to_checkpoint(step as u64, &hash);
            continue;
        }
        let eval = evaluate(&model, &val, &manifest.vocab, &prompt, &ViewSet::single(), cfg.input)?;
        metrics.push(step, "val", "top1", eval.top1);
        metrics.push(step, "val", "top5", eval.top5);
        log::debug!("epoch {epoch} done");
        if best_top1.is_none_or(|b| eval.top1 > b) {
            best_top1 = Some(eval.top1);
            best = model.to_checkpoint(step as u64, &hash);
        }
    }
    Ok(FitResult {
        model,
        best,
        best_top1,
        metrics,
        steps: step,
    })
}

/// Same loop with the text branch replaced by a linear classifier over
/// the video embedding.
pub fn train_unimodal_baseline(manifest: &DatasetManifest, cfg: &ExperimentConfig, init: Option<&Checkpoint>) -> Result<FitResult> {
    let mut cfg = cfg.clone();
    cfg.model.unimodal = true;
    fit(manifest, &cfg, init)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{tiny, FreezeConfig};
    use crate::data::{generate_synthetic, SyntheticSpec};
    use crate::params::normal;

    fn dataset(dir: &std::path::Path) -> DatasetManifest {
        generate_synthetic(&SyntheticSpec::new(4, 4, 16, 3, 1, 5), dir).unwrap()
    }

    fn batch(model: &Model, manifest: &DatasetManifest, seed: u64) -> TrainBatch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let clips = manifest.load_split(Split::Train).unwrap();
        let frames: Vec<_> = clips.iter().take(4).map(|c| c.frames()).collect();
        let labels: Vec<usize> = clips.iter().take(4).map(|c| c.labels()[0]).collect();
        let names: Vec<String> = labels.iter().map(|&l| manifest.vocab.labels()[l].clone()).collect();
        TrainBatch {
            clips: prepare_batch(&frames, 2, tiny().input, SampleMode::Train, &mut rng),
            labels,
            texts: model.tokenize(&names),
        }
    }

    #[test]
    fn identical_runs_are_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let m = dataset(dir.path());
        let cfg = tiny();
        let run = || {
            let mut model = build_model(&m, &cfg, None).unwrap();
            let mut opt = AdamW::new(&model.store);
            let b = batch(&model, &m, 1);
            let losses: Vec<f64> = (0..3).map(|s| train_step(&mut model, &mut opt, &b, &cfg.optimizer, s + 1, 10).unwrap()).collect();
            (losses, model.to_checkpoint(3, "x").to_bytes())
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn everything_frozen_changes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let m = dataset(dir.path());
        let cfg = tiny();
        let mut model = build_model(&m, &cfg, None).unwrap();
        for p in model.store.iter_mut() {
            p.frozen = true;
        }
        let before = model.to_checkpoint(0, "x");
        let mut opt = AdamW::new(&model.store);
        let b = batch(&model, &m, 2);
        let loss = train_step(&mut model, &mut opt, &b, &cfg.optimizer, 1, 10).unwrap();
        assert!(loss.is_finite() && loss > 0.0);
        assert_eq!(model.to_checkpoint(0, "x"), before);
    }

    #[test]
    fn frozen_vision_still_trains_the_temporal_head() {
        let dir = tempfile::tempdir().unwrap();
        let m = dataset(dir.path());
        let mut cfg = tiny();
        cfg.freeze = FreezeConfig { text: true, vision: true };
        let mut model = build_model(&m, &cfg, None).unwrap();
        let before = model.store.clone();
        let mut opt = AdamW::new(&model.store);
        let b = batch(&model, &m, 3);
        train_step(&mut model, &mut opt, &b, &cfg.optimizer, 5, 10).unwrap();
        for (old, new) in before.iter().zip(model.store.iter()) {
            let changed = old.value != new.value;
            match old.component {
                Component::TextEncoder | Component::VisionEncoder => assert!(!changed, "{}", old.name),
                Component::TemporalHead | Component::Temperature => {}
                Component::Classifier => unreachable!(),
            }
        }
        let head_changed = before
            .iter()
            .zip(model.store.iter())
            .any(|(o, n)| o.component == Component::TemporalHead && o.value != n.value);
        assert!(head_changed);
    }

    #[test]
    fn repeated_steps_lower_the_loss() {
        let dir = tempfile::tempdir().unwrap();
        let m = dataset(dir.path());
        let mut cfg = tiny();
        cfg.optimizer.warmup_fraction = 0.0;
        for unimodal in [false, true] {
            cfg.model.unimodal = unimodal;
            let mut model = build_model(&m, &cfg, None).unwrap();
            let mut opt = AdamW::new(&model.store);
            let b = batch(&model, &m, 4);
            let first = train_step(&mut model, &mut opt, &b, &cfg.optimizer, 0, 400).unwrap();
            let mut last = first;
            for s in 1..200 {
                last = train_step(&mut model, &mut opt, &b, &cfg.optimizer, s, 400).unwrap();
            }
            assert!(last < first, "unimodal {unimodal}: {first} -> {last}");
        }
    }

    #[test]
    fn zero_epochs_return_the_initial_model() {
        let dir = tempfile::tempdir().unwrap();
        let m = dataset(dir.path());
        let mut cfg = tiny();
        cfg.optimizer.epochs = 0;
        let out = fit(&m, &cfg, None).unwrap();
        assert!(out.metrics.is_empty());
        assert_eq!(out.steps, 0);
        assert_eq!(out.best, build_model(&m, &cfg, None).unwrap().to_checkpoint(0, &cfg.model_hash()));
    }

    #[test]
    fn fit_logs_and_reproduces() {
        let dir = tempfile::tempdir().unwrap();
        let m = dataset(dir.path());
        let mut cfg = tiny();
        cfg.optimizer.epochs = 2;
        let a = fit(&m, &cfg, None).unwrap();
        let b = fit(&m, &cfg, None).unwrap();
        assert_eq!(a.metrics, b.metrics);
        assert_eq!(a.best, b.best);
        assert_eq!(a.steps, 6);
        let text = a.metrics.to_text();
        assert_eq!(text.lines().count(), 6);
        assert!(text.lines().all(|l| l.split('\t').count() == 4));
        assert!(a.metrics.last("val", "top1").is_some());
    }

    #[test]
    fn empty_training_split_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let m = dataset(dir.path()).only(Split::Val);
        assert!(matches!(fit(&m, &tiny(), None), Err(Error::EmptyDataset(_))));
    }

    #[test]
    fn cross_entropy_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x0 = normal(&[3, 4], 1.0, &mut rng);
        let labels = [2, 0, 3];
        let eval = |x: &Tensor| {
            let g = Graph::new();
            cross_entropy(g.constant(x.clone()), &labels).unwrap().scalar()
        };
        let graph = Graph::new();
        let x = graph.leaf(x0.clone());
        let grads = graph.backward(cross_entropy(x, &labels).unwrap());
        let analytic = grads.get(x).unwrap();
        for idx in ndarray::indices((3, 4)) {
            let mut plus = x0.clone();
            let mut minus = x0.clone();
            plus[[idx.0, idx.1]] += 1e-6;
            minus[[idx.0, idx.1]] -= 1e-6;
            let numeric = (eval(&plus) - eval(&minus)) / 2e-6;
            assert!((analytic[[idx.0, idx.1]] - numeric).abs() < 1e-7);
        }
    }
}
