//! Matching-based classification, multi-view scoring, zero-/few-shot
//! protocols and ranking metrics.

use std::fmt::Write as _;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{ExperimentConfig, ViewSet};
use crate::data::transform::{crop, resize_shorter, select_frames, view_offsets};
use crate::data::{DatasetManifest, Frames, LabelVocabulary, Split, VideoClip};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::objective::cosine_similarity;
use crate::text::{PromptTemplate, TextPrompt};
use crate::train::checkpoint::Checkpoint;
use crate::vision::{sample_segments, stack_clips, SampleMode, SamplerConfig, SpatialConfig};

/// Clips encoded per forward pass during evaluation.
const EVAL_BATCH: usize = 32;

/// Labels of one clip ordered by descending score; ties go to the lower
/// label index.
#[derive(Clone, Debug, PartialEq)]
pub struct Ranking {
    pub indices: Vec<usize>,
    pub scores: Vec<f64>,
}

pub fn rank_row(row: ArrayView1<f64>) -> Ranking {
    let mut indices: Vec<usize> = (0..row.len()).collect();
    indices.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
    let scores = indices.iter().map(|&i| row[i]).collect();
    Ranking { indices, scores }
}

/// Ranks every label for every clip by cosine similarity.
pub fn classify(video: ArrayView2<f64>, labels: ArrayView2<f64>) -> Result<Vec<Ranking>> {
    let sim = cosine_similarity(video, labels)?;
    Ok(sim.0.rows().into_iter().map(rank_row).collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct PredictionRecord {
    pub clip_id: String,
    pub ranked: Vec<usize>,
    pub scores: Vec<f64>,
    pub truth: Vec<usize>,
}

impl PredictionRecord {
    pub fn new(clip_id: impl Into<String>, ranking: Ranking, truth: Vec<usize>) -> Self {
        Self {
            clip_id: clip_id.into(),
            ranked: ranking.indices,
            scores: ranking.scores,
            truth,
        }
    }

    pub fn predicted(&self) -> usize {
        self.ranked[0]
    }

    /// Whether any ground-truth label is among the first `k` ranks.
    pub fn hit_at(&self, k: usize) -> bool {
        self.ranked.iter().take(k).any(|i| self.truth.contains(i))
    }

    /// Score of one label.
    pub fn score_of(&self, label: usize) -> Option<f64> {
        self.ranked.iter().position(|&i| i == label).map(|p| self.scores[p])
    }

    /// `clip_id<TAB>ranked<TAB>scores<TAB>truth`, lists comma separated.
    pub fn to_line(&self) -> String {
        let join = |v: &mut dyn Iterator<Item = String>| v.collect::<Vec<_>>().join(",");
        format!(
            "{}\t{}\t{}\t{}",
            self.clip_id,
            join(&mut self.ranked.iter().map(usize::to_string)),
            join(&mut self.scores.iter().map(|s| format!("{s:.6}"))),
            join(&mut self.truth.iter().map(usize::to_string)),
        )
    }
}

pub fn format_predictions(records: &[PredictionRecord]) -> String {
    records.iter().fold(String::new(), |mut out, r| {
        let _ = writeln!(out, "{}", r.to_line());
        out
    })
}

/// Fraction of records with a ground-truth label in the top `k`.
pub fn topk_accuracy(records: &[PredictionRecord], k: usize) -> Result<f64> {
    let vocab = records.first().map_or(0, |r| r.ranked.len());
    if records.is_empty() {
        return Err(Error::InvalidArgument("no predictions to score".into()));
    }
    if k == 0 || k > vocab {
        return Err(Error::InvalidArgument(format!("k = {k} outside 1..={vocab}")));
    }
    let hits = records.iter().filter(|r| r.hit_at(k)).count();
    Ok(hits as f64 / records.len() as f64)
}

/// Average precision of one ranked list: clips sorted by descending score
/// (ties keep input order), precision averaged at every relevant rank.
pub fn average_precision(scores: &[f64], relevant: &[bool]) -> Option<f64> {
    let positives = relevant.iter().filter(|&&r| r).count();
    if positives == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut hits = 0;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if relevant[i] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Some(sum / positives as f64)
}

/// Unweighted mean of per-class average precision. Classes without a
/// positive clip are skipped with a warning.
pub fn mean_average_precision(records: &[PredictionRecord]) -> Result<f64> {
    let classes = records.first().map_or(0, |r| r.ranked.len());
    let mut aps = Vec::new();
    for c in 0..classes {
        let scores: Vec<f64> = records
            .iter()
            .map(|r| r.score_of(c).ok_or_else(|| Error::InvalidArgument(format!("clip {} lacks class {c}", r.clip_id))))
            .collect::<Result<_>>()?;
        let relevant: Vec<bool> = records.iter().map(|r| r.truth.contains(&c)).collect();
        match average_precision(&scores, &relevant) {
            Some(ap) => aps.push(ap),
            None => log::warn!("class {c} has no positive clip; excluded from mAP"),
        }
    }
    if aps.is_empty() {
        return Err(Error::InvalidArgument("no class has a positive clip".into()));
    }
    Ok(aps.iter().sum::<f64>() / aps.len() as f64)
}

/// Wilson score interval for a binomial proportion at 95% confidence.
pub fn wilson_interval(successes: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054_f64;
    let n = n as f64;
    let p = successes as f64 / n;
    let denom = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / denom;
    let half = z * ((p * (1.0 - p) / n) + z * z / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Frame indices of each temporal view. A single view is the plain
/// evaluation sampling over the whole video. Otherwise view `j` is the
/// window of `frames · stride` frames starting at `⌊j(T − span)/(n − 1)⌋`,
/// or the whole video when it is not longer than one window.
pub fn temporal_views(total: usize, frames: usize, views: &ViewSet) -> Vec<Vec<usize>> {
    let eval = |t: usize| {
        let cfg = SamplerConfig {
            num_frames: frames,
            mode: SampleMode::Eval,
        };
        sample_segments(t, cfg, &mut ChaCha8Rng::seed_from_u64(0))
    };
    let span = frames * views.stride;
    let n = views.temporal_clips;
    if n == 1 || total <= span {
        return vec![eval(total); n];
    }
    (0..n)
        .map(|j| {
            let start = j * (total - span) / (n - 1);
            (0..frames).map(|i| start + i * views.stride).collect()
        })
        .collect()
}

/// Every (temporal, spatial) view of a clip, temporal-major.
pub fn view_clips(frames: &Frames, num_frames: usize, views: &ViewSet, spatial: SpatialConfig) -> Vec<Frames> {
    let mut out = Vec::with_capacity(views.temporal_clips * views.spatial_crops);
    for indices in temporal_views(frames.shape()[0], num_frames, views) {
        let picked = resize_shorter(&select_frames(frames, &indices), spatial.resize);
        let (_, h, w, _) = picked.dim();
        for (top, left) in view_offsets(h, w, spatial.crop, views.spatial_crops) {
            out.push(crop(&picked, top, left, spatial.crop));
        }
    }
    out
}

/// Running mean, exact when all rows are equal.
fn mean_rows(scores: &Array2<f64>) -> Array1<f64> {
    let mut mean = scores.row(0).to_owned();
    for (k, row) in scores.rows().into_iter().enumerate().skip(1) {
        mean.zip_mut_with(&row, |m, &x| *m += (x - *m) / (k + 1) as f64);
    }
    mean
}

/// Raw scores of one clip averaged over all views.
pub fn multi_view_scores(
    model: &Model,
    frames: &Frames,
    views: &ViewSet,
    spatial: SpatialConfig,
    label_emb: Option<&Array2<f64>>,
) -> Result<Array1<f64>> {
    let batch = stack_clips(&view_clips(frames, model.config.vision.frames, views, spatial));
    Ok(mean_rows(&model.scores(&batch, label_emb)?))
}

/// Scores of many clips against the label set, `[clips, classes]`.
pub fn score_clips(
    model: &Model,
    clips: &[&Frames],
    views: &ViewSet,
    spatial: SpatialConfig,
    label_emb: Option<&Array2<f64>>,
) -> Result<Array2<f64>> {
    let classes = match (label_emb, &model.head) {
        (Some(l), _) => l.nrows(),
        (None, crate::model::Head::Classifier(linear)) => model.store.get(linear.weight).value.shape()[1],
        (None, _) => return Err(Error::InvalidArgument("label embeddings required".into())),
    };
    let mut out = Array2::zeros((clips.len(), classes));
    if views.spatial_crops * views.temporal_clips == 1 {
        for (chunk_idx, chunk) in clips.chunks(EVAL_BATCH).enumerate() {
            let prepared: Vec<Frames> = chunk
                .iter()
                .map(|c| view_clips(c, model.config.vision.frames, views, spatial).remove(0))
                .collect();
            let scores = model.scores(&stack_clips(&prepared), label_emb)?;
            let start = chunk_idx * EVAL_BATCH;
            out.slice_mut(ndarray::s![start..start + chunk.len(), ..]).assign(&scores);
        }
    } else {
        for (i, clip) in clips.iter().enumerate() {
            out.row_mut(i).assign(&multi_view_scores(model, clip, views, spatial, label_emb)?);
        }
    }
    Ok(out)
}

pub fn records_from_scores(scores: &Array2<f64>, clips: &[&VideoClip], truth: impl Fn(&VideoClip) -> Vec<usize>) -> Vec<PredictionRecord> {
    scores
        .axis_iter(Axis(0))
        .zip(clips)
        .map(|(row, clip)| PredictionRecord::new(clip.id(), rank_row(row), truth(clip)))
        .collect()
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub records: Vec<PredictionRecord>,
    pub top1: f64,
    /// Top-5 accuracy, or top-|vocab| when the vocabulary is smaller.
    pub top5: f64,
}

fn label_embeddings(model: &Model, vocab: &LabelVocabulary, prompt: &TextPrompt) -> Result<Option<Array2<f64>>> {
    if model.is_unimodal() {
        Ok(None)
    } else {
        model.label_embeddings(vocab, prompt).map(Some)
    }
}

/// Standard evaluation against the clips' own vocabulary.
pub fn evaluate(
    model: &Model,
    clips: &[VideoClip],
    vocab: &LabelVocabulary,
    prompt: &TextPrompt,
    views: &ViewSet,
    spatial: SpatialConfig,
) -> Result<Evaluation> {
    if clips.is_empty() {
        return Err(Error::EmptyDataset("no clips to evaluate".into()));
    }
    let labels = label_embeddings(model, vocab, prompt)?;
    let frames: Vec<&Frames> = clips.iter().map(VideoClip::frames).collect();
    let scores = score_clips(model, &frames, views, spatial, labels.as_ref())?;
    let refs: Vec<&VideoClip> = clips.iter().collect();
    let records = records_from_scores(&scores, &refs, |c| c.labels().to_vec());
    let top1 = topk_accuracy(&records, 1)?;
    let top5 = topk_accuracy(&records, 5.min(scores.ncols()))?;
    Ok(Evaluation { records, top1, top5 })
}

#[derive(Clone, Debug)]
pub struct ZeroShotReport {
    pub records: Vec<PredictionRecord>,
    /// Clips whose labels occur in the new vocabulary.
    pub evaluated: usize,
    pub correct: usize,
    pub accuracy: Option<f64>,
    pub interval: (f64, f64),
}

/// Matches clips against an arbitrary label set embedded with the prompt
/// ensemble. Ground truth is carried over by label string; clips whose
/// labels are all absent from `new_vocab` are ranked but not scored.
pub fn zero_shot(
    model: &Model,
    clips: &[VideoClip],
    clip_vocab: &LabelVocabulary,
    new_vocab: &LabelVocabulary,
    templates: &[PromptTemplate],
    views: &ViewSet,
    spatial: SpatialConfig,
) -> Result<ZeroShotReport> {
    if new_vocab.is_empty() {
        return Err(Error::InvalidArgument("zero-shot vocabulary is empty".into()));
    }
    let prompt = if templates.is_empty() {
        TextPrompt::LabelOnly
    } else {
        TextPrompt::Templates(templates.to_vec())
    };
    let labels = model.label_embeddings(new_vocab, &prompt)?;
    let frames: Vec<&Frames> = clips.iter().map(VideoClip::frames).collect();
    let scores = score_clips(model, &frames, views, spatial, Some(&labels))?;
    let refs: Vec<&VideoClip> = clips.iter().collect();
    let records = records_from_scores(&scores, &refs, |c| {
        c.labels()
            .iter()
            .filter_map(|&l| clip_vocab.get(l).and_then(|name| new_vocab.index_of(name)))
            .collect()
    });
    let scored: Vec<&PredictionRecord> = records.iter().filter(|r| !r.truth.is_empty()).collect();
    let correct = scored.iter().filter(|r| r.hit_at(1)).count();
    let evaluated = scored.len();
    Ok(ZeroShotReport {
        accuracy: (evaluated > 0).then(|| correct as f64 / evaluated as f64),
        interval: wilson_interval(correct, evaluated),
        records,
        evaluated,
        correct,
    })
}

/// Keeps `k` training clips per class, chosen by a seeded shuffle; the
/// validation split is kept whole.
pub fn subsample_per_class(manifest: &DatasetManifest, k: usize, seed: u64) -> Result<DatasetManifest> {
    use rand::seq::SliceRandom;
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = Vec::new();
    for class in 0..manifest.vocab.len() {
        let mut members: Vec<usize> = manifest
            .entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.split == Split::Train && e.primary_label() == class)
            .map(|(i, _)| i)
            .collect();
        if members.len() < k {
            return Err(Error::InvalidArgument(format!(
                "class {:?} has {} training clips, fewer than k = {k}",
                manifest.vocab.get(class).unwrap_or("?"),
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        keep.extend_from_slice(&members[..k]);
    }
    keep.sort_unstable();
    let entries = manifest
        .entries
        .iter()
        .enumerate()
        .filter(|(i, e)| e.split == Split::Val || keep.binary_search(i).is_ok())
        .map(|(_, e)| e.clone())
        .collect();
    DatasetManifest::new(manifest.root.clone(), manifest.vocab.clone(), entries)
}

#[derive(Clone, Debug)]
pub struct FewShotReport {
    pub k: usize,
    pub train_clips: usize,
    pub evaluation: Evaluation,
}

/// Fine-tunes on `k` clips per class and evaluates on the validation split.
pub fn few_shot(init: Option<&Checkpoint>, k: usize, manifest: &DatasetManifest, cfg: &ExperimentConfig) -> Result<FewShotReport> {
    let subset = subsample_per_class(manifest, k, cfg.optimizer.seed)?;
    let fit = crate::train::fit(&subset, cfg, init)?;
    let val = subset.load_split(Split::Val)?;
    let prompt = cfg.prompt.text_prompt()?;
    let evaluation = evaluate(&fit.model, &val, &subset.vocab, &prompt, &ViewSet::single(), cfg.input)?;
    Ok(FewShotReport {
        k,
        train_clips: subset.split(Split::Train).len(),
        evaluation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, arr2};
    use rand::Rng;

    fn record(scores: &[f64], truth: Vec<usize>) -> PredictionRecord {
        PredictionRecord::new("c", rank_row(ArrayView1::from(scores)), truth)
    }

    #[test]
    fn argmax_and_ties() {
        assert_eq!(rank_row(arr1(&[0.2, 0.9, 0.1]).view()).indices, vec![1, 0, 2]);
        assert_eq!(rank_row(arr1(&[0.5; 4]).view()).indices, vec![0, 1, 2, 3]);
    }

    #[test]
    fn rescaled_video_keeps_ranking() {
        let labels = arr2(&[[1.0, 0.2], [0.1, 1.0], [-0.5, 0.5]]);
        let v = arr2(&[[0.3, 0.7]]);
        let a = classify(v.view(), labels.view()).unwrap();
        let b = classify((&v * 5.0).view(), labels.view()).unwrap();
        assert_eq!(a[0].indices, b[0].indices);
    }

    #[test]
    fn topk_examples() {
        let perfect: Vec<_> = (0..4).map(|_| record(&[0.0, 0.1, 0.2, 0.3], vec![3])).collect();
        for k in 1..=4 {
            assert_eq!(topk_accuracy(&perfect, k).unwrap(), 1.0);
        }
        let second: Vec<_> = (0..3).map(|_| record(&[0.9, 0.5, 0.1], vec![1])).collect();
        assert_eq!(topk_accuracy(&second, 1).unwrap(), 0.0);
        assert_eq!(topk_accuracy(&second, 2).unwrap(), 1.0);
        assert!(topk_accuracy(&second, 4).is_err());
        assert!(topk_accuracy(&second, 0).is_err());
    }

    #[test]
    fn topk_matches_hand_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let records: Vec<_> = (0..100)
            .map(|_| {
                let scores: Vec<f64> = (0..10).map(|_| rng.random()).collect();
                record(&scores, vec![rng.random_range(0..10)])
            })
            .collect();
        let mut hits = 0;
        for r in &records {
            let t = r.truth[0];
            let s = r.score_of(t).unwrap();
            let better = r.ranked.iter().filter(|&&j| {
                let sj = r.score_of(j).unwrap();
                sj > s || (sj == s && j < t)
            });
            if better.count() < 5 {
                hits += 1;
            }
        }
        assert_eq!(topk_accuracy(&records, 5).unwrap(), hits as f64 / 100.0);
    }

    #[test]
    fn average_precision_examples() {
        assert_eq!(average_precision(&[0.9, 0.1], &[false, true]), Some(0.5));
        assert_eq!(average_precision(&[0.9, 0.1], &[true, false]), Some(1.0));
        assert_eq!(average_precision(&[0.9], &[false]), None);
        let perfect = vec![record(&[0.9, 0.1], vec![0]), record(&[0.2, 0.8], vec![1])];
        assert_eq!(mean_average_precision(&perfect).unwrap(), 1.0);
    }

    #[test]
    fn wilson_bounds() {
        let (lo, hi) = wilson_interval(30, 40);
        assert!(lo < 0.75 && hi > 0.75 && lo > 0.5 && hi < 0.9);
        assert_eq!(wilson_interval(0, 0), (0.0, 1.0));
    }

    #[test]
    fn temporal_view_starts() {
        let views = ViewSet {
            spatial_crops: 1,
            temporal_clips: 3,
            stride: 1,
        };
        let v = temporal_views(20, 4, &views);
        assert_eq!(v, vec![vec![0, 1, 2, 3], vec![8, 9, 10, 11], vec![16, 17, 18, 19]]);
        let short = temporal_views(4, 4, &views);
        assert!(short.iter().all(|w| *w == vec![0, 1, 2, 3]));
        let strided = ViewSet { stride: 2, ..views };
        assert_eq!(temporal_views(20, 4, &strided)[2], vec![12, 14, 16, 18]);
    }

    #[test]
    fn running_mean_of_equal_rows_is_exact() {
        let row = [0.1, 1.0 / 3.0, -2.7e-5];
        let m = Array2::from_shape_fn((30, 3), |(_, j)| row[j]);
        assert_eq!(mean_rows(&m).to_vec(), row.to_vec());
    }

    mod with_model {
        use super::super::*;
        use crate::config::tiny;
        use crate::data::{generate_synthetic, SyntheticSpec};
        use crate::text::default_templates;
        use crate::train::build_model;
        use ndarray::Array4;
        use rand::{Rng, SeedableRng};

        fn setup(dir: &std::path::Path) -> (DatasetManifest, Model, ExperimentConfig) {
            let cfg = tiny();
            let m = generate_synthetic(&SyntheticSpec::new(3, 6, 16, 2, 2, 9), dir).unwrap();
            let model = build_model(&m, &cfg, None).unwrap();
            (m, model, cfg)
        }

        #[test]
        fn single_view_equals_plain_path() {
            let dir = tempfile::tempdir().unwrap();
            let (m, model, cfg) = setup(dir.path());
            let labels = model.label_embeddings(&m.vocab, &cfg.prompt.text_prompt().unwrap()).unwrap();
            let clip = m.load_split(Split::Val).unwrap().remove(0);
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let plain = crate::vision::prepare_batch(&[clip.frames()], 2, cfg.input, SampleMode::Eval, &mut rng);
            let expected = model.scores(&plain, Some(&labels)).unwrap();
            let row = multi_view_scores(&model, clip.frames(), &ViewSet::single(), cfg.input, Some(&labels)).unwrap();
            assert_eq!(row, expected.row(0));
        }

        #[test]
        fn identical_views_average_to_the_single_view() {
            let dir = tempfile::tempdir().unwrap();
            let (m, model, cfg) = setup(dir.path());
            let labels = model.label_embeddings(&m.vocab, &TextPrompt::LabelOnly).unwrap();
            // Crop-sized and exactly one window long, so every view is the same.
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let frames = Array4::from_shape_fn((2, 16, 16, 3), |_| rng.random::<f32>());
            let many = ViewSet::default();
            let a = multi_view_scores(&model, &frames, &many, cfg.input, Some(&labels)).unwrap();
            let b = multi_view_scores(&model, &frames, &ViewSet::single(), cfg.input, Some(&labels)).unwrap();
            assert_eq!(a, b);
        }

        #[test]
        fn zero_shot_with_training_vocabulary_matches_evaluation() {
            let dir = tempfile::tempdir().unwrap();
            let (m, model, cfg) = setup(dir.path());
            let val = m.load_split(Split::Val).unwrap();
            let templates = default_templates();
            let eval = evaluate(&model, &val, &m.vocab, &TextPrompt::Templates(templates.clone()), &ViewSet::single(), cfg.input).unwrap();
            let before = model.to_checkpoint(0, "h").digest();
            let zs = zero_shot(&model, &val, &m.vocab, &m.vocab, &templates, &ViewSet::single(), cfg.input).unwrap();
            assert_eq!(zs.records, eval.records);
            assert_eq!(zs.accuracy, Some(eval.top1));
            assert_eq!(model.to_checkpoint(0, "h").digest(), before);
        }

        #[test]
        fn single_label_vocabulary_is_always_right() {
            let dir = tempfile::tempdir().unwrap();
            let (m, model, cfg) = setup(dir.path());
            let only = m.restrict_classes(&[1]).unwrap();
            let val = only.load_split(Split::Val).unwrap();
            let zs = zero_shot(&model, &val, &only.vocab, &only.vocab, &default_templates(), &ViewSet::single(), cfg.input).unwrap();
            assert_eq!(zs.accuracy, Some(1.0));
            let empty = zero_shot(&model, &val, &only.vocab, &m.vocab.subset(&[0]).unwrap(), &[], &ViewSet::single(), cfg.input).unwrap();
            assert_eq!(empty.evaluated, 0);
            assert_eq!(empty.accuracy, None);
        }

        #[test]
        fn subsampling_is_seeded_and_checked() {
            let dir = tempfile::tempdir().unwrap();
            let (m, _, _) = setup(dir.path());
            let a = subsample_per_class(&m, 1, 4).unwrap();
            assert_eq!(a.entries, subsample_per_class(&m, 1, 4).unwrap().entries);
            assert_eq!(a.split(Split::Train).len(), 3);
            assert_eq!(a.split(Split::Val).len(), 6);
            let full = subsample_per_class(&m, 2, 4).unwrap();
            assert_eq!(full.entries, m.entries);
            assert!(matches!(subsample_per_class(&m, 3, 4), Err(Error::InvalidArgument(_))));
        }

        #[test]
        fn few_shot_reports_on_validation() {
            let dir = tempfile::tempdir().unwrap();
            let (m, _, cfg) = setup(dir.path());
            let report = few_shot(None, 1, &m, &cfg).unwrap();
            assert_eq!(report.train_clips, 3);
            assert_eq!(report.evaluation.records.len(), 6);
        }
    }
}
