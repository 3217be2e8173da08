//! Dataset manifests.
//!
//! Text format: a header line `#vocab:` followed by the labels separated by
//! `|`, then one record per line:
//! `<clip_id>\t<relative_path>\t<comma-separated label indices>\t<split>`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::clip::{load_frames, VideoClip};
use super::vocab::LabelVocabulary;
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.tsv";
const VOCAB_PREFIX: &str = "#vocab:";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Val,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub id: String,
    pub path: PathBuf,
    pub labels: Vec<usize>,
    pub split: Split,
}

impl ManifestEntry {
    /// Class used for stratification and per-class subsampling.
    pub fn primary_label(&self) -> usize {
        self.labels[0]
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub vocab: LabelVocabulary,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn new(root: impl Into<PathBuf>, vocab: LabelVocabulary, entries: Vec<ManifestEntry>) -> Result<Self> {
        for (i, e) in entries.iter().enumerate() {
            if e.labels.is_empty() {
                return Err(Error::Manifest {
                    line: i + 2,
                    message: format!("{}: no labels", e.id),
                });
            }
            if let Some(&bad) = e.labels.iter().find(|&&l| l >= vocab.len()) {
                return Err(Error::Manifest {
                    line: i + 2,
                    message: format!("{}: label {bad} outside vocabulary", e.id),
                });
            }
        }
        Ok(Self {
            root: root.into(),
            vocab,
            entries,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn split(&self, split: Split) -> Vec<&ManifestEntry> {
        self.entries.iter().filter(|e| e.split == split).collect()
    }

    /// Copy keeping only the entries of one split.
    pub fn only(&self, split: Split) -> Self {
        Self {
            root: self.root.clone(),
            vocab: self.vocab.clone(),
            entries: self.entries.iter().filter(|e| e.split == split).cloned().collect(),
        }
    }

    pub fn load_clip(&self, entry: &ManifestEntry) -> Result<VideoClip> {
        let frames = load_frames(&self.root.join(&entry.path))?;
        VideoClip::new(entry.id.clone(), frames, entry.labels.clone(), self.vocab.len())
    }

    pub fn load_split(&self, split: Split) -> Result<Vec<VideoClip>> {
        self.split(split).into_iter().map(|e| self.load_clip(e)).collect()
    }

    /// Restricts to the given classes, remapping label indices into the
    /// returned sub-vocabulary. Entries left without labels are dropped.
    pub fn restrict_classes(&self, classes: &[usize]) -> Result<Self> {
        let vocab = self.vocab.subset(classes)?;
        let entries = self
            .entries
            .iter()
            .filter_map(|e| {
                let labels: Vec<usize> = e
                    .labels
                    .iter()
                    .filter_map(|l| classes.iter().position(|c| c == l))
                    .collect();
                (!labels.is_empty()).then(|| ManifestEntry {
                    labels,
                    ..e.clone()
                })
            })
            .collect();
        Self::new(self.root.clone(), vocab, entries)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{VOCAB_PREFIX}{}\n", self.vocab);
        for e in &self.entries {
            let labels: Vec<String> = e.labels.iter().map(usize::to_string).collect();
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                e.id,
                e.path.display(),
                labels.join(","),
                e.split
            ));
        }
        out
    }

    pub fn parse(root: impl Into<PathBuf>, text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let header = lines
            .next()
            .map(|(_, l)| l)
            .and_then(|l| l.strip_prefix(VOCAB_PREFIX))
            .ok_or_else(|| Error::Manifest {
                line: 1,
                message: format!("missing {VOCAB_PREFIX} header"),
            })?;
        let vocab = LabelVocabulary::new(header.split('|'))?;
        let mut entries = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |message: String| Error::Manifest { line: i + 1, message };
            let fields: Vec<&str> = line.split('\t').collect();
            let [id, path, labels, split] = fields[..] else {
                return Err(bad(format!("expected 4 tab-separated fields, got {}", fields.len())));
            };
            let labels = labels
                .split(',')
                .map(|s| s.trim().parse::<usize>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| bad(format!("bad label index: {e}")))?;
            entries.push(ManifestEntry {
                id: id.to_string(),
                path: PathBuf::from(path),
                labels,
                split: split.parse().map_err(bad)?,
            });
        }
        Self::new(root, vocab, entries)
    }

    pub fn save(&self) -> Result<PathBuf> {
        let path = self.root.join(MANIFEST_FILE);
        fs::write(&path, self.to_text()).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    /// Loads `dir/manifest.tsv`, or the given file directly. Every
    /// referenced clip must exist and decode.
    pub fn load(path: &Path) -> Result<Self> {
        let (root, file) = if path.is_dir() {
            (path.to_path_buf(), path.join(MANIFEST_FILE))
        } else {
            (
                path.parent().map(Path::to_path_buf).unwrap_or_default(),
                path.to_path_buf(),
            )
        };
        let text = fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
        let manifest = Self::parse(root, &text)?;
        for entry in &manifest.entries {
            manifest.load_clip(entry)?;
        }
        Ok(manifest)
    }
}

/// Deterministic stratified re-split into `(train, val)`.
///
/// The train total is `round(n · fraction)`, apportioned over classes by
/// largest remainder so each class is within one clip of the ratio.
pub fn split_manifest(
    manifest: &DatasetManifest,
    seed: u64,
    fraction: f64,
) -> Result<(DatasetManifest, DatasetManifest)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "split fraction must lie in (0, 1), got {fraction}"
        )));
    }
    if manifest.is_empty() {
        return Err(Error::EmptyDataset("cannot split an empty manifest".into()));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, e) in manifest.entries.iter().enumerate() {
        by_class.entry(e.primary_label()).or_default().push(i);
    }
    let total = (manifest.len() as f64 * fraction).round() as usize;
    let mut quotas: Vec<(usize, usize, f64)> = by_class
        .iter()
        .map(|(&c, members)| {
            let exact = members.len() as f64 * fraction;
            (c, exact.floor() as usize, exact - exact.floor())
        })
        .collect();
    let assigned: usize = quotas.iter().map(|q| q.1).sum();
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    order.sort_by(|&a, &b| quotas[b].2.total_cmp(&quotas[a].2).then(a.cmp(&b)));
    for &k in order.iter().take(total.saturating_sub(assigned)) {
        quotas[k].1 += 1;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut is_train = vec![false; manifest.len()];
    for (c, quota, _) in quotas {
        let mut members = by_class[&c].clone();
        members.shuffle(&mut rng);
        for &i in &members[..quota] {
            is_train[i] = true;
        }
    }
    let pick = |want: bool, split: Split| DatasetManifest {
        root: manifest.root.clone(),
        vocab: manifest.vocab.clone(),
        entries: manifest
            .entries
            .iter()
            .zip(&is_train)
            .filter(|(_, &t)| t == want)
            .map(|(e, _)| ManifestEntry {
                split,
                ..e.clone()
            })
            .collect(),
    };
    Ok((pick(true, Split::Train), pick(false, Split::Val)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn manifest(classes: usize, per_class: &[usize]) -> DatasetManifest {
        let vocab = LabelVocabulary::new((0..classes).map(|c| format!("class {c}"))).unwrap();
        let mut entries = Vec::new();
        for (c, &n) in per_class.iter().enumerate() {
            for i in 0..n {
                entries.push(ManifestEntry {
                    id: format!("c{c}_{i}"),
                    path: PathBuf::from(format!("clips/c{c}_{i}.vclip")),
                    labels: vec![c],
                    split: Split::Train,
                });
            }
        }
        DatasetManifest::new("/tmp", vocab, entries).unwrap()
    }

    #[test]
    fn text_round_trip() {
        let mut m = manifest(3, &[2, 1, 1]);
        m.entries[1].labels = vec![0, 2];
        m.entries[2].split = Split::Val;
        let text = m.to_text();
        assert!(text.starts_with("#vocab:class 0|class 1|class 2\n"));
        assert!(text.contains("c0_1\tclips/c0_1.vclip\t0,2\ttrain\n"));
        assert_eq!(DatasetManifest::parse("/tmp", &text).unwrap(), m);
    }

    #[test]
    fn malformed_records_rejected() {
        assert!(DatasetManifest::parse("/", "a\tb\t0\ttrain\n").is_err());
        assert!(DatasetManifest::parse("/", "#vocab:a\nx\tp\t0\n").is_err());
        assert!(DatasetManifest::parse("/", "#vocab:a\nx\tp\t1\ttrain\n").is_err());
        assert!(DatasetManifest::parse("/", "#vocab:a\nx\tp\t0\ttest\n").is_err());
    }

    #[test]
    fn eighty_twenty_split() {
        let m = manifest(4, &[25, 25, 25, 25]);
        let (train, val) = split_manifest(&m, 1, 0.8).unwrap();
        assert_eq!((train.len(), val.len()), (80, 20));
        let mut ids: Vec<&str> = train.entries.iter().chain(&val.entries).map(|e| e.id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), 100);
        assert!(val.entries.iter().all(|e| e.split == Split::Val));
    }

    #[test]
    fn split_is_deterministic() {
        let m = manifest(3, &[10, 7, 13]);
        assert_eq!(split_manifest(&m, 9, 0.7).unwrap(), split_manifest(&m, 9, 0.7).unwrap());
        assert_ne!(split_manifest(&m, 9, 0.7).unwrap().0, split_manifest(&m, 10, 0.7).unwrap().0);
    }

    #[test]
    fn split_preconditions() {
        let m = manifest(1, &[4]);
        assert!(split_manifest(&m, 0, 1.0).is_err());
        assert!(split_manifest(&m, 0, 0.0).is_err());
        assert!(split_manifest(&manifest(1, &[0]), 0, 0.5).is_err());
    }

    #[test]
    fn restrict_classes_remaps() {
        let m = manifest(4, &[1, 1, 1, 1]);
        let r = m.restrict_classes(&[3, 1]).unwrap();
        assert_eq!(r.vocab.labels(), &["class 3".to_string(), "class 1".to_string()]);
        assert_eq!(r.entries.len(), 2);
        assert_eq!(r.entries[0].labels, vec![1]);
        assert_eq!(r.entries[1].labels, vec![0]);
    }

    proptest! {
        #[test]
        fn stratified_within_one(
            counts in proptest::collection::vec(1usize..30, 1..6),
            fraction in 0.05f64..0.95,
            seed in any::<u64>(),
        ) {
            let m = manifest(counts.len(), &counts);
            let (train, val) = split_manifest(&m, seed, fraction).unwrap();
            prop_assert_eq!(train.len() + val.len(), m.len());
            prop_assert_eq!(train.len(), (m.len() as f64 * fraction).round() as usize);
            for (c, &n) in counts.iter().enumerate() {
                let got = train.entries.iter().filter(|e| e.labels[0] == c).count() as f64;
                prop_assert!((got - n as f64 * fraction).abs() <= 1.0 + 1e-9);
            }
        }
    }
}
