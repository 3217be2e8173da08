//! Sweeps one experimental axis and tabulates validation accuracy.

use std::fmt;
use std::str::FromStr;

use crate::config::{ExperimentConfig, FreezeConfig, ViewSet};
use crate::data::{DatasetManifest, Split};
use crate::error::{Error, Result};
use crate::inference::evaluate;
use crate::train::{fit, Checkpoint};
use crate::vision::VisualPromptKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    /// All seven visual prompts.
    VisualPrompt,
    /// Bare labels against template-filled prompts.
    TextualPrompt,
    /// Every combination of frozen text and vision encoders.
    Freeze,
    /// Linear classifier head against video-text matching.
    Modality,
}

impl Axis {
    pub const ALL: [Axis; 4] = [Axis::VisualPrompt, Axis::TextualPrompt, Axis::Freeze, Axis::Modality];

    pub fn name(self) -> &'static str {
        match self {
            Axis::VisualPrompt => "visual-prompt",
            Axis::TextualPrompt => "textual-prompt",
            Axis::Freeze => "freeze",
            Axis::Modality => "modality",
        }
    }

    /// Configurations of the sweep, each with its row labels.
    pub fn variants(self, base: &ExperimentConfig) -> Vec<(Vec<String>, ExperimentConfig)> {
        let with = |f: &dyn Fn(&mut ExperimentConfig)| {
            let mut cfg = base.clone();
            f(&mut cfg);
            cfg
        };
        match self {
            Axis::VisualPrompt => VisualPromptKind::ALL
                .into_iter()
                .map(|k| {
                    let labels = vec![k.label().to_string(), k.family().to_string()];
                    (labels, with(&|c| c.model.visual_prompt = k))
                })
                .collect(),
            Axis::TextualPrompt => [(false, "only label"), (true, "textual prompt")]
                .into_iter()
                .map(|(on, name)| (vec![name.to_string()], with(&|c| c.prompt.text_prompt = on)))
                .collect(),
            Axis::Freeze => [(true, true), (true, false), (false, true), (false, false)]
                .into_iter()
                .map(|(text, vision)| {
                    let mark = |frozen: bool| if frozen { "frozen" } else { "tuned" }.to_string();
                    (vec![mark(text), mark(vision)], with(&|c| c.freeze = FreezeConfig { text, vision }))
                })
                .collect(),
            Axis::Modality => [(true, "unimodality"), (false, "multimodality")]
                .into_iter()
                .map(|(uni, name)| (vec![name.to_string()], with(&|c| c.model.unimodal = uni)))
                .collect(),
        }
    }

    fn key_columns(self) -> &'static [&'static str] {
        match self {
            Axis::VisualPrompt => &["visual_prompt", "family"],
            Axis::TextualPrompt => &["text_input"],
            Axis::Freeze => &["text_encoder", "vision_encoder"],
            Axis::Modality => &["model"],
        }
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Axis::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown ablation axis {s:?}; expected one of visual-prompt, textual-prompt, freeze, modality")))
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub labels: Vec<String>,
    pub top1: f64,
    pub top5: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationTable {
    pub axis: Axis,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    /// Tab-separated table with a header line; accuracies in percent.
    pub fn to_tsv(&self) -> String {
        let mut out = self.axis.key_columns().join("\t");
        out.push_str("\ttop1\ttop5\n");
        for row in &self.rows {
            out.push_str(&format!("{}\t{:.1}\t{:.1}\n", row.labels.join("\t"), 100.0 * row.top1, 100.0 * row.top5));
        }
        out
    }
}

/// Trains and evaluates every variant of `axis` on `manifest`'s train and
/// validation splits.
pub fn run_ablation(axis: Axis, manifest: &DatasetManifest, base: &ExperimentConfig, init: Option<&Checkpoint>) -> Result<AblationTable> {
    let val = manifest.load_split(Split::Val)?;
    if val.is_empty() {
        return Err(Error::EmptyDataset("ablation needs a validation split".into()));
    }
    let mut rows = Vec::new();
    for (labels, cfg) in axis.variants(base) {
        log::info!("ablation {axis}: {}", labels.join(" "));
        let result = fit(manifest, &cfg, init)?;
        let eval = evaluate(&result.model, &val, &manifest.vocab, &cfg.prompt.text_prompt()?, &ViewSet::single(), cfg.input)?;
        rows.push(AblationRow {
            labels,
            top1: eval.top1,
            top5: eval.top5,
        });
    }
    Ok(AblationTable { axis, rows })
}
