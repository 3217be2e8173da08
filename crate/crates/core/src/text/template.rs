//! Prompt templates: label strings wrapped in a slotted sentence.

use std::fmt;

use crate::error::{Error, Result};

pub const SLOT: &str = "{label}";

/// Where the label slot sits in the pattern.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PromptKind {
    /// Slot at the end: `a video of action {label}`.
    Prefix,
    /// Slot strictly inside: `human {label} in a scene`.
    Cloze,
    /// Slot at the start: `{label}, an action`.
    Suffix,
}

impl PromptKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PromptKind::Prefix => "prefix",
            PromptKind::Cloze => "cloze",
            PromptKind::Suffix => "suffix",
        }
    }
}

impl std::str::FromStr for PromptKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "prefix" => Ok(PromptKind::Prefix),
            "cloze" => Ok(PromptKind::Cloze),
            "suffix" => Ok(PromptKind::Suffix),
            other => Err(Error::Template {
                pattern: other.to_string(),
                message: "unknown template kind".into(),
            }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PromptTemplate {
    kind: PromptKind,
    pattern: String,
}

impl PromptTemplate {
    pub fn new(kind: PromptKind, pattern: impl Into<String>) -> Result<Self> {
        let pattern = pattern.into();
        let bad = |message: &str| {
            Err(Error::Template {
                pattern: pattern.clone(),
                message: message.to_string(),
            })
        };
        if pattern.matches(SLOT).count() != 1 {
            return bad("pattern must contain exactly one {label} slot");
        }
        let trimmed = pattern.trim();
        let at_start = trimmed.starts_with(SLOT);
        let at_end = trimmed.ends_with(SLOT);
        let consistent = match kind {
            PromptKind::Prefix => at_end && !at_start,
            PromptKind::Suffix => at_start && !at_end,
            PromptKind::Cloze => !at_start && !at_end,
        };
        if !consistent {
            return bad(match kind {
                PromptKind::Prefix => "prefix templates end with the slot",
                PromptKind::Suffix => "suffix templates start with the slot",
                PromptKind::Cloze => "cloze templates keep the slot strictly inside",
            });
        }
        Ok(Self { kind, pattern })
    }

    pub fn kind(&self) -> PromptKind {
        self.kind
    }

    pub fn pattern(&self) -> &str {
        &self.pattern
    }

    pub fn fill(&self, label: &str) -> String {
        self.pattern.replacen(SLOT, label, 1)
    }
}

impl fmt::Display for PromptTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t{}", self.kind.as_str(), self.pattern)
    }
}

pub fn fill_template(label: &str, template: &PromptTemplate) -> String {
    template.fill(label)
}

/// Parses the `<kind>\t<pattern>` asset format. Blank lines and lines
/// starting with `#` are skipped.
pub fn parse_templates(text: &str) -> Result<Vec<PromptTemplate>> {
    text.lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|line| {
            let (kind, pattern) = line.split_once('\t').ok_or_else(|| Error::Template {
                pattern: line.to_string(),
                message: "expected <kind>\\t<pattern>".into(),
            })?;
            PromptTemplate::new(kind.trim().parse()?, pattern)
        })
        .collect()
}

pub fn format_templates(templates: &[PromptTemplate]) -> String {
    templates.iter().map(|t| format!("{t}\n")).collect()
}

const DEFAULT_TEMPLATES: &str = include_str!("../../assets/templates.tsv");

/// The bundled set of 18 illustrative templates, six of each kind.
pub fn default_templates() -> Vec<PromptTemplate> {
    parse_templates(DEFAULT_TEMPLATES).expect("bundled templates are valid")
}
