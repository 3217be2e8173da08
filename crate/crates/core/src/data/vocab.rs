use std::fmt;

use crate::error::{Error, Result};

/// Ordered, duplicate-free list of class label strings. A label's position
/// is its class index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelVocabulary {
    labels: Vec<String>,
}

impl LabelVocabulary {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(Error::Vocabulary("no labels".into()));
        }
        for (i, label) in labels.iter().enumerate() {
            if label.trim().is_empty() {
                return Err(Error::Vocabulary(format!("label {i} is empty")));
            }
            if label.contains(['|', '\t', '\n', '\r']) {
                return Err(Error::Vocabulary(format!(
                    "label {label:?} contains a reserved separator"
                )));
            }
            if labels[..i].contains(label) {
                return Err(Error::Vocabulary(format!("duplicate label {label:?}")));
            }
        }
        Ok(Self { labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&str> {
        self.labels.get(index).map(String::as_str)
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.labels.iter().map(String::as_str)
    }

    /// Sub-vocabulary with the given class indices, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let labels = indices
            .iter()
            .map(|&i| {
                self.get(i)
                    .map(str::to_owned)
                    .ok_or_else(|| Error::Vocabulary(format!("index {i} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(labels)
    }

    /// Reads one label per non-empty line.
    pub fn parse_lines(text: &str) -> Result<Self> {
        Self::new(text.lines().map(str::trim).filter(|l| !l.is_empty()))
    }
}

impl fmt::Display for LabelVocabulary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.labels.join("|"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_duplicates_and_empties() {
        assert!(LabelVocabulary::new(["a", "a"]).is_err());
        assert!(LabelVocabulary::new([""]).is_err());
        assert!(LabelVocabulary::new(Vec::<String>::new()).is_err());
        assert!(LabelVocabulary::new(["a|b"]).is_err());
    }

    #[test]
    fn subset_keeps_requested_order() {
        let v = LabelVocabulary::new(["a", "b", "c"]).unwrap();
        let s = v.subset(&[2, 0]).unwrap();
        assert_eq!(s.labels(), &["c".to_string(), "a".to_string()]);
        assert_eq!(s.index_of("a"), Some(1));
    }
}
