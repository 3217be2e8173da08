//! Closed-vocabulary word tokenizer.
//!
//! Text is lowercased and split on whitespace; ASCII punctuation becomes its
//! own token. Sequences are `[SOS, words.., EOS, PAD..]` of a fixed length.

use std::collections::{BTreeSet, HashMap};

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const SOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;
const SPECIALS: [&str; 4] = ["<pad>", "<sos>", "<eos>", "<unk>"];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenSequence {
    pub ids: Vec<usize>,
    pub eos_position: usize,
}

impl TokenSequence {
    /// Number of non-padding tokens.
    pub fn attention_len(&self) -> usize {
        self.eos_position + 1
    }
}

/// Splits text into lowercase word and punctuation tokens.
pub fn words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let mut word = String::new();
        for ch in chunk.chars().flat_map(char::to_lowercase) {
            if ch.is_ascii_punctuation() {
                if !word.is_empty() {
                    out.push(std::mem::take(&mut word));
                }
                out.push(ch.to_string());
            } else {
                word.push(ch);
            }
        }
        if !word.is_empty() {
            out.push(word);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Tokenizer {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Tokenizer {
    /// Builds the vocabulary from every word of `corpus`, sorted, after the
    /// four reserved tokens.
    pub fn build<S: AsRef<str>>(corpus: impl IntoIterator<Item = S>) -> Self {
        let mut set = BTreeSet::new();
        for text in corpus {
            set.extend(words(text.as_ref()));
        }
        let tokens = SPECIALS
            .iter()
            .map(|s| s.to_string())
            .chain(set.into_iter().filter(|w| !SPECIALS.contains(&w.as_str())))
            .collect();
        Self::from_tokens(tokens).expect("built vocabulary is valid")
    }

    fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < SPECIALS.len() || tokens[..SPECIALS.len()] != SPECIALS {
            return Err(Error::Config(
                "token vocabulary must start with <pad>, <sos>, <eos>, <unk>".into(),
            ));
        }
        let mut index = HashMap::new();
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.contains(char::is_whitespace) {
                return Err(Error::Config(format!("invalid token {t:?} on line {}", i + 1)));
            }
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Config(format!("duplicate token {t:?}")));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokenize(&self, text: &str, context_len: usize) -> TokenSequence {
        assert!(context_len >= 2, "context must hold SOS and EOS");
        let mut ids = Vec::with_capacity(context_len);
        ids.push(SOS);
        ids.extend(words(text).iter().take(context_len - 2).map(|w| self.id(w)));
        let eos_position = ids.len();
        ids.push(EOS);
        ids.resize(context_len, PAD);
        TokenSequence { ids, eos_position }
    }

    /// One token per line; the line number (from zero) is the id.
    pub fn to_text(&self) -> String {
        self.tokens.iter().map(|t| format!("{t}\n")).collect()
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_tokens(text.lines().map(str::to_string).collect())
    }
}
