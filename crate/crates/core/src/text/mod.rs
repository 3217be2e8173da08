//! Prompt filling, tokenization and the text encoder.

pub mod encoder;
pub mod template;
pub mod tokenizer;

pub use encoder::{embed_label_set, embed_prompted_labels, PromptMode, TextConfig, TextEncoder, TextPrompt};
pub use template::{default_templates, fill_template, format_templates, parse_templates, PromptKind, PromptTemplate};
pub use tokenizer::{TokenSequence, Tokenizer};
