//! Video-text dual encoder with textual and visual prompts, trained with a
//! multi-positive KL matching loss, plus matching-based zero- and few-shot
//! recognition.
//!
//! The guide in `book/` walks through the modules; its listings run as
//! doctests of this crate.

pub mod ablation;
pub mod autograd;
pub mod config;
pub mod data;
pub mod error;
pub mod inference;
pub mod model;
pub mod nn;
pub mod objective;
pub mod params;
pub mod text;
pub mod train;
pub mod vision;

pub use error::{Error, ErrorKind, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/text-prompts.md")]
    mod text_prompts {}
    #[doc = include_str!("../../../book/src/visual-prompts.md")]
    mod visual_prompts {}
    #[doc = include_str!("../../../book/src/objective.md")]
    mod objective {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/inference.md")]
    mod inference {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
