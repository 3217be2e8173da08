//! Segment-based frame sampling.
//!
//! The index range `[0, T)` is cut into `F` segments
//! `[⌊iT/F⌋, ⌊(i+1)T/F⌋)`. Training draws one index uniformly inside each
//! segment; evaluation takes the segment midpoint `start + ⌊len/2⌋`.
//! When `T < F` some segments are empty and yield their start index, so
//! frames repeat.

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleMode {
    Train,
    Eval,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SamplerConfig {
    pub num_frames: usize,
    pub mode: SampleMode,
}

pub fn segment_bounds(total: usize, num_frames: usize, i: usize) -> (usize, usize) {
    (i * total / num_frames, (i + 1) * total / num_frames)
}

pub fn sample_segments(total: usize, cfg: SamplerConfig, rng: &mut impl Rng) -> Vec<usize> {
    assert!(total >= 1, "cannot sample from an empty video");
    assert!(cfg.num_frames >= 1, "must sample at least one frame");
    (0..cfg.num_frames)
        .map(|i| {
            let (start, end) = segment_bounds(total, cfg.num_frames, i);
            let len = end - start;
            match cfg.mode {
                SampleMode::Eval => start + len / 2,
                SampleMode::Train if len == 0 => start,
                SampleMode::Train => rng.random_range(start..end),
            }
        })
        .collect()
}
