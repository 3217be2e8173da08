//! Frame sampling, the frame-level vision transformer and the visual
//! prompts that make it temporal.

pub mod encoder;
pub mod input;
pub mod sampler;
pub mod temporal;

pub use encoder::{extract_patches, shift_groups, VideoEncoder, VisionConfig};
pub use input::{prepare_clip, stack_clips, SpatialConfig};
pub use sampler::{sample_segments, segment_bounds, SampleMode, SamplerConfig};
pub use temporal::{TemporalHead, VisualPromptKind};

use ndarray::Array2;
use rand::Rng;

use crate::data::Frames;
use crate::error::Result;
use crate::params::ParamStore;

/// Samples frames and crops each clip, then stacks them into one batch.
pub fn prepare_batch(
    clips: &[&Frames],
    num_frames: usize,
    spatial: SpatialConfig,
    mode: SampleMode,
    rng: &mut impl Rng,
) -> crate::autograd::Tensor {
    let prepared: Vec<Frames> = clips
        .iter()
        .map(|c| prepare_clip(c, num_frames, spatial, mode, rng))
        .collect();
    stack_clips(&prepared)
}

/// One embedding row per clip, from raw frames of any length and size.
pub fn encode_video(
    encoder: &VideoEncoder,
    store: &ParamStore,
    clips: &[&Frames],
    spatial: SpatialConfig,
    mode: SampleMode,
    rng: &mut impl Rng,
) -> Result<Array2<f64>> {
    let batch = prepare_batch(clips, encoder.config().frames, spatial, mode, rng);
    encoder.encode(store, &batch)
}
