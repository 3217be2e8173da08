//! Turns clips into the `[batch, frames, size, size, 3]` model input.

use ndarray::{Array5, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::sampler::{sample_segments, SampleMode, SamplerConfig};
use crate::autograd::Tensor;
use crate::data::transform::{center_offset, crop, random_offset, resize_shorter, select_frames};
use crate::data::Frames;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpatialConfig {
    /// Shorter side after resizing.
    pub resize: usize,
    /// Side of the square crop fed to the model (224 at full size).
    pub crop: usize,
}

impl Default for SpatialConfig {
    fn default() -> Self {
        Self { resize: 32, crop: 32 }
    }
}

/// Frame sampling and spatial crop for one clip: random crop in training,
/// centre crop in evaluation.
pub fn prepare_clip(frames: &Frames, num_frames: usize, spatial: SpatialConfig, mode: SampleMode, rng: &mut impl Rng) -> Frames {
    let cfg = SamplerConfig { num_frames, mode };
    let indices = sample_segments(frames.shape()[0], cfg, rng);
    let picked = resize_shorter(&select_frames(frames, &indices), spatial.resize);
    let (_, h, w, _) = picked.dim();
    let (top, left) = match mode {
        SampleMode::Train => random_offset(h, w, spatial.crop, rng),
        SampleMode::Eval => center_offset(h, w, spatial.crop),
    };
    crop(&picked, top, left, spatial.crop)
}

/// Stacks equally sized clips into an `f64` batch tensor.
pub fn stack_clips(clips: &[Frames]) -> Tensor {
    let views: Vec<_> = clips.iter().map(|c| c.view().insert_axis(Axis(0))).collect();
    let stacked: Array5<f32> = ndarray::concatenate(Axis(0), &views).expect("clips differ in shape");
    stacked.mapv(f64::from).into_dyn()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array4;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn eval_preparation_is_deterministic_and_sized() {
        let frames = Array4::from_shape_fn((10, 40, 48, 3), |(t, y, x, c)| ((t + y + x + c) % 7) as f32 / 7.0);
        let spatial = SpatialConfig { resize: 36, crop: 32 };
        let a = prepare_clip(&frames, 4, spatial, SampleMode::Eval, &mut ChaCha8Rng::seed_from_u64(1));
        let b = prepare_clip(&frames, 4, spatial, SampleMode::Eval, &mut ChaCha8Rng::seed_from_u64(2));
        assert_eq!(a.dim(), (4, 32, 32, 3));
        assert_eq!(a, b);
        let batch = stack_clips(&[a.clone(), b]);
        assert_eq!(batch.shape(), &[2, 4, 32, 32, 3]);
    }
}
