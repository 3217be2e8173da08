//! Vision transformer over frames, with the three visual prompt families.

use std::ops::Range;

use ndarray::{Array3, Array5, Ix5};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::temporal::{TemporalHead, VisualPromptKind};
use crate::autograd::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::nn::{LayerNorm, Placement, Transformer};
use crate::params::{normal, zeros, Component, ParamGroupTag, ParamId, ParamScope, ParamStore};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VisionConfig {
    /// Input side after cropping (224 at full size).
    pub image_size: usize,
    /// Patch side (16 or 32 at full size).
    pub patch: usize,
    /// Transformer width (768 at full size).
    pub width: usize,
    /// Spatial blocks (12 at full size).
    pub layers: usize,
    pub heads: usize,
    /// Frames per clip, F.
    pub frames: usize,
    /// Blocks of the temporal transformer head (6 at full size).
    pub temporal_layers: usize,
    pub temporal_heads: usize,
    /// Temporal kernel of the Conv1D head.
    pub conv_kernel: usize,
}

impl Default for VisionConfig {
    fn default() -> Self {
        Self {
            image_size: 32,
            patch: 8,
            width: 64,
            layers: 2,
            heads: 4,
            frames: 8,
            temporal_layers: 2,
            temporal_heads: 4,
            conv_kernel: 3,
        }
    }
}

impl VisionConfig {
    pub fn patches(&self) -> usize {
        (self.image_size / self.patch).pow(2)
    }
}

/// Fraction of channels moved in each direction by the Shift prompt.
pub const SHIFT_DIVISOR: usize = 4;

/// Channel groups of the temporal shift: the first quarter reads the
/// previous frame, the second quarter the next frame.
pub fn shift_groups(width: usize) -> [(Range<usize>, isize); 2] {
    let fold = width / SHIFT_DIVISOR;
    [(0..fold, -1), (fold..2 * fold, 1)]
}

#[derive(Clone, Debug)]
pub struct VideoEncoder {
    pub prompt: VisualPromptKind,
    pub patch_projection: ParamId,
    pub class_token: ParamId,
    pub spatial_positional: ParamId,
    pub transformer: Transformer,
    pub ln_final: LayerNorm,
    pub projection: ParamId,
    /// Per-frame embedding added to patch tokens (Joint only).
    pub temporal_positional: Option<ParamId>,
    pub head: TemporalHead,
    cfg: VisionConfig,
}

impl VideoEncoder {
    pub fn new(
        store: &mut ParamStore,
        cfg: &VisionConfig,
        prompt: VisualPromptKind,
        embed_dim: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if cfg.patch == 0 || !cfg.image_size.is_multiple_of(cfg.patch) {
            return Err(Error::Config(format!(
                "image size {} not divisible by patch {}",
                cfg.image_size, cfg.patch
            )));
        }
        if cfg.frames == 0 {
            return Err(Error::Config("frames must be positive".into()));
        }
        let at = Placement::new(ParamGroupTag::Pretrained, Component::VisionEncoder);
        let w = cfg.width;
        let scale = (w as f64).powf(-0.5);
        let patch_dim = cfg.patch * cfg.patch * crate::data::clip::CHANNELS;
        let patch_projection = at.add(
            store,
            "vision.patch_projection".into(),
            normal(&[patch_dim, w], (patch_dim as f64).powf(-0.5), rng),
        );
        let class_token = at.add(store, "vision.class_token".into(), normal(&[w], scale, rng));
        let spatial_positional = at.add(
            store,
            "vision.spatial_positional".into(),
            normal(&[cfg.patches() + 1, w], scale, rng),
        );
        let transformer = Transformer::new(store, at, "vision.blocks", w, cfg.layers, cfg.heads, false, rng);
        let ln_final = LayerNorm::new(store, at, "vision.ln_final", w);
        let projection = at.add(store, "vision.projection".into(), normal(&[w, embed_dim], scale, rng));
        let temporal_positional = (prompt == VisualPromptKind::Joint).then(|| {
            Placement::new(ParamGroupTag::New, Component::TemporalHead).add(
                store,
                "vision.temporal_positional".into(),
                normal(&[cfg.frames, w], 0.02, rng),
            )
        });
        let head = TemporalHead::new(
            store,
            prompt,
            embed_dim,
            cfg.frames,
            cfg.temporal_layers,
            cfg.temporal_heads,
            cfg.conv_kernel,
            rng,
        );
        Ok(Self {
            prompt,
            patch_projection,
            class_token,
            spatial_positional,
            transformer,
            ln_final,
            projection,
            temporal_positional,
            head,
            cfg: cfg.clone(),
        })
    }

    pub fn config(&self) -> &VisionConfig {
        &self.cfg
    }

    fn check_input(&self, clips: &Tensor) -> Result<(usize, usize)> {
        let s = clips.shape();
        let size = self.cfg.image_size;
        if s.len() != 5 || s[2] != size || s[3] != size || s[4] != crate::data::clip::CHANNELS {
            return Err(Error::Shape(format!(
                "expected [batch, frames, {size}, {size}, 3] input, got {s:?}"
            )));
        }
        if s[1] != self.cfg.frames {
            return Err(Error::Shape(format!("encoder expects {} frames, got {}", self.cfg.frames, s[1])));
        }
        Ok((s[0], s[1]))
    }

    /// `[batch, frames, P + 1, width]`: projected patches with the class
    /// token prepended and spatial positions added.
    pub fn patchify<'g>(&self, scope: &ParamScope<'g, '_>, clips: &Tensor) -> Result<Var<'g>> {
        let (batch, frames) = self.check_input(clips)?;
        let patches = extract_patches(clips, self.cfg.patch)?;
        let p = patches.shape()[1];
        let tokens = scope.constant(patches).matmul(scope.param(self.patch_projection));
        let cls = scope
            .constant(zeros(&[batch * frames, 1, self.cfg.width]))
            .add(scope.param(self.class_token));
        let x = scope
            .graph()
            .concat(&[cls, tokens], 1)
            .add(scope.param(self.spatial_positional));
        Ok(x.reshape(&[batch, frames, p + 1, self.cfg.width]))
    }

    /// Per-frame features `[batch, frames, d]`, or `[batch, d]` for Joint.
    pub fn encode_spatial<'g>(&self, scope: &ParamScope<'g, '_>, tokens: Var<'g>) -> Result<Var<'g>> {
        let shape = tokens.shape();
        let (batch, frames, n, width) = (shape[0], shape[1], shape[2], shape[3]);
        let readout = |x: Var<'g>| self.ln_final.forward(scope, x).matmul(scope.param(self.projection));
        match self.prompt {
            VisualPromptKind::Joint => {
                let temporal = self.temporal_positional.ok_or_else(|| {
                    Error::Config("Joint prompt requires a temporal positional embedding".into())
                })?;
                let patches = n - 1;
                // Row f of the temporal table repeated for each patch of frame f.
                let rows: Vec<usize> = (0..frames).flat_map(|f| std::iter::repeat_n(f, patches)).collect();
                let temporal = scope
                    .param(temporal)
                    .gather_rows(&rows)
                    .reshape(&[frames, patches, width]);
                let patch_tokens = tokens
                    .slice_axis(2, 1..n)
                    .add(temporal)
                    .reshape(&[batch, frames * patches, width]);
                // One class token for the whole clip, taken from frame 0.
                let cls = tokens.select(1, 0).slice_axis(1, 0..1);
                let seq = scope.graph().concat(&[cls, patch_tokens], 1);
                let out = self.transformer.forward(scope, seq, false);
                Ok(readout(out.select(1, 0)))
            }
            VisualPromptKind::Shift => {
                let groups = shift_groups(width);
                let mut x = tokens;
                for block in &self.transformer.blocks {
                    x = x.shift_channels(1, &groups);
                    x = block
                        .forward(scope, x.reshape(&[batch * frames, n, width]), false)
                        .reshape(&[batch, frames, n, width]);
                }
                let cls = x.select(2, 0);
                Ok(readout(cls))
            }
            _ => {
                if self.temporal_positional.is_some() {
                    return Err(Error::Config(format!(
                        "{} prompt does not use a temporal positional embedding",
                        self.prompt
                    )));
                }
                let x = self
                    .transformer
                    .forward(scope, tokens.reshape(&[batch * frames, n, width]), false);
                let cls = x.select(1, 0);
                Ok(readout(cls).reshape(&[batch, frames, self.projection_dim(scope)]))
            }
        }
    }

    fn projection_dim(&self, scope: &ParamScope<'_, '_>) -> usize {
        scope.store().get(self.projection).value.shape()[1]
    }

    /// Video embeddings `[batch, d]` for an already sampled and cropped
    /// batch `[batch, frames, size, size, 3]`.
    pub fn forward<'g>(&self, scope: &ParamScope<'g, '_>, clips: &Tensor) -> Result<Var<'g>> {
        let tokens = self.patchify(scope, clips)?;
        let spatial = self.encode_spatial(scope, tokens)?;
        match self.prompt {
            VisualPromptKind::Joint => Ok(spatial),
            _ => self.head.forward(scope, spatial),
        }
    }

    pub fn encode(&self, store: &ParamStore, clips: &Tensor) -> Result<ndarray::Array2<f64>> {
        let graph = Graph::new();
        let scope = ParamScope::new(&graph, store);
        let out = self.forward(&scope, clips)?;
        let value = out.value().clone();
        Ok(value.into_dimensionality().expect("video features are 2-d"))
    }
}

/// `[batch·frames, P, patch²·3]` with patches in row-major order and pixels
/// flattened as (row, column, channel).
pub fn extract_patches(clips: &Tensor, patch: usize) -> Result<Tensor> {
    let clips = clips
        .view()
        .into_dimensionality::<Ix5>()
        .map_err(|_| Error::Shape("clip batch must be 5-d".into()))?;
    let (b, f, h, w, c) = clips.dim();
    if patch == 0 || h % patch != 0 || w % patch != 0 {
        return Err(Error::Shape(format!("{h}x{w} frames not divisible by patch {patch}")));
    }
    let (ph, pw) = (h / patch, w / patch);
    let mut out = Array3::<f64>::zeros((b * f, ph * pw, patch * patch * c));
    let src: Array5<f64> = clips.to_owned();
    for bi in 0..b {
        for fi in 0..f {
            let frame = bi * f + fi;
            for py in 0..ph {
                for px in 0..pw {
                    let mut k = 0;
                    for y in 0..patch {
                        for x in 0..patch {
                            for ch in 0..c {
                                out[[frame, py * pw + px, k]] = src[[bi, fi, py * patch + y, px * patch + x, ch]];
                                k += 1;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out.into_dyn())
}
