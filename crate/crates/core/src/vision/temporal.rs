//! Post-network temporal heads: `[batch, frames, d]` → `[batch, d]`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::Var;
use crate::error::{Error, Result};
use crate::nn::{Linear, Placement, Transformer};
use crate::params::{normal, zeros, Component, ParamGroupTag, ParamId, ParamScope, ParamStore};

/// Where and how temporal information enters the video encoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VisualPromptKind {
    /// Pre-network: temporal position embeddings, all frames' patches in
    /// one sequence.
    Joint,
    /// In-network: parameter-free channel shift between neighbouring frames
    /// before every block.
    Shift,
    #[serde(rename = "meanp")]
    MeanP,
    #[serde(rename = "conv1d")]
    Conv1D,
    #[serde(rename = "lstm")]
    Lstm,
    Transf,
    TransfCls,
}

impl VisualPromptKind {
    pub const ALL: [VisualPromptKind; 7] = [
        VisualPromptKind::MeanP,
        VisualPromptKind::Conv1D,
        VisualPromptKind::Lstm,
        VisualPromptKind::Transf,
        VisualPromptKind::TransfCls,
        VisualPromptKind::Joint,
        VisualPromptKind::Shift,
    ];

    pub fn name(self) -> &'static str {
        match self {
            VisualPromptKind::Joint => "joint",
            VisualPromptKind::Shift => "shift",
            VisualPromptKind::MeanP => "meanp",
            VisualPromptKind::Conv1D => "conv1d",
            VisualPromptKind::Lstm => "lstm",
            VisualPromptKind::Transf => "transf",
            VisualPromptKind::TransfCls => "transf_cls",
        }
    }

    /// Name as printed in result tables.
    pub fn label(self) -> &'static str {
        match self {
            VisualPromptKind::Joint => "Joint",
            VisualPromptKind::Shift => "Shift",
            VisualPromptKind::MeanP => "MeanP",
            VisualPromptKind::Conv1D => "Conv1D",
            VisualPromptKind::Lstm => "LSTM",
            VisualPromptKind::Transf => "Transf",
            VisualPromptKind::TransfCls => "Transf_cls",
        }
    }

    pub fn family(self) -> &'static str {
        match self {
            VisualPromptKind::Joint => "pre-network",
            VisualPromptKind::Shift => "in-network",
            _ => "post-network",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s.to_ascii_lowercase())
    }

    pub fn is_post_network(self) -> bool {
        !matches!(self, VisualPromptKind::Joint | VisualPromptKind::Shift)
    }
}

impl std::fmt::Display for VisualPromptKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug)]
pub struct ConvHead {
    pub kernel: usize,
    pub proj: Linear,
}

#[derive(Clone, Debug)]
pub struct LstmHead {
    pub input: ParamId,
    pub hidden: ParamId,
    pub bias: ParamId,
}

#[derive(Clone, Debug)]
pub struct TransformerHead {
    pub positional: ParamId,
    pub class_token: Option<ParamId>,
    pub transformer: Transformer,
}

#[derive(Clone, Debug)]
pub enum TemporalHead {
    MeanP,
    Conv1D(ConvHead),
    Lstm(LstmHead),
    Transf(TransformerHead),
    TransfCls(TransformerHead),
}

/// Initial scale of the temporal transformer's frame embedding. Frame
/// features are of unit scale, so this makes order visible from the first
/// step; with zero-initialised blocks the head still starts as MeanP plus
/// a constant.
pub const POSITIONAL_STD: f64 = 1.0;

fn placement() -> Placement {
    Placement::new(ParamGroupTag::New, Component::TemporalHead)
}

impl TemporalHead {
    /// Builds the head for a post-network prompt kind. `Joint` and `Shift`
    /// pool with a plain mean.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        kind: VisualPromptKind,
        dim: usize,
        frames: usize,
        layers: usize,
        heads: usize,
        kernel: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let at = placement();
        match kind {
            VisualPromptKind::MeanP | VisualPromptKind::Joint | VisualPromptKind::Shift => TemporalHead::MeanP,
            VisualPromptKind::Conv1D => {
                assert!(kernel % 2 == 1, "temporal kernel must be odd");
                // Centre tap starts as the identity so the head starts as a
                // mean pool.
                let mut w = zeros(&[kernel * dim, dim]);
                let centre = kernel / 2;
                for i in 0..dim {
                    w[[centre * dim + i, i]] = 1.0;
                }
                let weight = at.add(store, "temporal.conv.weight".into(), w);
                let bias = Some(at.add(store, "temporal.conv.bias".into(), zeros(&[dim])));
                TemporalHead::Conv1D(ConvHead {
                    kernel,
                    proj: Linear { weight, bias },
                })
            }
            VisualPromptKind::Lstm => {
                let std = (dim as f64).powf(-0.5);
                let mut bias = zeros(&[4 * dim]);
                // Forget gate bias 1.
                bias.slice_mut(ndarray::s![dim..2 * dim]).fill(1.0);
                TemporalHead::Lstm(LstmHead {
                    input: at.add(store, "temporal.lstm.input".into(), normal(&[dim, 4 * dim], std, rng)),
                    hidden: at.add(store, "temporal.lstm.hidden".into(), normal(&[dim, 4 * dim], std, rng)),
                    bias: at.add(store, "temporal.lstm.bias".into(), bias),
                })
            }
            VisualPromptKind::Transf | VisualPromptKind::TransfCls => {
                let with_cls = kind == VisualPromptKind::TransfCls;
                let tokens = frames + usize::from(with_cls);
                let head = TransformerHead {
                    positional: at.add(store, "temporal.positional".into(), normal(&[tokens, dim], POSITIONAL_STD, rng)),
                    class_token: with_cls
                        .then(|| at.add(store, "temporal.class_token".into(), normal(&[dim], 0.02, rng))),
                    transformer: Transformer::new(store, at, "temporal.blocks", dim, layers, heads, true, rng),
                };
                if with_cls {
                    TemporalHead::TransfCls(head)
                } else {
                    TemporalHead::Transf(head)
                }
            }
        }
    }

    pub fn kind(&self) -> VisualPromptKind {
        match self {
            TemporalHead::MeanP => VisualPromptKind::MeanP,
            TemporalHead::Conv1D(_) => VisualPromptKind::Conv1D,
            TemporalHead::Lstm(_) => VisualPromptKind::Lstm,
            TemporalHead::Transf(_) => VisualPromptKind::Transf,
            TemporalHead::TransfCls(_) => VisualPromptKind::TransfCls,
        }
    }

    pub fn forward<'g>(&self, scope: &ParamScope<'g, '_>, u: Var<'g>) -> Result<Var<'g>> {
        let shape = u.shape();
        if shape.len() != 3 {
            return Err(Error::Shape(format!("temporal head expects [batch, frames, d], got {shape:?}")));
        }
        let (batch, frames, dim) = (shape[0], shape[1], shape[2]);
        if frames == 0 {
            return Err(Error::Shape("temporal head needs at least one frame".into()));
        }
        Ok(match self {
            TemporalHead::MeanP => u.mean_axis(1),
            TemporalHead::Conv1D(conv) => {
                let half = (conv.kernel / 2) as isize;
                // Tap k sees frame t + k - half, zero outside the clip.
                let taps: Vec<Var<'g>> = (-half..=half)
                    .map(|offset| u.shift_channels(1, &[(0..dim, offset)]))
                    .collect();
                let stacked = scope.graph().concat(&taps, 2);
                conv.proj.forward(scope, stacked).mean_axis(1)
            }
            TemporalHead::Lstm(lstm) => {
                let (wi, wh, b) = (scope.param(lstm.input), scope.param(lstm.hidden), scope.param(lstm.bias));
                let mut h = scope.constant(zeros(&[batch, dim]));
                let mut c = scope.constant(zeros(&[batch, dim]));
                let mut outputs = Vec::with_capacity(frames);
                for t in 0..frames {
                    let gates = u.select(1, t).matmul(wi).add(h.matmul(wh)).add(b);
                    let gate = |k: usize| gates.slice_axis(1, k * dim..(k + 1) * dim);
                    let (i, f, g, o) = (gate(0).sigmoid(), gate(1).sigmoid(), gate(2).tanh(), gate(3).sigmoid());
                    c = f.mul(c).add(i.mul(g));
                    h = o.mul(c.tanh());
                    outputs.push(h);
                }
                scope.graph().stack(&outputs, 1).mean_axis(1)
            }
            TemporalHead::Transf(head) => {
                let pos = scope.param(head.positional);
                check_frames(pos, frames, 0)?;
                let x = u.add(pos);
                head.transformer.forward(scope, x, false).mean_axis(1)
            }
            TemporalHead::TransfCls(head) => {
                let pos = scope.param(head.positional);
                check_frames(pos, frames, 1)?;
                let cls = scope
                    .constant(zeros(&[batch, 1, dim]))
                    .add(scope.param(head.class_token.expect("TransfCls has a class token")));
                let x = scope.graph().concat(&[cls, u], 1).add(pos);
                head.transformer.forward(scope, x, false).select(1, 0)
            }
        })
    }
}

fn check_frames(pos: Var<'_>, frames: usize, extra: usize) -> Result<()> {
    let expected = pos.shape()[0];
    if expected != frames + extra {
        return Err(Error::Shape(format!(
            "temporal head built for {} frames, got {frames}",
            expected - extra
        )));
    }
    Ok(())
}
