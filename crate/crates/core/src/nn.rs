//! Transformer building blocks shared by the text and vision encoders.

use rand::Rng;

use crate::autograd::Var;
use crate::params::{normal, ones, zeros, Component, ParamGroupTag, ParamId, ParamScope, ParamStore};

const LN_EPS: f64 = 1e-5;

/// Where new parameters are registered.
#[derive(Clone, Copy, Debug)]
pub struct Placement {
    pub tag: ParamGroupTag,
    pub component: Component,
}

impl Placement {
    pub fn new(tag: ParamGroupTag, component: Component) -> Self {
        Self { tag, component }
    }

    pub fn add(&self, store: &mut ParamStore, name: String, value: crate::autograd::Tensor) -> ParamId {
        store.add(name, value, self.tag, self.component)
    }
}

/// `y = x · W (+ b)` with `W` stored `[in, out]`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        at: Placement,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        bias: bool,
        rng: &mut impl Rng,
    ) -> Self {
        let std = (fan_in as f64).powf(-0.5);
        let weight = at.add(store, format!("{name}.weight"), normal(&[fan_in, fan_out], std, rng));
        let bias = bias.then(|| at.add(store, format!("{name}.bias"), zeros(&[fan_out])));
        Self { weight, bias }
    }

    /// Same as [`Linear::new`] but with an all-zero weight, so the layer
    /// initially outputs its (zero) bias.
    pub fn zero_init(store: &mut ParamStore, at: Placement, name: &str, fan_in: usize, fan_out: usize) -> Self {
        let weight = at.add(store, format!("{name}.weight"), zeros(&[fan_in, fan_out]));
        let bias = Some(at.add(store, format!("{name}.bias"), zeros(&[fan_out])));
        Self { weight, bias }
    }

    pub fn forward<'g>(&self, scope: &ParamScope<'g, '_>, x: Var<'g>) -> Var<'g> {
        let y = x.matmul(scope.param(self.weight));
        match self.bias {
            Some(b) => y.add(scope.param(b)),
            None => y,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, at: Placement, name: &str, width: usize) -> Self {
        Self {
            gamma: at.add(store, format!("{name}.gamma"), ones(&[width])),
            beta: at.add(store, format!("{name}.beta"), zeros(&[width])),
        }
    }

    pub fn forward<'g>(&self, scope: &ParamScope<'g, '_>, x: Var<'g>) -> Var<'g> {
        x.layer_norm(scope.param(self.gamma), scope.param(self.beta), LN_EPS)
    }
}

/// Pre-norm transformer block: multi-head self-attention then a 4× MLP,
/// each wrapped in a residual connection.
#[derive(Clone, Debug)]
pub struct Block {
    heads: usize,
    width: usize,
    ln_attn: LayerNorm,
    qkv: Linear,
    attn_out: Linear,
    ln_mlp: LayerNorm,
    fc: Linear,
    mlp_out: Linear,
}

impl Block {
    /// `zero_residual` zero-initialises both residual output projections so
    /// the block starts as the identity map.
    pub fn new(
        store: &mut ParamStore,
        at: Placement,
        name: &str,
        width: usize,
        heads: usize,
        zero_residual: bool,
        rng: &mut impl Rng,
    ) -> Self {
        assert!(heads > 0 && width.is_multiple_of(heads), "width {width} not divisible by {heads} heads");
        let out = |store: &mut ParamStore, n: &str, fan_in, rng: &mut _| {
            if zero_residual {
                Linear::zero_init(store, at, n, fan_in, width)
            } else {
                Linear::new(store, at, n, fan_in, width, true, rng)
            }
        };
        Self {
            heads,
            width,
            ln_attn: LayerNorm::new(store, at, &format!("{name}.ln_attn"), width),
            qkv: Linear::new(store, at, &format!("{name}.attn.qkv"), width, 3 * width, true, rng),
            attn_out: out(store, &format!("{name}.attn.out"), width, rng),
            ln_mlp: LayerNorm::new(store, at, &format!("{name}.ln_mlp"), width),
            fc: Linear::new(store, at, &format!("{name}.mlp.fc"), width, 4 * width, true, rng),
            mlp_out: out(store, &format!("{name}.mlp.out"), 4 * width, rng),
        }
    }

    /// `x` is `[batch, tokens, width]`.
    pub fn forward<'g>(&self, scope: &ParamScope<'g, '_>, x: Var<'g>, causal: bool) -> Var<'g> {
        let shape = x.shape();
        let (batch, tokens) = (shape[0], shape[1]);
        let head_dim = self.width / self.heads;

        let h = self.ln_attn.forward(scope, x);
        let qkv = self.qkv.forward(scope, h);
        let split = |i: usize| {
            qkv.slice_axis(2, i * self.width..(i + 1) * self.width)
                .reshape(&[batch, tokens, self.heads, head_dim])
                .permute(&[0, 2, 1, 3])
                .reshape(&[batch * self.heads, tokens, head_dim])
        };
        let (q, k, v) = (split(0), split(1), split(2));
        let attn = q
            .bmm(k, true)
            .scale((head_dim as f64).powf(-0.5))
            .softmax(causal);
        let mixed = attn
            .bmm(v, false)
            .reshape(&[batch, self.heads, tokens, head_dim])
            .permute(&[0, 2, 1, 3])
            .reshape(&[batch, tokens, self.width]);
        let x = x.add(self.attn_out.forward(scope, mixed));

        let h = self.ln_mlp.forward(scope, x);
        let h = self.fc.forward(scope, h).quick_gelu();
        x.add(self.mlp_out.forward(scope, h))
    }
}

/// A stack of [`Block`]s.
#[derive(Clone, Debug)]
pub struct Transformer {
    pub blocks: Vec<Block>,
}

impl Transformer {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        at: Placement,
        name: &str,
        width: usize,
        layers: usize,
        heads: usize,
        zero_residual: bool,
        rng: &mut impl Rng,
    ) -> Self {
        let blocks = (0..layers)
            .map(|i| Block::new(store, at, &format!("{name}.{i}"), width, heads, zero_residual, rng))
            .collect();
        Self { blocks }
    }

    pub fn forward<'g>(&self, scope: &ParamScope<'g, '_>, mut x: Var<'g>, causal: bool) -> Var<'g> {
        for block in &self.blocks {
            x = block.forward(scope, x, causal);
        }
        x
    }
}
