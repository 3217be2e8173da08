//! Define-by-run reverse-mode automatic differentiation over dense `f64`
//! tensors.
//!
//! A [`Graph`] records every operation applied to its [`Var`]s. Calling
//! [`Graph::backward`] on a scalar walks the recorded nodes in reverse and
//! returns the gradient of that scalar with respect to every node that
//! requires one. Nodes built only from constants carry no backward closure,
//! so frozen sub-networks cost nothing on the way back.

use std::cell::{Ref, RefCell};
use std::ops::Range;

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, Array3, ArrayD, ArrayView2, Axis, IxDyn, Slice};

/// Dense row-major tensor used throughout the crate.
pub type Tensor = ArrayD<f64>;

type BackwardFn = Box<dyn Fn(&Tensor, &[&Tensor], &Tensor) -> Vec<Option<Tensor>>>;

struct Node {
    value: Tensor,
    parents: Vec<usize>,
    backward: Option<BackwardFn>,
    requires_grad: bool,
}

/// Tape of recorded operations.
#[derive(Default)]
pub struct Graph {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy)]
pub struct Var<'g> {
    graph: &'g Graph,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("shape", &self.shape())
            .finish()
    }
}

/// Gradients produced by [`Graph::backward`], indexed by node.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var<'_>) -> Option<&Tensor> {
        self.grads.get(var.id).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: Var<'_>) -> Option<Tensor> {
        self.grads.get_mut(var.id).and_then(Option::take)
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A value that never receives a gradient.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.insert(Node {
            value: as_standard(value),
            parents: Vec::new(),
            backward: None,
            requires_grad: false,
        })
    }

    /// A differentiable input.
    pub fn leaf(&self, value: Tensor) -> Var<'_> {
        self.insert(Node {
            value: as_standard(value),
            parents: Vec::new(),
            backward: None,
            requires_grad: true,
        })
    }

    fn insert(&self, node: Node) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(node);
        Var {
            graph: self,
            id: nodes.len() - 1,
        }
    }

    /// Records an operation with a hand-written backward rule.
    ///
    /// `backward` receives the incoming gradient, the input values and the
    /// output value, and returns one gradient per input (`None` where the
    /// input is not differentiable).
    pub fn custom<'g, F>(&'g self, inputs: &[Var<'g>], value: Tensor, backward: F) -> Var<'g>
    where
        F: Fn(&Tensor, &[&Tensor], &Tensor) -> Vec<Option<Tensor>> + 'static,
    {
        let parents: Vec<usize> = inputs.iter().map(|v| v.id).collect();
        let requires_grad = {
            let nodes = self.nodes.borrow();
            parents.iter().any(|&p| nodes[p].requires_grad)
        };
        self.insert(Node {
            value: as_standard(value),
            parents,
            backward: requires_grad.then(|| Box::new(backward) as BackwardFn),
            requires_grad,
        })
    }

    /// Concatenates along an existing axis.
    pub fn concat<'g>(&'g self, vars: &[Var<'g>], axis: usize) -> Var<'g> {
        assert!(!vars.is_empty(), "concat of zero tensors");
        let (value, sizes) = {
            let values: Vec<Ref<'_, Tensor>> = vars.iter().map(|v| v.value()).collect();
            let views: Vec<_> = values.iter().map(|v| v.view()).collect();
            let sizes: Vec<usize> = values.iter().map(|v| v.shape()[axis]).collect();
            (
                ndarray::concatenate(Axis(axis), &views).expect("concat shape mismatch"),
                sizes,
            )
        };
        self.custom(vars, value, move |g, _, _| {
            let mut start = 0;
            sizes
                .iter()
                .map(|&n| {
                    let part = g
                        .slice_axis(Axis(axis), Slice::from(start..start + n))
                        .to_owned();
                    start += n;
                    Some(part)
                })
                .collect()
        })
    }

    /// Stacks equally shaped tensors along a new axis.
    pub fn stack<'g>(&'g self, vars: &[Var<'g>], axis: usize) -> Var<'g> {
        let expanded: Vec<Var<'g>> = vars.iter().map(|v| v.unsqueeze(axis)).collect();
        self.concat(&expanded, axis)
    }

    /// Back-propagates from a single-element `root`.
    pub fn backward(&self, root: Var<'_>) -> Gradients {
        let nodes = self.nodes.borrow();
        assert_eq!(nodes[root.id].value.len(), 1, "backward root must be a scalar");
        let mut grads: Vec<Option<Tensor>> = vec![None; root.id + 1];
        grads[root.id] = Some(Tensor::ones(nodes[root.id].value.raw_dim()));
        for id in (0..=root.id).rev() {
            let node = &nodes[id];
            let Some(backward) = node.backward.as_ref() else {
                continue;
            };
            let Some(grad) = grads[id].take() else {
                continue;
            };
            let inputs: Vec<&Tensor> = node.parents.iter().map(|&p| &nodes[p].value).collect();
            let parent_grads = backward(&grad, &inputs, &node.value);
            debug_assert_eq!(parent_grads.len(), node.parents.len());
            for (&p, pg) in node.parents.iter().zip(parent_grads) {
                let Some(pg) = pg else { continue };
                if !nodes[p].requires_grad {
                    continue;
                }
                debug_assert_eq!(pg.shape(), nodes[p].value.shape());
                match &mut grads[p] {
                    Some(acc) => *acc += &pg,
                    slot @ None => *slot = Some(pg),
                }
            }
            grads[id] = Some(grad);
        }
        Gradients { grads }
    }
}

fn as_standard(t: Tensor) -> Tensor {
    if t.is_standard_layout() {
        t
    } else {
        t.as_standard_layout().into_owned()
    }
}

fn is_suffix(short: &[usize], long: &[usize]) -> bool {
    short.len() <= long.len() && long[long.len() - short.len()..] == *short
}

/// Sums `g` over leading axes so that it takes the suffix shape `shape`.
fn sum_to_suffix(g: &Tensor, shape: &[usize]) -> Tensor {
    if g.shape() == shape {
        return g.clone();
    }
    let inner: usize = shape.iter().product();
    let outer = g.len() / inner.max(1);
    let flat = g
        .to_shape((outer, inner))
        .expect("gradient reshape")
        .sum_axis(Axis(0));
    flat.into_shape_with_order(IxDyn(shape))
        .expect("gradient reshape")
}

fn to_2d(t: &Tensor) -> ArrayView2<'_, f64> {
    let k = *t.shape().last().expect("matmul on a scalar");
    let m = t.len() / k.max(1);
    t.view()
        .into_shape_with_order((m, k))
        .expect("tensor is not contiguous")
}

/// `out[i] = op(a[i]) · op(b[i])` for every batch entry.
fn batched_matmul(a: &Tensor, b: &Tensor, trans_a: bool, trans_b: bool) -> Tensor {
    let a3 = a.view().into_dimensionality::<ndarray::Ix3>().expect("bmm lhs must be 3-d");
    let b3 = b.view().into_dimensionality::<ndarray::Ix3>().expect("bmm rhs must be 3-d");
    assert_eq!(a3.shape()[0], b3.shape()[0], "bmm batch mismatch");
    let batch = a3.shape()[0];
    let (m, ka) = if trans_a {
        (a3.shape()[2], a3.shape()[1])
    } else {
        (a3.shape()[1], a3.shape()[2])
    };
    let (kb, n) = if trans_b {
        (b3.shape()[2], b3.shape()[1])
    } else {
        (b3.shape()[1], b3.shape()[2])
    };
    assert_eq!(ka, kb, "bmm inner dimension mismatch");
    let mut out = Array3::<f64>::zeros((batch, m, n));
    for i in 0..batch {
        let ai = a3.index_axis(Axis(0), i);
        let bi = b3.index_axis(Axis(0), i);
        let ai = if trans_a { ai.reversed_axes() } else { ai };
        let bi = if trans_b { bi.reversed_axes() } else { bi };
        general_mat_mul(1.0, &ai, &bi, 0.0, &mut out.index_axis_mut(Axis(0), i));
    }
    out.into_dyn()
}

/// Moves channel ranges along `axis`: `out[t][c] = x[t + offset][c]` for `c`
/// in the range, zero where `t + offset` falls outside. Other channels copy.
pub fn shift_channels(x: &Tensor, axis: usize, groups: &[(Range<usize>, isize)]) -> Tensor {
    let mut out = x.clone();
    let frames = x.shape()[axis] as isize;
    let last = x.ndim() - 1;
    for (range, offset) in groups {
        if range.is_empty() {
            continue;
        }
        for t in 0..frames {
            let src = t + offset;
            let mut dst = out.index_axis_mut(Axis(axis), t as usize);
            let last_dst = last - 1;
            let mut dst = dst.slice_axis_mut(Axis(last_dst), Slice::from(range.clone()));
            if (0..frames).contains(&src) {
                let from = x.index_axis(Axis(axis), src as usize);
                dst.assign(&from.slice_axis(Axis(last_dst), Slice::from(range.clone())));
            } else {
                dst.fill(0.0);
            }
        }
    }
    out
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

// Tape operations, named after the arithmetic they record.
#[allow(clippy::should_implement_trait)]
impl<'g> Var<'g> {
    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Ref<'g, Tensor> {
        Ref::map(self.graph.nodes.borrow(), |n| &n[self.id].value)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.graph.nodes.borrow()[self.id].requires_grad
    }

    /// Value of a one-element tensor.
    pub fn scalar(&self) -> f64 {
        let v = self.value();
        assert_eq!(v.len(), 1, "not a scalar");
        *v.iter().next().unwrap()
    }

    fn unary(
        self,
        value: Tensor,
        backward: impl Fn(&Tensor, &[&Tensor], &Tensor) -> Vec<Option<Tensor>> + 'static,
    ) -> Var<'g> {
        self.graph.custom(&[self], value, backward)
    }

    /// Elementwise sum. `other` may also be a suffix-shaped tensor that is
    /// broadcast over the leading axes (and vice versa).
    pub fn add(self, other: Var<'g>) -> Var<'g> {
        let (sa, sb) = (self.shape(), other.shape());
        if sa != sb && is_suffix(&sa, &sb) {
            return other.add(self);
        }
        assert!(is_suffix(&sb, &sa), "add shape mismatch {sa:?} vs {sb:?}");
        let value = &*self.value() + &*other.value();
        self.graph.custom(&[self, other], value, move |g, _, _| {
            vec![Some(g.clone()), Some(sum_to_suffix(g, &sb))]
        })
    }

    pub fn sub(self, other: Var<'g>) -> Var<'g> {
        self.add(other.scale(-1.0))
    }

    /// Elementwise product with the same suffix broadcasting as [`Var::add`].
    pub fn mul(self, other: Var<'g>) -> Var<'g> {
        let (sa, sb) = (self.shape(), other.shape());
        if sa != sb && is_suffix(&sa, &sb) {
            return other.mul(self);
        }
        assert!(is_suffix(&sb, &sa), "mul shape mismatch {sa:?} vs {sb:?}");
        let value = &*self.value() * &*other.value();
        self.graph.custom(&[self, other], value, move |g, x, _| {
            let ga = g * x[1];
            let gb = sum_to_suffix(&(g * x[0]), &sb);
            vec![Some(ga), Some(gb)]
        })
    }

    pub fn scale(self, factor: f64) -> Var<'g> {
        let value = &*self.value() * factor;
        self.unary(value, move |g, _, _| vec![Some(g * factor)])
    }

    /// `self · w` where `w` is `[k, n]` and `self` is `[..., k]`.
    pub fn matmul(self, w: Var<'g>) -> Var<'g> {
        let value = {
            let (a, b) = (self.value(), w.value());
            let b2 = b
                .view()
                .into_dimensionality::<ndarray::Ix2>()
                .expect("matmul rhs must be 2-d");
            let out: Array2<f64> = to_2d(&a).dot(&b2);
            let mut shape = a.shape().to_vec();
            *shape.last_mut().unwrap() = b2.shape()[1];
            out.into_shape_with_order(IxDyn(&shape)).unwrap()
        };
        self.graph.custom(&[self, w], value, |g, x, _| {
            let g2 = to_2d(g);
            let w2 = x[1].view().into_dimensionality::<ndarray::Ix2>().unwrap();
            let ga = g2
                .dot(&w2.t())
                .into_shape_with_order(IxDyn(x[0].shape()))
                .unwrap();
            let gw = to_2d(x[0]).t().dot(&g2).into_dyn();
            vec![Some(ga), Some(gw)]
        })
    }

    /// Batched `[b, m, k] · [b, k, n]`, or `· [b, n, k]ᵀ` when `transpose_rhs`.
    pub fn bmm(self, rhs: Var<'g>, transpose_rhs: bool) -> Var<'g> {
        let value = batched_matmul(&self.value(), &rhs.value(), false, transpose_rhs);
        self.graph.custom(&[self, rhs], value, move |g, x, _| {
            if transpose_rhs {
                vec![
                    Some(batched_matmul(g, x[1], false, false)),
                    Some(batched_matmul(g, x[0], true, false)),
                ]
            } else {
                vec![
                    Some(batched_matmul(g, x[1], false, true)),
                    Some(batched_matmul(x[0], g, true, false)),
                ]
            }
        })
    }

    pub fn reshape(self, shape: &[usize]) -> Var<'g> {
        let from = self.shape();
        let value = self
            .value()
            .to_shape(IxDyn(shape))
            .expect("reshape size mismatch")
            .into_owned();
        self.unary(value, move |g, _, _| {
            vec![Some(g.to_shape(IxDyn(&from)).unwrap().into_owned())]
        })
    }

    pub fn permute(self, axes: &[usize]) -> Var<'g> {
        let mut inverse = vec![0; axes.len()];
        for (i, &a) in axes.iter().enumerate() {
            inverse[a] = i;
        }
        let value = self.value().clone().permuted_axes(IxDyn(axes));
        self.unary(as_standard(value), move |g, _, _| {
            vec![Some(as_standard(g.clone().permuted_axes(IxDyn(&inverse))))]
        })
    }

    pub fn unsqueeze(self, axis: usize) -> Var<'g> {
        let mut shape = self.shape();
        shape.insert(axis, 1);
        self.reshape(&shape)
    }

    /// Softmax over the last axis. With `causal`, the trailing two axes are
    /// treated as a square `[query, key]` block and keys after the query are
    /// excluded.
    pub fn softmax(self, causal: bool) -> Var<'g> {
        let value = {
            let x = self.value();
            let mut out = x.clone();
            let n = *x.shape().last().unwrap();
            for (r, mut row) in out.lanes_mut(Axis(x.ndim() - 1)).into_iter().enumerate() {
                let limit = if causal { r % n + 1 } else { n };
                let max = row
                    .iter()
                    .take(limit)
                    .fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                let mut sum = 0.0;
                for (j, v) in row.iter_mut().enumerate() {
                    if j < limit {
                        *v = (*v - max).exp();
                        sum += *v;
                    } else {
                        *v = 0.0;
                    }
                }
                row.mapv_inplace(|v| v / sum);
            }
            out
        };
        self.unary(value, |g, _, p| {
            let last = Axis(p.ndim() - 1);
            let dot = (g * p).sum_axis(last).insert_axis(last);
            vec![Some(p * &(g - &dot))]
        })
    }

    /// Layer normalisation over the last axis with affine `gamma`, `beta`.
    pub fn layer_norm(self, gamma: Var<'g>, beta: Var<'g>, eps: f64) -> Var<'g> {
        fn normalise(x: &Tensor, eps: f64) -> (Tensor, Tensor) {
            let last = Axis(x.ndim() - 1);
            let mean = x.mean_axis(last).unwrap().insert_axis(last);
            let centred = x - &mean;
            let var = (&centred * &centred).mean_axis(last).unwrap().insert_axis(last);
            let rstd = var.mapv(|v| 1.0 / (v + eps).sqrt());
            (centred * &rstd, rstd)
        }
        let value = {
            let (xhat, _) = normalise(&self.value(), eps);
            &(&xhat * &*gamma.value()) + &*beta.value()
        };
        self.graph
            .custom(&[self, gamma, beta], value, move |g, x, _| {
                let (xhat, rstd) = normalise(x[0], eps);
                let width = x[1].len();
                let last = Axis(xhat.ndim() - 1);
                let dgamma = sum_to_suffix(&(g * &xhat), &[width]);
                let dbeta = sum_to_suffix(g, &[width]);
                let dxhat = g * x[1];
                let mean_d = dxhat.mean_axis(last).unwrap().insert_axis(last);
                let mean_dx = (&dxhat * &xhat).mean_axis(last).unwrap().insert_axis(last);
                let dx = (&dxhat - &mean_d - &(&xhat * &mean_dx)) * &rstd;
                vec![Some(dx), Some(dgamma), Some(dbeta)]
            })
    }

    /// `x · sigmoid(1.702 x)`, the GELU approximation used by the CLIP family.
    pub fn quick_gelu(self) -> Var<'g> {
        let value = self.value().mapv(|x| x * sigmoid(1.702 * x));
        self.unary(value, |g, x, _| {
            let d = x[0].mapv(|x| {
                let s = sigmoid(1.702 * x);
                s + 1.702 * x * s * (1.0 - s)
            });
            vec![Some(g * &d)]
        })
    }

    pub fn sigmoid(self) -> Var<'g> {
        let value = self.value().mapv(sigmoid);
        self.unary(value, |g, _, y| vec![Some(g * &y.mapv(|s| s * (1.0 - s)))])
    }

    pub fn tanh(self) -> Var<'g> {
        let value = self.value().mapv(f64::tanh);
        self.unary(value, |g, _, y| vec![Some(g * &y.mapv(|t| 1.0 - t * t))])
    }

    pub fn mean_axis(self, axis: usize) -> Var<'g> {
        let n = self.shape()[axis];
        let value = self.value().mean_axis(Axis(axis)).expect("mean over empty axis");
        self.unary(value, move |g, x, _| {
            let expanded = g.view().insert_axis(Axis(axis));
            let grad = expanded
                .broadcast(x[0].raw_dim())
                .unwrap()
                .mapv(|v| v / n as f64);
            vec![Some(grad)]
        })
    }

    pub fn sum(self) -> Var<'g> {
        let value = Tensor::from_elem(IxDyn(&[]), self.value().sum());
        self.unary(value, |g, x, _| {
            vec![Some(Tensor::from_elem(x[0].raw_dim(), g[[]]))]
        })
    }

    pub fn mean(self) -> Var<'g> {
        let n = self.value().len() as f64;
        self.sum().scale(1.0 / n)
    }

    /// Removes `axis` by taking entry `index` along it.
    pub fn select(self, axis: usize, index: usize) -> Var<'g> {
        let value = self.value().index_axis(Axis(axis), index).to_owned();
        self.unary(value, move |g, x, _| {
            let mut grad = Tensor::zeros(x[0].raw_dim());
            grad.index_axis_mut(Axis(axis), index).assign(g);
            vec![Some(grad)]
        })
    }

    pub fn slice_axis(self, axis: usize, range: Range<usize>) -> Var<'g> {
        let value = self
            .value()
            .slice_axis(Axis(axis), Slice::from(range.clone()))
            .to_owned();
        self.unary(value, move |g, x, _| {
            let mut grad = Tensor::zeros(x[0].raw_dim());
            grad.slice_axis_mut(Axis(axis), Slice::from(range.clone()))
                .assign(g);
            vec![Some(grad)]
        })
    }

    /// Row lookup in a `[rows, width]` table; output is `[ids.len(), width]`.
    pub fn gather_rows(self, ids: &[usize]) -> Var<'g> {
        let ids = ids.to_vec();
        let value = {
            let table = self.value();
            let table = table.view().into_dimensionality::<ndarray::Ix2>().unwrap();
            let mut out = Array2::<f64>::zeros((ids.len(), table.shape()[1]));
            for (r, &id) in ids.iter().enumerate() {
                out.row_mut(r).assign(&table.row(id));
            }
            out.into_dyn()
        };
        self.unary(value, move |g, x, _| {
            let mut grad = Array2::<f64>::zeros((x[0].shape()[0], x[0].shape()[1]));
            let g2 = g.view().into_dimensionality::<ndarray::Ix2>().unwrap();
            for (r, &id) in ids.iter().enumerate() {
                let mut row = grad.row_mut(id);
                row += &g2.row(r);
            }
            vec![Some(grad.into_dyn())]
        })
    }

    /// From `[batch, len, width]` picks `positions[b]` per batch entry,
    /// giving `[batch, width]`.
    pub fn gather_positions(self, positions: &[usize]) -> Var<'g> {
        let positions = positions.to_vec();
        let value = {
            let x = self.value();
            let x = x.view().into_dimensionality::<ndarray::Ix3>().unwrap();
            assert_eq!(x.shape()[0], positions.len());
            let mut out = Array2::<f64>::zeros((x.shape()[0], x.shape()[2]));
            for (b, &p) in positions.iter().enumerate() {
                out.row_mut(b).assign(&x.slice(s![b, p, ..]));
            }
            out.into_dyn()
        };
        self.unary(value, move |g, x, _| {
            let mut grad = Tensor::zeros(x[0].raw_dim());
            for (b, &p) in positions.iter().enumerate() {
                grad.slice_mut(s![b, p, ..]).assign(&g.slice(s![b, ..]));
            }
            vec![Some(grad)]
        })
    }

    /// Channel shifting along a frame axis; see [`shift_channels`].
    pub fn shift_channels(self, axis: usize, groups: &[(Range<usize>, isize)]) -> Var<'g> {
        let forward: Vec<(Range<usize>, isize)> = groups.to_vec();
        let value = shift_channels(&self.value(), axis, &forward);
        let reverse: Vec<(Range<usize>, isize)> =
            forward.iter().map(|(r, o)| (r.clone(), -o)).collect();
        self.unary(value, move |g, _, _| {
            vec![Some(shift_channels(g, axis, &reverse))]
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, arr2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_shape_fn(IxDyn(shape), |_| rng.random_range(-1.0..1.0))
    }

    /// Checks `f`'s gradient with respect to its single input by central
    /// differences.
    fn check(shape: &[usize], seed: u64, f: impl for<'g> Fn(&'g Graph, Var<'g>) -> Var<'g>) {
        let x0 = random(shape, seed);
        let graph = Graph::new();
        let x = graph.leaf(x0.clone());
        let y = f(&graph, x);
        let grads = graph.backward(y);
        let analytic = grads.get(x).unwrap().clone();
        let eps = 1e-6;
        for i in 0..x0.len() {
            let eval = |delta: f64| {
                let mut xp = x0.clone();
                xp.as_slice_mut().unwrap()[i] += delta;
                let g = Graph::new();
                let v = g.leaf(xp);
                f(&g, v).scalar()
            };
            let numeric = (eval(eps) - eval(-eps)) / (2.0 * eps);
            let a = analytic.as_slice().unwrap()[i];
            assert!(
                (a - numeric).abs() <= 1e-6 * (1.0 + numeric.abs()),
                "element {i}: analytic {a} numeric {numeric}"
            );
        }
    }

    fn weights<'g>(g: &'g Graph, shape: &[usize], seed: u64) -> Var<'g> {
        g.constant(random(shape, seed))
    }

    #[test]
    fn matmul_gradient() {
        check(&[2, 3, 4], 1, |g, x| {
            x.matmul(weights(g, &[4, 5], 2)).quick_gelu().sum()
        });
    }

    #[test]
    fn bmm_gradients() {
        check(&[2, 3, 4], 3, |g, x| {
            x.bmm(weights(g, &[2, 4, 2], 4), false).tanh().sum()
        });
        check(&[2, 3, 4], 5, |g, x| {
            x.bmm(weights(g, &[2, 5, 4], 6), true).sigmoid().sum()
        });
        check(&[2, 5, 4], 7, |g, x| {
            weights(g, &[2, 3, 4], 8).bmm(x, true).tanh().sum()
        });
    }

    #[test]
    fn softmax_gradients() {
        check(&[2, 4, 4], 9, |g, x| {
            x.softmax(false).mul(weights(g, &[2, 4, 4], 10)).sum()
        });
        check(&[2, 4, 4], 11, |g, x| {
            x.softmax(true).mul(weights(g, &[4, 4], 12)).sum()
        });
    }

    #[test]
    fn causal_softmax_masks_future_keys() {
        let g = Graph::new();
        let x = g.constant(Tensor::zeros(IxDyn(&[3, 3])));
        let p = x.softmax(true);
        let v = p.value();
        assert_eq!(v[[0, 1]], 0.0);
        assert_eq!(v[[0, 0]], 1.0);
        assert!((v[[1, 0]] - 0.5).abs() < 1e-15);
        assert!((v[[2, 2]] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn layer_norm_gradients() {
        check(&[3, 5], 13, |g, x| {
            let gamma = weights(g, &[5], 14);
            let beta = weights(g, &[5], 15);
            x.layer_norm(gamma, beta, 1e-5)
                .mul(weights(g, &[3, 5], 16))
                .sum()
        });
        check(&[5], 17, |g, gamma| {
            let x = weights(g, &[2, 5], 18);
            x.layer_norm(gamma, weights(g, &[5], 19), 1e-5).tanh().sum()
        });
    }

    #[test]
    fn structural_gradients() {
        check(&[2, 3, 4], 20, |g, x| {
            let p = x.permute(&[2, 0, 1]).reshape(&[4, 6]);
            p.mul(weights(g, &[4, 6], 21)).sum()
        });
        check(&[3, 4], 22, |g, x| {
            let a = x.slice_axis(1, 1..3);
            let b = x.select(0, 2);
            let c = g.concat(&[a, x], 1).mean_axis(0);
            c.mul(weights(g, &[6], 23)).sum().add(b.tanh().sum())
        });
        check(&[4, 3], 24, |g, x| {
            let rows = x.gather_rows(&[0, 2, 2, 3]);
            rows.mul(weights(g, &[4, 3], 25)).sum()
        });
        check(&[2, 3, 4], 26, |g, x| {
            x.gather_positions(&[2, 0]).mul(weights(g, &[2, 4], 27)).sum()
        });
        check(&[2, 3], 28, |g, x| {
            g.stack(&[x, x.scale(2.0)], 1)
                .add(weights(g, &[2, 3], 29))
                .tanh()
                .sum()
        });
    }

    #[test]
    fn shift_gradient_is_reverse_shift() {
        check(&[2, 3, 2, 8], 30, |g, x| {
            x.shift_channels(1, &[(0..2, -1), (2..4, 1)])
                .mul(weights(g, &[2, 3, 2, 8], 31))
                .sum()
        });
    }

    #[test]
    fn broadcast_add_sums_gradient() {
        let g = Graph::new();
        let x = g.leaf(Tensor::zeros(IxDyn(&[3, 2])));
        let b = g.leaf(arr1(&[1.0, 2.0]).into_dyn());
        let y = x.add(b).sum();
        let grads = g.backward(y);
        assert_eq!(grads.get(b).unwrap(), &arr1(&[3.0, 3.0]).into_dyn());
        assert_eq!(y.scalar(), 9.0);
    }

    #[test]
    fn constants_receive_no_gradient() {
        let g = Graph::new();
        let c = g.constant(arr2(&[[1.0, 2.0]]).into_dyn());
        let y = c.scale(3.0).sum();
        assert!(!y.requires_grad());
        let grads = g.backward(y);
        assert!(grads.get(c).is_none());
    }
}
