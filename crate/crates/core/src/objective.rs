//! Cosine similarity, temperature softmax and the multi-positive KL
//! contrastive loss, with exact gradients.

use ndarray::{Array1, Array2, ArrayView2, Axis, Ix2, IxDyn};

use crate::autograd::{Tensor, Var};
use crate::error::{Error, Result};

/// Learnable inverse temperature, stored as `log_scale` so that
/// `scale = 1/τ = min(exp(log_scale), MAX_SCALE)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Temperature {
    pub log_scale: f64,
}

impl Temperature {
    pub const MAX_SCALE: f64 = 100.0;
    pub const INIT_TAU: f64 = 0.07;

    pub fn new(log_scale: f64) -> Self {
        Self { log_scale }
    }

    pub fn from_tau(tau: f64) -> Self {
        Self::new((1.0 / tau).ln())
    }

    pub fn scale(&self) -> f64 {
        self.log_scale.exp().min(Self::MAX_SCALE)
    }

    pub fn tau(&self) -> f64 {
        1.0 / self.scale()
    }

    /// Whether the clamp is active, in which case `log_scale` gets no
    /// gradient.
    pub fn is_clamped(&self) -> bool {
        self.log_scale.exp() > Self::MAX_SCALE
    }
}

impl Default for Temperature {
    fn default() -> Self {
        Self::from_tau(Self::INIT_TAU)
    }
}

/// `N_v × N_t` cosine similarities.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityMatrix(pub Array2<f64>);

/// Row-stochastic softmax scores.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreMatrix(pub Array2<f64>);

/// Row-stochastic target with mass `1/k` on each of a row's `k` positives.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruthMatrix(pub Array2<f64>);

impl SimilarityMatrix {
    pub fn values(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn transpose(&self) -> SimilarityMatrix {
        SimilarityMatrix(self.0.t().to_owned())
    }
}

impl ScoreMatrix {
    pub fn values(&self) -> &Array2<f64> {
        &self.0
    }
}

impl GroundTruthMatrix {
    pub fn values(&self) -> &Array2<f64> {
        &self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// Video rows against text columns.
    X2Y,
    /// Text rows against video columns.
    Y2X,
}

/// Rows divided by their norms, plus the norms.
pub(crate) fn unit_rows(x: ArrayView2<f64>) -> Result<(Array2<f64>, Array1<f64>)> {
    let norms: Array1<f64> = x.map_axis(Axis(1), |r| r.dot(&r).sqrt());
    if let Some(row) = norms.iter().position(|&n| n == 0.0 || !n.is_finite()) {
        if norms[row] == 0.0 {
            return Err(Error::DegenerateEmbedding { row });
        }
        return Err(Error::NonFinite(format!("embedding row {row}")));
    }
    let unit = &x / &norms.view().insert_axis(Axis(1));
    Ok((unit, norms))
}

pub fn cosine_similarity(v: ArrayView2<f64>, w: ArrayView2<f64>) -> Result<SimilarityMatrix> {
    if v.ncols() != w.ncols() {
        return Err(Error::Shape(format!(
            "embedding widths differ: {} vs {}",
            v.ncols(),
            w.ncols()
        )));
    }
    let (v, _) = unit_rows(v)?;
    let (w, _) = unit_rows(w)?;
    Ok(SimilarityMatrix(v.dot(&w.t())))
}

/// Row-wise log-softmax of `scale · sim`, stabilised by the row maximum.
fn log_softmax_rows(sim: &Array2<f64>, scale: f64) -> Array2<f64> {
    let mut out = sim * scale;
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        row.mapv_inplace(|v| v - lse);
    }
    out
}

pub fn softmax_scores(sim: &SimilarityMatrix, temp: &Temperature) -> Result<ScoreMatrix> {
    if sim.0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("similarity matrix".into()));
    }
    Ok(ScoreMatrix(log_softmax_rows(&sim.0, temp.scale()).mapv(f64::exp)))
}

/// In-batch targets: sample `i` and the text of sample `j` are a positive
/// pair when their labels agree.
pub fn ground_truth(labels: &[usize], direction: Direction) -> GroundTruthMatrix {
    let n = labels.len();
    let mut q = Array2::from_shape_fn((n, n), |(i, j)| f64::from(u8::from(labels[i] == labels[j])));
    for mut row in q.rows_mut() {
        let k = row.sum();
        row /= k;
    }
    match direction {
        Direction::X2Y => GroundTruthMatrix(q),
        Direction::Y2X => GroundTruthMatrix(q.reversed_axes().as_standard_layout().into_owned()),
    }
}

/// `Σ_j q_j ln(q_j / p_j)` for every row, with `0 · ln 0 = 0`.
fn kl_rows(p: &Array2<f64>, q: &Array2<f64>) -> Result<Array1<f64>> {
    let mut out = Array1::zeros(p.nrows());
    for ((i, j), &qv) in q.indexed_iter() {
        if qv > 0.0 {
            let pv = p[[i, j]];
            if pv <= 0.0 {
                return Err(Error::InfiniteLoss { row: i, col: j });
            }
            out[i] += qv * (qv / pv).ln();
        }
    }
    Ok(out)
}

pub fn kl_contrastive_loss(
    p_x2y: &ScoreMatrix,
    p_y2x: &ScoreMatrix,
    q_x2y: &GroundTruthMatrix,
    q_y2x: &GroundTruthMatrix,
) -> Result<f64> {
    let shape = p_x2y.0.dim();
    if p_y2x.0.dim() != shape || q_x2y.0.dim() != shape || q_y2x.0.dim() != shape || shape.0 == 0 {
        return Err(Error::Shape("score and target matrices must share one non-empty shape".into()));
    }
    let a = kl_rows(&p_x2y.0, &q_x2y.0)?;
    let b = kl_rows(&p_y2x.0, &q_y2x.0)?;
    Ok(0.5 * (a + b).mean().expect("non-empty"))
}

#[derive(Clone, Debug)]
pub struct ObjectiveOutput {
    pub loss: f64,
    pub grad_video: Array2<f64>,
    pub grad_text: Array2<f64>,
    pub grad_log_scale: f64,
}

/// Gradient of a row normalisation: `(I − ûûᵀ) g / ‖u‖` per row.
fn normalize_backward(unit: &Array2<f64>, norms: &Array1<f64>, grad_unit: &Array2<f64>) -> Array2<f64> {
    let mut out = grad_unit.clone();
    for ((mut row, u), &n) in out.rows_mut().into_iter().zip(unit.rows()).zip(norms) {
        let along = row.dot(&u);
        row.scaled_add(-along, &u);
        row /= n;
    }
    out
}

/// Loss of one batch where row `i` of both embedding matrices belongs to
/// sample `i`, with gradients for both embeddings and `log_scale`.
pub fn training_objective(
    video: ArrayView2<f64>,
    text: ArrayView2<f64>,
    labels: &[usize],
    temp: &Temperature,
) -> Result<ObjectiveOutput> {
    let n = labels.len();
    if video.nrows() != n || text.nrows() != n || n == 0 {
        return Err(Error::Shape(format!(
            "batch of {n} labels with {} video and {} text rows",
            video.nrows(),
            text.nrows()
        )));
    }
    if video.ncols() != text.ncols() {
        return Err(Error::Shape("video and text embedding widths differ".into()));
    }
    let (v, v_norm) = unit_rows(video)?;
    let (w, w_norm) = unit_rows(text)?;
    let sim = v.dot(&w.t());
    let st = sim.t().to_owned();
    let scale = temp.scale();
    let q = ground_truth(labels, Direction::X2Y).0;
    let qt = ground_truth(labels, Direction::Y2X).0;
    let log_p = log_softmax_rows(&sim, scale);
    let log_pt = log_softmax_rows(&st, scale);
    let (p, pt) = (log_p.mapv(f64::exp), log_pt.mapv(f64::exp));
    let loss = kl_contrastive_loss(&ScoreMatrix(p.clone()), &ScoreMatrix(pt.clone()), &GroundTruthMatrix(q.clone()), &GroundTruthMatrix(qt.clone()))?;
    if !loss.is_finite() {
        return Err(Error::NonFinite("contrastive loss".into()));
    }

    // dL/d(scale·S) per direction is (P − Q) / 2N.
    let g = ((&p - &q) + (&pt - &qt).t()) / (2.0 * n as f64);
    let grad_sim = &g * scale;
    let grad_log_scale = if temp.is_clamped() { 0.0 } else { scale * (&g * &sim).sum() };
    let grad_v_unit = grad_sim.dot(&w);
    let grad_w_unit = grad_sim.t().dot(&v);
    Ok(ObjectiveOutput {
        loss,
        grad_video: normalize_backward(&v, &v_norm, &grad_v_unit),
        grad_text: normalize_backward(&w, &w_norm, &grad_w_unit),
        grad_log_scale,
    })
}

/// [`training_objective`] recorded on the tape. `log_scale` is a
/// one-element tensor.
pub fn contrastive_loss<'g>(video: Var<'g>, text: Var<'g>, log_scale: Var<'g>, labels: &[usize]) -> Result<Var<'g>> {
    let as2 = |x: &Tensor| -> Result<Array2<f64>> {
        x.clone()
            .into_dimensionality::<Ix2>()
            .map_err(|_| Error::Shape(format!("expected a matrix, got {:?}", x.shape())))
    };
    let v = as2(&video.value())?;
    let t = as2(&text.value())?;
    let temp = Temperature::new(log_scale.value().iter().copied().next().ok_or_else(|| Error::Shape("empty log_scale".into()))?);
    let out = training_objective(v.view(), t.view(), labels, &temp)?;
    let value = Tensor::from_elem(IxDyn(&[]), out.loss);
    let ls_shape = log_scale.shape();
    let graph = video.graph();
    Ok(graph.custom(&[video, text, log_scale], value, move |grad, _, _| {
        let up = grad.iter().copied().next().unwrap_or(0.0);
        vec![
            Some((&out.grad_video * up).into_dyn()),
            Some((&out.grad_text * up).into_dyn()),
            Some(Tensor::from_elem(IxDyn(&ls_shape), out.grad_log_scale * up)),
        ]
    }))
}
