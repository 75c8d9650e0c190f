//! Instance-level contrastive loss over pooled visual embeddings.
//!
//! Each anchor's positive is the most cosine-similar element of its own
//! category when that similarity clears a threshold, otherwise the most
//! similar element of the whole batch. Every remaining non-anchor element is
//! a negative.

use crate::error::{Error, Result};
use crate::numgraph::{Graph, Tensor, Var};

/// Added under the square root of row norms so that all-zero embeddings
/// (possible after a ReLU) stay differentiable.
const NORM_EPS: f64 = 1e-12;

/// Excludes the anchor from its own softmax; `exp` of it underflows to zero.
const SELF_MASK: f64 = -1e9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViclConfig {
    pub temperature: f64,
    pub similarity_threshold: f64,
}

impl Default for ViclConfig {
    fn default() -> Self {
        ViclConfig {
            temperature: 0.1,
            similarity_threshold: 0.5,
        }
    }
}

/// Embeddings (`batch × width`, on a graph) with their category labels.
#[derive(Debug, Clone)]
pub struct ContrastiveBatch {
    pub embeddings: Var,
    pub labels: Vec<usize>,
    pub temperature: f64,
    pub similarity_threshold: f64,
}

impl ContrastiveBatch {
    pub fn new(g: &Graph, embeddings: Var, labels: Vec<usize>, config: ViclConfig) -> Result<Self> {
        let [rows, _] = g.shape(embeddings);
        if rows != labels.len() {
            return Err(Error::shape("contrastive batch labels", g.shape(embeddings), [labels.len(), 1]));
        }
        if rows < 2 {
            return Err(Error::domain(format!("contrastive batch needs at least 2 elements, got {rows}")));
        }
        if !(config.temperature > 0.0) {
            return Err(Error::domain(format!("temperature must be positive, got {}", config.temperature)));
        }
        if !(-1.0..=1.0).contains(&config.similarity_threshold) {
            return Err(Error::domain(format!(
                "similarity threshold must lie in [-1, 1], got {}",
                config.similarity_threshold
            )));
        }
        Ok(ContrastiveBatch {
            embeddings,
            labels,
            temperature: config.temperature,
            similarity_threshold: config.similarity_threshold,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Pairwise cosine similarities of the rows of `x`.
pub fn cosine_matrix(x: &Tensor) -> Tensor {
    let norms: Vec<f64> = (0..x.rows())
        .map(|r| (x.row_slice(r).iter().map(|v| v * v).sum::<f64>() + NORM_EPS).sqrt())
        .collect();
    Tensor::from_fn(x.rows(), x.rows(), |i, j| {
        let dot: f64 = x.row_slice(i).iter().zip(x.row_slice(j)).map(|(a, b)| a * b).sum();
        dot / (norms[i] * norms[j])
    })
}

fn argmax_excluding(row: &[f64], keep: impl Fn(usize) -> bool) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (j, &v) in row.iter().enumerate() {
        if keep(j) && best.is_none_or(|b| v > row[b]) {
            best = Some(j);
        }
    }
    best
}

/// Positive index for `anchor` given a similarity matrix.
pub fn select_positive_by_similarity(sim: &Tensor, labels: &[usize], anchor: usize, threshold: f64) -> Result<usize> {
    let n = labels.len();
    if n < 2 {
        return Err(Error::domain(format!("positive selection needs at least 2 elements, got {n}")));
    }
    if sim.shape() != [n, n] || anchor >= n {
        return Err(Error::shape("select_positive", sim.shape(), [n, n]));
    }
    let row = sim.row_slice(anchor);
    let same = argmax_excluding(row, |j| j != anchor && labels[j] == labels[anchor]);
    if let Some(p) = same.filter(|&p| row[p] >= threshold) {
        return Ok(p);
    }
    Ok(argmax_excluding(row, |j| j != anchor).expect("batch has a non-anchor element"))
}

/// Positive index for `anchor` within `batch`.
pub fn select_positive(g: &Graph, batch: &ContrastiveBatch, anchor: usize) -> Result<usize> {
    let sim = cosine_matrix(g.value(batch.embeddings));
    select_positive_by_similarity(&sim, &batch.labels, anchor, batch.similarity_threshold)
}

/// Positives of every anchor, in batch order.
pub fn select_positives(g: &Graph, batch: &ContrastiveBatch) -> Result<Vec<usize>> {
    let sim = cosine_matrix(g.value(batch.embeddings));
    (0..batch.len())
        .map(|i| select_positive_by_similarity(&sim, &batch.labels, i, batch.similarity_threshold))
        .collect()
}

/// Batch mean of `-log(exp(D(v,v⁺)/τ) / Σ_{j ≠ anchor} exp(D(v,v_j)/τ))`.
/// Positive selection is not differentiated through.
pub fn vicl_loss(g: &mut Graph, batch: &ContrastiveBatch) -> Result<Var> {
    let n = batch.len();
    let positives = select_positives(g, batch)?;

    let x = batch.embeddings;
    let sq = g.mul(x, x)?;
    let norms = g.sum_rows(sq);
    let norms = g.add_scalar(norms, NORM_EPS);
    let norms = g.sqrt(norms)?;
    let unit = g.div(x, norms)?;
    let sim = g.matmul_t(unit, unit)?;
    let logits = g.scale(sim, 1.0 / batch.temperature);
    let mask = g.constant(Tensor::from_fn(n, n, |i, j| if i == j { SELF_MASK } else { 0.0 }));
    let logits = g.add(logits, mask)?;
    let log_p = g.log_softmax_rows(logits)?;
    let pick = g.constant(Tensor::from_fn(n, n, |i, j| if positives[i] == j { 1.0 } else { 0.0 }));
    let picked = g.mul(log_p, pick)?;
    let total = g.sum(picked);
    Ok(g.scale(total, -1.0 / n as f64))
}
