//! Bidirectional grounding transformers and the evidence head.
//!
//! Both directions share one block structure: single-head cross-attention
//! `softmax(Q Kᵀ / √d_k) V` stacked `n` times, a feed-forward map
//! `ReLU((x W₁ + b₁) W₂ + b₂)` into attribute space, then pooling over the
//! query rows. The visual grounding transformer (VGT) queries the region
//! features with the attribute embeddings; the attribute grounding
//! transformer (AGT) queries the attribute embeddings with the regions.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::numgraph::{Graph, Tensor, Var};

/// Uniform `[-1/√fan_in, 1/√fan_in]` initialisation.
pub(crate) fn init_uniform<R: Rng>(rng: &mut R, rows: usize, cols: usize, fan_in: usize) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    Tensor::from_fn(rows, cols, |_, _| rng.random_range(-bound..=bound))
}

/// Map from class scores to nonnegative evidence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EvidenceActivation {
    #[default]
    Softplus,
    Relu,
    Exp,
}

impl fmt::Display for EvidenceActivation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvidenceActivation::Softplus => "softplus",
            EvidenceActivation::Relu => "relu",
            EvidenceActivation::Exp => "exp",
        })
    }
}

impl FromStr for EvidenceActivation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "softplus" => Ok(EvidenceActivation::Softplus),
            "relu" => Ok(EvidenceActivation::Relu),
            "exp" => Ok(EvidenceActivation::Exp),
            other => Err(format!("unknown evidence activation `{other}` (softplus | relu | exp)")),
        }
    }
}

/// Reduction from per-query outputs to one instance embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Pooling {
    #[default]
    Mean,
    Max,
}

impl fmt::Display for Pooling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pooling::Mean => "mean",
            Pooling::Max => "max",
        })
    }
}

impl FromStr for Pooling {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean" => Ok(Pooling::Mean),
            "max" => Ok(Pooling::Max),
            other => Err(format!("unknown pooling `{other}` (mean | max)")),
        }
    }
}

/// Projections of one cross-attention layer. Values are projected back to
/// the query width so that layers stack.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionLayer {
    pub w_q: Tensor,
    pub w_k: Tensor,
    pub w_v: Tensor,
}

/// Weights of one grounding transformer.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundingParams {
    pub layers: Vec<AttentionLayer>,
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

/// Layer sizes for [`GroundingParams::init`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroundingShape {
    pub query_width: usize,
    pub context_width: usize,
    pub key_width: usize,
    pub ffn_hidden: usize,
    pub output_width: usize,
    pub layers: usize,
}

impl GroundingParams {
    pub fn init<R: Rng>(rng: &mut R, shape: GroundingShape) -> Result<Self> {
        let GroundingShape {
            query_width: qw,
            context_width: cw,
            key_width: dk,
            ffn_hidden: hid,
            output_width: out,
            layers,
        } = shape;
        if [qw, cw, dk, hid, out, layers].contains(&0) {
            return Err(Error::domain(format!("grounding sizes must be positive: {shape:?}")));
        }
        let layers = (0..layers)
            .map(|_| AttentionLayer {
                w_q: init_uniform(rng, qw, dk, qw),
                w_k: init_uniform(rng, cw, dk, cw),
                w_v: init_uniform(rng, cw, qw, cw),
            })
            .collect();
        Ok(GroundingParams {
            layers,
            w1: init_uniform(rng, qw, hid, qw),
            b1: init_uniform(rng, 1, hid, qw),
            w2: init_uniform(rng, hid, out, hid),
            b2: init_uniform(rng, 1, out, hid),
        })
    }

    pub fn key_width(&self) -> usize {
        self.layers.first().map_or(0, |l| l.w_q.cols())
    }

    /// Every weight in a fixed order (matches [`GroundingParams::tensors_mut`]).
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out: Vec<&Tensor> = Vec::new();
        for l in &self.layers {
            out.extend([&l.w_q, &l.w_k, &l.w_v]);
        }
        out.extend([&self.w1, &self.b1, &self.w2, &self.b2]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::new();
        for l in &mut self.layers {
            out.extend([&mut l.w_q, &mut l.w_k, &mut l.w_v]);
        }
        out.extend([&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]);
        out
    }

    /// Places the weights on `g`, differentiable when `trainable`.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> BoundGrounding {
        let mut leaf = |t: &Tensor| if trainable { g.param(t.clone()) } else { g.constant(t.clone()) };
        let layers = self
            .layers
            .iter()
            .map(|l| BoundLayer {
                w_q: leaf(&l.w_q),
                w_k: leaf(&l.w_k),
                w_v: leaf(&l.w_v),
            })
            .collect();
        BoundGrounding {
            layers,
            w1: leaf(&self.w1),
            b1: leaf(&self.b1),
            w2: leaf(&self.w2),
            b2: leaf(&self.b2),
            key_width: self.key_width(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BoundLayer {
    pub w_q: Var,
    pub w_k: Var,
    pub w_v: Var,
}

/// [`GroundingParams`] placed on a graph.
#[derive(Debug, Clone)]
pub struct BoundGrounding {
    pub layers: Vec<BoundLayer>,
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
    pub key_width: usize,
}

impl BoundGrounding {
    /// Graph nodes in the order of [`GroundingParams::tensors`].
    pub fn vars(&self) -> Vec<Var> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend([l.w_q, l.w_k, l.w_v]);
        }
        out.extend([self.w1, self.b1, self.w2, self.b2]);
        out
    }
}

/// Output of one attention block, with the attention matrix kept for
/// inspection.
#[derive(Debug, Clone, Copy)]
pub struct Attended {
    pub output: Var,
    pub attention: Var,
}

/// `softmax(Q Kᵀ / √d_k) V` with `Q = queries W_q`, `K = context W_k`,
/// `V = context W_v`.
pub fn cross_attention_block(g: &mut Graph, queries: Var, context: Var, layer: &BoundLayer) -> Result<Attended> {
    let q = g.matmul(queries, layer.w_q)?;
    let k = g.matmul(context, layer.w_k)?;
    let v = g.matmul(context, layer.w_v)?;
    attend(g, q, k, v)
}

fn attend(g: &mut Graph, q: Var, k: Var, v: Var) -> Result<Attended> {
    let dk = g.shape(q)[1] as f64;
    let scores = g.matmul_t(q, k)?;
    let attention = g.softmax_rows(scores, 1.0 / dk.sqrt())?;
    let output = g.matmul(attention, v)?;
    Ok(Attended { output, attention })
}

/// `ReLU((x W₁ + b₁) W₂ + b₂)`.
pub fn ffn(g: &mut Graph, x: Var, p: &BoundGrounding) -> Result<Var> {
    let h = g.matmul(x, p.w1)?;
    let h = g.add(h, p.b1)?;
    let o = g.matmul(h, p.w2)?;
    let o = g.add(o, p.b2)?;
    Ok(g.relu(o))
}

fn pool(g: &mut Graph, x: Var, pooling: Pooling) -> Var {
    match pooling {
        Pooling::Mean => g.mean_cols(x),
        Pooling::Max => g.max_cols(x),
    }
}

/// Which side of the attention is common to every instance of a batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Attribute embeddings query the instance's regions.
    Visual,
    /// The instance's regions query the attribute embeddings.
    Attribute,
}

/// Runs one grounding transformer over every instance of a batch and returns
/// the pooled `batch × |A|` embeddings. Projections of the shared side are
/// computed once per batch.
pub fn ground_batch(
    g: &mut Graph,
    p: &BoundGrounding,
    regions: &[Var],
    attributes: Var,
    direction: Direction,
    pooling: Pooling,
) -> Result<Var> {
    if regions.is_empty() {
        return Err(Error::domain("grounding needs at least one instance"));
    }
    let first = p
        .layers
        .first()
        .ok_or_else(|| Error::domain("grounding needs at least one attention layer"))?;
    let mut rows = Vec::with_capacity(regions.len());
    match direction {
        Direction::Visual => {
            let q0 = g.matmul(attributes, first.w_q)?;
            for &u in regions {
                let k = g.matmul(u, first.w_k)?;
                let v = g.matmul(u, first.w_v)?;
                let mut x = attend(g, q0, k, v)?.output;
                for layer in &p.layers[1..] {
                    x = cross_attention_block(g, x, u, layer)?.output;
                }
                let y = ffn(g, x, p)?;
                rows.push(pool(g, y, pooling));
            }
        }
        Direction::Attribute => {
            let mut kv = Vec::with_capacity(p.layers.len());
            for layer in &p.layers {
                let k = g.matmul(attributes, layer.w_k)?;
                let v = g.matmul(attributes, layer.w_v)?;
                kv.push((k, v));
            }
            for &u in regions {
                let mut x = u;
                for (layer, &(k, v)) in p.layers.iter().zip(&kv) {
                    let q = g.matmul(x, layer.w_q)?;
                    x = attend(g, q, k, v)?.output;
                }
                let y = ffn(g, x, p)?;
                rows.push(pool(g, y, pooling));
            }
        }
    }
    g.concat_rows(&rows)
}

/// VGT embedding `F^V` (`1 × |A|`) of one instance.
pub fn vgt_forward(g: &mut Graph, regions: Var, attributes: Var, p: &BoundGrounding, pooling: Pooling) -> Result<Var> {
    ground_batch(g, p, &[regions], attributes, Direction::Visual, pooling)
}

/// AGT embedding `F^A` (`1 × |A|`) of one instance.
pub fn agt_forward(g: &mut Graph, regions: Var, attributes: Var, p: &BoundGrounding, pooling: Pooling) -> Result<Var> {
    ground_batch(g, p, &[regions], attributes, Direction::Attribute, pooling)
}

/// Class evidence from attribute-space embeddings: scores `f · z^c`, evidence
/// `act(score)`, concentration `evidence + 1`. Returns `batch × |C|`.
pub fn evidence_head(g: &mut Graph, f: Var, semantics: Var, activation: EvidenceActivation) -> Result<Var> {
    let scores = g.matmul_t(f, semantics)?;
    let evidence = match activation {
        EvidenceActivation::Softplus => g.softplus(scores),
        EvidenceActivation::Relu => g.relu(scores),
        EvidenceActivation::Exp => g.exp(scores),
    };
    Ok(g.add_scalar(evidence, 1.0))
}
