//! Meta-pattern bank with an attention readout, and its triplet plus
//! compactness loss.
//!
//! Attribute-space embeddings are projected into the pattern width, attend
//! over the bank by dot product, and the readout is mapped back and added to
//! the embedding. The loss pulls each projected query onto its most similar
//! pattern while keeping the runner-up at least a margin further away.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::grounding::init_uniform;
use crate::numgraph::{Graph, Tensor, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct MetaPatternBank {
    /// `φ × d`.
    pub patterns: Tensor,
    /// `width × d`.
    pub w_q: Tensor,
    /// `1 × d`.
    pub b_q: Tensor,
    /// `d × width`, remaps the readout onto the embedding.
    pub w_r: Tensor,
    pub margin: f64,
}

impl MetaPatternBank {
    /// Patterns are standard normal scaled by `1/√d`; projections are uniform
    /// in `±1/√fan_in`.
    pub fn init<R: Rng>(rng: &mut R, width: usize, bank_size: usize, pattern_width: usize, margin: f64) -> Result<Self> {
        let d = pattern_width;
        let scale = 1.0 / (d as f64).sqrt();
        let patterns = Tensor::from_fn(bank_size, d, |_, _| scale * rng.sample::<f64, _>(StandardNormal));
        let bank = MetaPatternBank {
            patterns,
            w_q: init_uniform(rng, width, d, width),
            b_q: init_uniform(rng, 1, d, width),
            w_r: init_uniform(rng, d, width, d),
            margin,
        };
        bank.validate()?;
        Ok(bank)
    }

    pub fn validate(&self) -> Result<()> {
        let [phi, d] = self.patterns.shape();
        let width = self.w_q.rows();
        if phi < 2 {
            return Err(Error::domain(format!("pattern bank needs at least 2 patterns, got {phi}")));
        }
        if d == 0 || d >= width {
            return Err(Error::domain(format!(
                "pattern width must be positive and below the embedding width {width}, got {d}"
            )));
        }
        if self.w_q.shape() != [width, d] {
            return Err(Error::shape("pattern bank W_Q", self.w_q.shape(), [width, d]));
        }
        if self.b_q.shape() != [1, d] {
            return Err(Error::shape("pattern bank b_Q", self.b_q.shape(), [1, d]));
        }
        if self.w_r.shape() != [d, width] {
            return Err(Error::shape("pattern bank remap", self.w_r.shape(), [d, width]));
        }
        if !(self.margin > 0.0) {
            return Err(Error::domain(format!("margin must be positive, got {}", self.margin)));
        }
        Ok(())
    }

    pub fn bank_size(&self) -> usize {
        self.patterns.rows()
    }

    pub fn pattern_width(&self) -> usize {
        self.patterns.cols()
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        vec![&self.patterns, &self.w_q, &self.b_q, &self.w_r]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.patterns, &mut self.w_q, &mut self.b_q, &mut self.w_r]
    }

    pub fn bind(&self, g: &mut Graph, trainable: bool) -> BoundBank {
        let mut leaf = |t: &Tensor| if trainable { g.param(t.clone()) } else { g.constant(t.clone()) };
        BoundBank {
            patterns: leaf(&self.patterns),
            w_q: leaf(&self.w_q),
            b_q: leaf(&self.b_q),
            w_r: leaf(&self.w_r),
            margin: self.margin,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BoundBank {
    pub patterns: Var,
    pub w_q: Var,
    pub b_q: Var,
    pub w_r: Var,
    pub margin: f64,
}

impl BoundBank {
    pub fn vars(&self) -> Vec<Var> {
        vec![self.patterns, self.w_q, self.b_q, self.w_r]
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BankReadout {
    /// Projected queries, `batch × d`.
    pub queries: Var,
    /// Attention-weighted patterns `V*`, `batch × d`.
    pub values: Var,
    /// `batch × φ`, rows sum to one.
    pub attention: Var,
    /// Input embedding plus the remapped readout.
    pub enriched: Var,
}

/// Projects `f_attribute` (`batch × width`) into queries, attends over the
/// patterns and adds the remapped readout back onto the embedding.
pub fn bank_attend(g: &mut Graph, f_attribute: Var, bank: &BoundBank) -> Result<BankReadout> {
    if g.shape(bank.patterns)[0] < 2 {
        return Err(Error::domain("pattern bank needs at least 2 patterns"));
    }
    let q = g.matmul(f_attribute, bank.w_q)?;
    let queries = g.add(q, bank.b_q)?;
    let scores = g.matmul_t(queries, bank.patterns)?;
    let attention = g.softmax_rows(scores, 1.0)?;
    let values = g.matmul(attention, bank.patterns)?;
    let remapped = g.matmul(values, bank.w_r)?;
    let enriched = g.add(f_attribute, remapped)?;
    Ok(BankReadout {
        queries,
        values,
        attention,
        enriched,
    })
}

/// Indices of the most and second most dot-product-similar patterns; ties go
/// to the lower index.
pub fn nearest_patterns(query: &[f64], patterns: &Tensor) -> Result<(usize, usize)> {
    if patterns.rows() < 2 {
        return Err(Error::domain(format!("need at least 2 patterns, got {}", patterns.rows())));
    }
    if query.len() != patterns.cols() {
        return Err(Error::shape("nearest_patterns", [1, query.len()], patterns.shape()));
    }
    let sim = |j: usize| -> f64 { query.iter().zip(patterns.row_slice(j)).map(|(a, b)| a * b).sum() };
    let (mut p, mut sp) = (0, sim(0));
    let (mut n, mut sn) = (1, sim(1));
    if sn > sp {
        std::mem::swap(&mut p, &mut n);
        std::mem::swap(&mut sp, &mut sn);
    }
    for j in 2..patterns.rows() {
        let s = sim(j);
        if s > sp {
            n = p;
            sn = sp;
            p = j;
            sp = s;
        } else if s > sn {
            n = j;
            sn = s;
        }
    }
    Ok((p, n))
}

/// The two parts of the loss, each summed over the batch.
#[derive(Debug, Clone, Copy)]
pub struct DigsTerms {
    pub triplet: Var,
    pub compactness: Var,
    pub total: Var,
}

/// `Σ_i max(‖q_i−Φ[p]‖² − ‖q_i−Φ[n]‖² + margin, 0) + Σ_i ‖q_i−Φ[p]‖²`, with
/// `p`, `n` fixed by [`nearest_patterns`] on the current values.
pub fn digs_terms(g: &mut Graph, queries: Var, patterns: Var, margin: f64) -> Result<DigsTerms> {
    let [b, d] = g.shape(queries);
    if g.shape(patterns)[1] != d {
        return Err(Error::shape("digs_loss", g.shape(queries), g.shape(patterns)));
    }
    let mut pos = Vec::with_capacity(b);
    let mut neg = Vec::with_capacity(b);
    {
        let qv = g.value(queries);
        let pv = g.value(patterns);
        for i in 0..b {
            let (p, n) = nearest_patterns(qv.row_slice(i), pv)?;
            pos.push(p);
            neg.push(n);
        }
    }
    let phi_p = g.select_rows(patterns, &pos)?;
    let phi_n = g.select_rows(patterns, &neg)?;
    let dp = g.sub(queries, phi_p)?;
    let dp = g.mul(dp, dp)?;
    let dp = g.sum_rows(dp);
    let dn = g.sub(queries, phi_n)?;
    let dn = g.mul(dn, dn)?;
    let dn = g.sum_rows(dn);
    let gap = g.sub(dp, dn)?;
    let gap = g.add_scalar(gap, margin);
    let hinge = g.relu(gap);
    let triplet = g.sum(hinge);
    let compactness = g.sum(dp);
    let total = g.add(triplet, compactness)?;
    Ok(DigsTerms {
        triplet,
        compactness,
        total,
    })
}

pub fn digs_loss(g: &mut Graph, queries: Var, patterns: Var, margin: f64) -> Result<Var> {
    Ok(digs_terms(g, queries, patterns, margin)?.total)
}
