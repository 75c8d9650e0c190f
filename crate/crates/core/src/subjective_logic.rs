//! Multinomial subjective-logic opinions built from Dirichlet evidence.
//!
//! An opinion over `K` classes carries a belief mass per class, one
//! uncertainty mass and a base rate, with `Σ b + u = 1`. Evidence `e` maps to
//! an opinion through `α = e + 1`, `S = Σ α`, `b = e / S`, `u = K / S`.

use crate::error::{Error, Result};

const SIMPLEX_TOL: f64 = 1e-9;

/// Dirichlet concentration `α = e + 1` over `K` classes.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletParams {
    alpha: Vec<f64>,
}

impl DirichletParams {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.is_empty() {
            return Err(Error::domain("Dirichlet parameters need at least one class"));
        }
        if let Some(a) = alpha.iter().find(|a| !(**a >= 1.0) || !a.is_finite()) {
            return Err(Error::domain(format!("Dirichlet concentration must be finite and >= 1, got {a}")));
        }
        Ok(DirichletParams { alpha })
    }

    pub fn from_evidence(evidence: &[f64]) -> Result<Self> {
        check_evidence(evidence)?;
        DirichletParams::new(evidence.iter().map(|e| e + 1.0).collect())
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn class_count(&self) -> usize {
        self.alpha.len()
    }

    /// `S = Σ α`.
    pub fn strength(&self) -> f64 {
        self.alpha.iter().sum()
    }

    pub fn evidence(&self) -> Vec<f64> {
        self.alpha.iter().map(|a| a - 1.0).collect()
    }

    /// `u = K / S`.
    pub fn uncertainty(&self) -> f64 {
        self.class_count() as f64 / self.strength()
    }

    /// Opinion with uniform base rate.
    pub fn opinion(&self) -> Opinion {
        let k = self.class_count();
        let s = self.strength();
        Opinion {
            belief: self.alpha.iter().map(|a| (a - 1.0) / s).collect(),
            uncertainty: k as f64 / s,
            base_rate: vec![1.0 / k as f64; k],
        }
    }
}

fn check_evidence(evidence: &[f64]) -> Result<()> {
    match evidence.iter().find(|e| !(**e >= 0.0) || !e.is_finite()) {
        Some(e) => Err(Error::domain(format!("evidence must be finite and nonnegative, got {e}"))),
        None => Ok(()),
    }
}

fn same_k(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::shape("opinion", [1, a], [1, b]));
    }
    Ok(())
}

/// A multinomial opinion `(b, u, a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Opinion {
    belief: Vec<f64>,
    uncertainty: f64,
    base_rate: Vec<f64>,
}

impl Opinion {
    pub fn new(belief: Vec<f64>, uncertainty: f64, base_rate: Vec<f64>) -> Result<Self> {
        same_k(belief.len(), base_rate.len())?;
        if belief.is_empty() {
            return Err(Error::domain("opinion needs at least one class"));
        }
        let in_unit = |x: f64| (-SIMPLEX_TOL..=1.0 + SIMPLEX_TOL).contains(&x);
        if !belief.iter().chain(&base_rate).all(|&x| in_unit(x)) || !in_unit(uncertainty) {
            return Err(Error::domain("opinion components must lie in [0, 1]"));
        }
        let mass = belief.iter().sum::<f64>() + uncertainty;
        if (mass - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::domain(format!("belief plus uncertainty must sum to 1, got {mass}")));
        }
        let rate: f64 = base_rate.iter().sum();
        if (rate - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::domain(format!("base rate must sum to 1, got {rate}")));
        }
        Ok(Opinion {
            belief,
            uncertainty,
            base_rate,
        })
    }

    /// Total ignorance: no belief, `u = 1`, uniform base rate.
    pub fn vacuous(k: usize) -> Self {
        Opinion {
            belief: vec![0.0; k],
            uncertainty: 1.0,
            base_rate: vec![1.0 / k as f64; k],
        }
    }

    pub fn from_evidence(evidence: &[f64], base_rate: &[f64]) -> Result<Self> {
        check_evidence(evidence)?;
        same_k(evidence.len(), base_rate.len())?;
        let k = evidence.len() as f64;
        let s: f64 = evidence.iter().map(|e| e + 1.0).sum();
        Opinion::new(evidence.iter().map(|e| e / s).collect(), k / s, base_rate.to_vec())
    }

    pub fn belief(&self) -> &[f64] {
        &self.belief
    }

    pub fn uncertainty(&self) -> f64 {
        self.uncertainty
    }

    pub fn base_rate(&self) -> &[f64] {
        &self.base_rate
    }

    pub fn class_count(&self) -> usize {
        self.belief.len()
    }

    /// Projected probability `p_k = b_k + a_k u`.
    pub fn project(&self) -> Vec<f64> {
        self.belief
            .iter()
            .zip(&self.base_rate)
            .map(|(b, a)| b + a * self.uncertainty)
            .collect()
    }

    /// Evidence recovered as `e_k = K b_k / u`, inverting [`Opinion::from_evidence`].
    pub fn evidence(&self) -> Result<Vec<f64>> {
        if self.uncertainty <= 0.0 {
            return Err(Error::domain("a dogmatic opinion (u = 0) has unbounded evidence"));
        }
        let k = self.class_count() as f64;
        Ok(self.belief.iter().map(|b| k * b / self.uncertainty).collect())
    }

    /// Dirichlet parameters `α = K b / u + 1`.
    pub fn to_dirichlet(&self) -> Result<DirichletParams> {
        DirichletParams::from_evidence(&self.evidence()?)
    }

    /// Uncertainty-weighted combination `A ⊕ B`:
    /// `b = (b_A u_B + b_B u_A) / (u_A + u_B)`, `u = 2 u_A u_B / (u_A + u_B)`,
    /// `a = (a_A + a_B) / 2`.
    pub fn fuse(&self, other: &Opinion) -> Result<Opinion> {
        same_k(self.class_count(), other.class_count())?;
        let (ua, ub) = (self.uncertainty, other.uncertainty);
        let denom = ua + ub;
        if denom <= 0.0 {
            return Err(Error::domain("cannot fuse two dogmatic opinions (u_A = u_B = 0)"));
        }
        Ok(Opinion {
            belief: self
                .belief
                .iter()
                .zip(&other.belief)
                .map(|(ba, bb)| (ba * ub + bb * ua) / denom)
                .collect(),
            uncertainty: 2.0 * ua * ub / denom,
            base_rate: self
                .base_rate
                .iter()
                .zip(&other.base_rate)
                .map(|(a, b)| (a + b) / 2.0)
                .collect(),
        })
    }
}

/// Left fold of [`Opinion::fuse`] in input order.
pub fn fuse_many(opinions: &[Opinion]) -> Result<Opinion> {
    let (first, rest) = opinions
        .split_first()
        .ok_or_else(|| Error::domain("fuse_many needs at least one opinion"))?;
    rest.iter().try_fold(first.clone(), |acc, o| acc.fuse(o))
}

/// Conflict degree `c = c_p · c_c`, with `c_p` half the L1 distance between
/// projected probabilities and `c_c = (1 - u_A)(1 - u_B)`.
pub fn conflict(a: &Opinion, b: &Opinion) -> Result<f64> {
    same_k(a.class_count(), b.class_count())?;
    let cp = a
        .project()
        .iter()
        .zip(b.project())
        .map(|(x, y)| (x - y).abs())
        .sum::<f64>()
        / 2.0;
    let cc = (1.0 - a.uncertainty) * (1.0 - b.uncertainty);
    Ok(cp * cc)
}
