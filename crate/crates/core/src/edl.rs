//! Evidential objectives over Dirichlet concentrations.
//!
//! Every loss here takes a `batch × K` matrix of concentrations `α` (one row
//! per instance) as a graph node and returns the batch mean as a `1×1` node.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numgraph::{Graph, Tensor, Var};
use crate::subjective_logic::DirichletParams;

/// Uncertainty floor applied before the opinion-fusion rule divides by `u`.
pub const MIN_UNCERTAINTY: f64 = 1e-12;

/// Linear warm-up `λ_t = min(1, t / E)` of the KL regulariser.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnnealSchedule {
    pub annealing_steps: usize,
    pub current_epoch: usize,
}

impl AnnealSchedule {
    pub fn new(annealing_steps: usize, current_epoch: usize) -> Result<Self> {
        if annealing_steps == 0 {
            return Err(Error::domain("annealing steps must be positive"));
        }
        Ok(AnnealSchedule {
            annealing_steps,
            current_epoch,
        })
    }

    pub fn lambda(&self) -> f64 {
        (self.current_epoch as f64 / self.annealing_steps as f64).min(1.0)
    }
}

/// Weights of the per-modality and consistency terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdlWeights {
    pub beta: f64,
    pub gamma: f64,
}

impl Default for EdlWeights {
    fn default() -> Self {
        EdlWeights { beta: 1.0, gamma: 1.0 }
    }
}

/// How per-modality concentrations are combined into `α̂`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FusionMode {
    /// `α̂ = Σ w_m α^m` with `w_m ∝ 1 - u^m`.
    #[default]
    WeightedAverage,
    /// Fuse the opinions with the `⊕` rule and convert back to evidence.
    OpinionFusion,
    /// Unweighted mean of the concentrations.
    Average,
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FusionMode::WeightedAverage => "weighted_average",
            FusionMode::OpinionFusion => "opinion_fusion",
            FusionMode::Average => "average",
        })
    }
}

impl FromStr for FusionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "weighted_average" => Ok(FusionMode::WeightedAverage),
            "opinion_fusion" => Ok(FusionMode::OpinionFusion),
            "average" => Ok(FusionMode::Average),
            other => Err(format!("unknown fusion mode `{other}` (weighted_average | opinion_fusion | average)")),
        }
    }
}

/// One-hot rows for class indices.
pub fn one_hot(labels: &[usize], classes: usize) -> Tensor {
    Tensor::from_fn(labels.len(), classes, |r, c| f64::from(labels[r] == c))
}

fn check_one_hot(y: &Tensor) -> Result<()> {
    for r in 0..y.rows() {
        let row = y.row_slice(r);
        let ones = row.iter().filter(|&&v| v == 1.0).count();
        let zeros = row.iter().filter(|&&v| v == 0.0).count();
        if ones != 1 || zeros != row.len() - 1 {
            return Err(Error::domain(format!("label row {r} is not one-hot")));
        }
    }
    Ok(())
}

fn check_labels(g: &Graph, alpha: Var, y: &Tensor) -> Result<()> {
    if g.shape(alpha) != y.shape() {
        return Err(Error::shape("labels", g.shape(alpha), y.shape()));
    }
    check_one_hot(y)
}

/// Per-instance `ψ(S) - ψ(α_y)` as a `batch × 1` node.
fn ace_rows(g: &mut Graph, alpha: Var, y: Var) -> Result<Var> {
    let s = g.sum_rows(alpha);
    let psi_s = g.digamma(s)?;
    let psi_a = g.digamma(alpha)?;
    let picked = g.mul(psi_a, y)?;
    let picked = g.sum_rows(picked);
    g.sub(psi_s, picked)
}

/// Per-instance KL[Dir(α̃) ‖ Dir(1)] with `α̃ = y + (1 - y) ⊙ α`.
fn kl_rows(g: &mut Graph, alpha: Var, y: Var) -> Result<Var> {
    let k = g.shape(alpha)[1] as f64;
    // α̃ = α + y ⊙ (1 - α)
    let one_minus = g.scale(alpha, -1.0);
    let one_minus = g.add_scalar(one_minus, 1.0);
    let true_part = g.mul(y, one_minus)?;
    let tilde = g.add(alpha, true_part)?;

    let s = g.sum_rows(tilde);
    let lg_s = g.lgamma(s)?;
    let lg_a = g.lgamma(tilde)?;
    let lg_a = g.sum_rows(lg_a);
    let ln_gamma_k = crate::numgraph::lgamma(k)?;
    let head = g.sub(lg_s, lg_a)?;
    let head = g.add_scalar(head, -ln_gamma_k);

    let psi_a = g.digamma(tilde)?;
    let psi_s = g.digamma(s)?;
    let diff = g.sub(psi_a, psi_s)?;
    let excess = g.add_scalar(tilde, -1.0);
    let tail = g.mul(excess, diff)?;
    let tail = g.sum_rows(tail);
    g.add(head, tail)
}

fn acc_rows(g: &mut Graph, alpha: Var, y: Var, schedule: AnnealSchedule) -> Result<Var> {
    let ace = ace_rows(g, alpha, y)?;
    let lambda = schedule.lambda();
    if lambda == 0.0 {
        return Ok(ace);
    }
    let kl = kl_rows(g, alpha, y)?;
    let kl = g.scale(kl, lambda);
    g.add(ace, kl)
}

/// Adaptive cross-entropy `Σ_j y_j (ψ(S) - ψ(α_j))`, batch mean.
pub fn ace_loss(g: &mut Graph, alpha: Var, y: &Tensor) -> Result<Var> {
    check_labels(g, alpha, y)?;
    let yv = g.constant(y.clone());
    let rows = ace_rows(g, alpha, yv)?;
    Ok(g.mean(rows))
}

/// KL divergence from `Dir(α̃)` to the uniform Dirichlet, batch mean.
pub fn kl_to_uniform(g: &mut Graph, alpha: Var, y: &Tensor) -> Result<Var> {
    check_labels(g, alpha, y)?;
    let yv = g.constant(y.clone());
    let rows = kl_rows(g, alpha, yv)?;
    Ok(g.mean(rows))
}

/// `L_ACE + λ_t L_KL`, batch mean.
pub fn acc_loss(g: &mut Graph, alpha: Var, y: &Tensor, schedule: AnnealSchedule) -> Result<Var> {
    check_labels(g, alpha, y)?;
    let yv = g.constant(y.clone());
    let rows = acc_rows(g, alpha, yv, schedule)?;
    Ok(g.mean(rows))
}

/// Per-instance pairwise conflict between two modalities (uniform base
/// rate), as a `batch × 1` node. With a uniform base rate the projected
/// probability reduces to `p = α / S`.
pub fn conflict_rows(g: &mut Graph, a: Var, b: Var) -> Result<Var> {
    if g.shape(a) != g.shape(b) {
        return Err(Error::shape("conflict", g.shape(a), g.shape(b)));
    }
    let k = g.shape(a)[1] as f64;
    let sa = g.sum_rows(a);
    let sb = g.sum_rows(b);
    let pa = g.div(a, sa)?;
    let pb = g.div(b, sb)?;
    let d = g.sub(pa, pb)?;
    let d = g.abs(d);
    let d = g.sum_rows(d);
    let cp = g.scale(d, 0.5);
    // 1 - u = 1 - K / S
    let kv = g.scalar(k);
    let ua = g.div(kv, sa)?;
    let ub = g.div(kv, sb)?;
    let ca = g.neg(ua);
    let ca = g.add_scalar(ca, 1.0);
    let cb = g.neg(ub);
    let cb = g.add_scalar(cb, 1.0);
    let cc = g.mul(ca, cb)?;
    g.mul(cp, cc)
}

fn consistency_rows(g: &mut Graph, alphas: &[Var]) -> Result<Var> {
    let m = alphas.len();
    if m < 2 {
        return Err(Error::domain(format!("consistency loss needs at least two modalities, got {m}")));
    }
    let mut total: Option<Var> = None;
    for p in 0..m {
        for q in 0..m {
            if p == q {
                continue;
            }
            let c = conflict_rows(g, alphas[p], alphas[q])?;
            total = Some(match total {
                Some(t) => g.add(t, c)?,
                None => c,
            });
        }
    }
    let total = total.expect("m >= 2 yields at least one pair");
    Ok(g.scale(total, 1.0 / (m - 1) as f64))
}

/// `1/(M-1) Σ_p Σ_{q≠p} c(ω^p, ω^q)` over ordered pairs, batch mean.
pub fn consistency_loss(g: &mut Graph, alphas: &[Var]) -> Result<Var> {
    let rows = consistency_rows(g, alphas)?;
    Ok(g.mean(rows))
}

/// Combines per-modality concentrations into `α̂` (`batch × K`).
pub fn fuse_alpha(g: &mut Graph, alphas: &[Var], mode: FusionMode) -> Result<Var> {
    let Some(&first) = alphas.first() else {
        return Err(Error::domain("fuse_alpha needs at least one modality"));
    };
    for &a in alphas {
        if g.shape(a) != g.shape(first) {
            return Err(Error::shape("fuse_alpha", g.shape(first), g.shape(a)));
        }
    }
    if alphas.len() == 1 {
        return Ok(first);
    }
    match mode {
        FusionMode::WeightedAverage => weighted_average(g, alphas),
        FusionMode::OpinionFusion => opinion_fusion(g, alphas),
        FusionMode::Average => {
            let mut total = first;
            for &a in &alphas[1..] {
                total = g.add(total, a)?;
            }
            Ok(g.scale(total, 1.0 / alphas.len() as f64))
        }
    }
}

fn weighted_average(g: &mut Graph, alphas: &[Var]) -> Result<Var> {
    let [rows, k] = g.shape(alphas[0]);
    let kv = g.scalar(k as f64);
    let mut certainty = Vec::with_capacity(alphas.len());
    for &a in alphas {
        let s = g.sum_rows(a);
        let u = g.div(kv, s)?;
        let c = g.neg(u);
        certainty.push(g.add_scalar(c, 1.0));
    }
    let mut denom = certainty[0];
    for &c in &certainty[1..] {
        denom = g.add(denom, c)?;
    }
    // rows where every modality is vacuous fall back to uniform weights
    let vacuous = Tensor::from_fn(rows, 1, |r, _| f64::from(g.value(denom).get(r, 0) <= 0.0));
    let any_vacuous = vacuous.data().iter().any(|&v| v > 0.0);
    if any_vacuous {
        let pad = g.constant(vacuous.clone());
        let m = g.constant(vacuous.map(|v| v * alphas.len() as f64));
        denom = g.add(denom, m)?;
        for c in certainty.iter_mut() {
            *c = g.add(*c, pad)?;
        }
    }
    let mut fused: Option<Var> = None;
    for (&a, &c) in alphas.iter().zip(&certainty) {
        let w = g.div(c, denom)?;
        let term = g.mul(a, w)?;
        fused = Some(match fused {
            Some(f) => g.add(f, term)?,
            None => term,
        });
    }
    Ok(fused.expect("at least two modalities"))
}

fn opinion_fusion(g: &mut Graph, alphas: &[Var]) -> Result<Var> {
    let k = g.shape(alphas[0])[1] as f64;
    let kv = g.scalar(k);
    let to_opinion = |g: &mut Graph, a: Var| -> Result<(Var, Var)> {
        let s = g.sum_rows(a);
        let e = g.add_scalar(a, -1.0);
        let b = g.div(e, s)?;
        let u = g.div(kv, s)?;
        Ok((b, g.clamp_min(u, MIN_UNCERTAINTY)))
    };
    let (mut b, mut u) = to_opinion(g, alphas[0])?;
    for &a in &alphas[1..] {
        let (b2, u2) = to_opinion(g, a)?;
        let denom = g.add(u, u2)?;
        let x = g.mul(b, u2)?;
        let y = g.mul(b2, u)?;
        let num = g.add(x, y)?;
        let nb = g.div(num, denom)?;
        let prod = g.mul(u, u2)?;
        let prod = g.scale(prod, 2.0);
        let nu = g.div(prod, denom)?;
        b = nb;
        u = nu;
    }
    // e = K b / u, α = e + 1
    let e = g.div(b, u)?;
    let e = g.scale(e, k);
    Ok(g.add_scalar(e, 1.0))
}

/// Value-level [`fuse_alpha`] for a single instance.
pub fn fuse_dirichlet(alphas: &[DirichletParams], mode: FusionMode) -> Result<DirichletParams> {
    let mut g = Graph::new();
    let vars = alphas
        .iter()
        .map(|a| g.constant(Tensor::row(a.alpha())))
        .collect::<Vec<_>>();
    let fused = fuse_alpha(&mut g, &vars, mode)?;
    DirichletParams::new(g.value(fused).data().to_vec())
}

/// `L_ACC(α̂) + β Σ_m L_ACC(α^m) + γ L_CON`, batch mean.
pub fn edl_total(
    g: &mut Graph,
    alphas: &[Var],
    y: &Tensor,
    schedule: AnnealSchedule,
    weights: EdlWeights,
    mode: FusionMode,
) -> Result<Var> {
    let fused = fuse_alpha(g, alphas, mode)?;
    check_labels(g, fused, y)?;
    let yv = g.constant(y.clone());
    let mut total = acc_rows(g, fused, yv, schedule)?;
    if weights.beta != 0.0 {
        for &a in alphas {
            let term = acc_rows(g, a, yv, schedule)?;
            let term = g.scale(term, weights.beta);
            total = g.add(total, term)?;
        }
    }
    if weights.gamma != 0.0 && alphas.len() >= 2 {
        let con = consistency_rows(g, alphas)?;
        let con = g.scale(con, weights.gamma);
        total = g.add(total, con)?;
    }
    Ok(g.mean(total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subjective_logic::{conflict, fuse_many, Opinion};
    use proptest::prelude::*;

    fn eval(alpha: &[f64], label: usize, f: impl Fn(&mut Graph, Var, &Tensor) -> Result<Var>) -> f64 {
        let mut g = Graph::new();
        let a = g.param(Tensor::row(alpha));
        let y = one_hot(&[label], alpha.len());
        let out = f(&mut g, a, &y).unwrap();
        g.item(out)
    }

    #[test]
    fn ace_closed_forms() {
        assert!((eval(&[2.0, 1.0], 0, ace_loss) - 0.5).abs() < 1e-12);
        for label in 0..3 {
            assert!((eval(&[1.0, 1.0, 1.0], label, ace_loss) - 1.5).abs() < 1e-12);
        }
    }

    #[test]
    fn ace_vanishes_with_true_evidence() {
        let mut last = f64::INFINITY;
        for scale in [1.0, 10.0, 100.0, 1e4, 1e6] {
            let v = eval(&[scale, 1.0, 1.0], 0, ace_loss);
            assert!(v > 0.0 && v < last);
            last = v;
        }
        assert!(last < 1e-5);
    }

    #[test]
    fn ace_rejects_soft_labels() {
        let mut g = Graph::new();
        let a = g.param(Tensor::row(&[2.0, 2.0]));
        let err = ace_loss(&mut g, a, &Tensor::row(&[0.5, 0.5])).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }

    #[test]
    fn kl_zero_cases() {
        assert!(eval(&[5.0, 1.0, 1.0], 0, kl_to_uniform).abs() < 1e-14);
        assert!(eval(&[1.0, 1.0, 1.0], 2, kl_to_uniform).abs() < 1e-14);
    }

    #[test]
    fn kl_against_beta_marginal() {
        // α̃ = (1,3,1): the density depends only on p₂ ~ Beta(3, 2), so
        // KL = ln 6 + 2 E[ln p₂] with E[ln p₂] = -(1/3 + 1/4)
        let expected = 6f64.ln() - 7.0 / 6.0;
        assert!((eval(&[1.0, 3.0, 1.0], 0, kl_to_uniform) - expected).abs() < 1e-12);
    }

    #[test]
    fn anneal_schedule_values() {
        let e = 10;
        assert_eq!(AnnealSchedule::new(e, 0).unwrap().lambda(), 0.0);
        assert_eq!(AnnealSchedule::new(e, 5).unwrap().lambda(), 0.5);
        assert_eq!(AnnealSchedule::new(e, 10).unwrap().lambda(), 1.0);
        assert_eq!(AnnealSchedule::new(e, 100).unwrap().lambda(), 1.0);
        assert!(AnnealSchedule::new(0, 0).is_err());
    }

    #[test]
    fn acc_follows_schedule() {
        let alpha = [1.5, 4.0, 2.0];
        let ace = eval(&alpha, 0, ace_loss);
        let kl = eval(&alpha, 0, kl_to_uniform);
        for (t, lambda) in [(0, 0.0), (5, 0.5), (100, 1.0)] {
            let s = AnnealSchedule::new(10, t).unwrap();
            let acc = eval(&alpha, 0, |g, a, y| acc_loss(g, a, y, s));
            assert!((acc - (ace + lambda * kl)).abs() < 1e-12);
        }
    }

    fn con(alphas: &[&[f64]]) -> f64 {
        let mut g = Graph::new();
        let vars: Vec<Var> = alphas.iter().map(|a| g.param(Tensor::row(a))).collect();
        let out = consistency_loss(&mut g, &vars).unwrap();
        g.item(out)
    }

    #[test]
    fn consistency_cases() {
        assert_eq!(con(&[&[3.0, 1.0], &[3.0, 1.0]]), 0.0);
        assert_eq!(con(&[&[1.0, 1.0, 1.0], &[1.0, 1.0, 1.0]]), 0.0);
        let a = [4.0, 1.0, 2.0];
        let b = [1.0, 6.0, 1.5];
        let c = conflict(
            &DirichletParams::new(a.to_vec()).unwrap().opinion(),
            &DirichletParams::new(b.to_vec()).unwrap().opinion(),
        )
        .unwrap();
        assert!((con(&[&a, &b]) - 2.0 * c).abs() < 1e-14);
        let mut g = Graph::new();
        let one = g.param(Tensor::row(&a));
        assert!(matches!(consistency_loss(&mut g, &[one]), Err(Error::Domain(_))));
    }

    #[test]
    fn fuse_alpha_examples() {
        let a = DirichletParams::new(vec![4.0, 1.0, 1.0]).unwrap();
        let v = DirichletParams::new(vec![1.0, 1.0, 1.0]).unwrap();
        for mode in [FusionMode::WeightedAverage, FusionMode::OpinionFusion] {
            let same = fuse_dirichlet(&[a.clone(), a.clone()], mode).unwrap();
            assert!(same.alpha().iter().zip(a.alpha()).all(|(x, y)| (x - y).abs() < 1e-12));
        }
        let f = fuse_dirichlet(&[a.clone(), v.clone()], FusionMode::WeightedAverage).unwrap();
        assert_eq!(f.alpha(), &[4.0, 1.0, 1.0]);
        // equal uncertainty -> plain mean
        let b = DirichletParams::new(vec![1.0, 4.0, 1.0]).unwrap();
        let f = fuse_dirichlet(&[a.clone(), b], FusionMode::WeightedAverage).unwrap();
        assert!(f.alpha().iter().zip([2.5, 2.5, 1.0]).all(|(x, y)| (x - y).abs() < 1e-12));
        // both vacuous -> uniform weights
        let f = fuse_dirichlet(&[v.clone(), v.clone()], FusionMode::WeightedAverage).unwrap();
        assert_eq!(f.alpha(), &[1.0, 1.0, 1.0]);
        assert!(fuse_dirichlet(&[], FusionMode::WeightedAverage).is_err());
    }

    #[test]
    fn opinion_fusion_matches_subjective_logic() {
        let alphas = [vec![3.0, 1.5, 1.0, 7.0], vec![1.2, 9.0, 2.0, 1.0], vec![2.0, 2.0, 2.0, 2.0]];
        let ds: Vec<DirichletParams> = alphas.iter().map(|a| DirichletParams::new(a.clone()).unwrap()).collect();
        let fused = fuse_dirichlet(&ds, FusionMode::OpinionFusion).unwrap();
        let ops: Vec<Opinion> = ds.iter().map(DirichletParams::opinion).collect();
        let oracle = fuse_many(&ops).unwrap().to_dirichlet().unwrap();
        for (x, y) in fused.alpha().iter().zip(oracle.alpha()) {
            assert!((x - y).abs() < 1e-10, "{x} vs {y}");
        }
    }

    #[test]
    fn edl_total_reductions() {
        let a = [3.0, 1.2, 2.0];
        let b = [1.5, 4.0, 1.0];
        let y = one_hot(&[0], 3);
        let s = AnnealSchedule::new(10, 4).unwrap();
        let mut g = Graph::new();
        let va = g.param(Tensor::row(&a));
        let vb = g.param(Tensor::row(&b));
        let total = edl_total(&mut g, &[va, vb], &y, s, EdlWeights { beta: 0.0, gamma: 0.0 }, FusionMode::WeightedAverage).unwrap();
        let fused = fuse_alpha(&mut g, &[va, vb], FusionMode::WeightedAverage).unwrap();
        let acc = acc_loss(&mut g, fused, &y, s).unwrap();
        assert!((g.item(total) - g.item(acc)).abs() < 1e-14);

        let mut g = Graph::new();
        let va = g.param(Tensor::row(&a));
        let vb = g.param(Tensor::row(&a));
        let w = EdlWeights { beta: 1.0, gamma: 3.0 };
        let with_con = edl_total(&mut g, &[va, vb], &y, s, w, FusionMode::WeightedAverage).unwrap();
        let w0 = EdlWeights { beta: 1.0, gamma: 0.0 };
        let without = edl_total(&mut g, &[va, vb], &y, s, w0, FusionMode::WeightedAverage).unwrap();
        assert_eq!(g.item(with_con), g.item(without));
    }

    #[test]
    fn ace_gradient_signs() {
        let mut g = Graph::new();
        let a = g.param(Tensor::row(&[2.0, 3.0, 1.5]));
        let loss = ace_loss(&mut g, a, &one_hot(&[1], 3)).unwrap();
        g.backward(loss).unwrap();
        let grad = g.grad(a).unwrap();
        assert!(grad.get(0, 1) < 0.0);
        assert!(grad.get(0, 0) > 0.0 && grad.get(0, 2) > 0.0);
    }

    proptest! {
        #[test]
        fn ace_and_kl_nonnegative(alpha in proptest::collection::vec(1.0f64..40.0, 2..6), pick in 0usize..6) {
            let label = pick % alpha.len();
            prop_assert!(eval(&alpha, label, ace_loss) >= 0.0);
            prop_assert!(eval(&alpha, label, kl_to_uniform) >= -1e-12);
        }
    }

    #[test]
    fn plain_average_and_mode_names() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::row(&[1.0, 5.0]));
        let b = g.constant(Tensor::row(&[3.0, 1.0]));
        let f = fuse_alpha(&mut g, &[a, b], FusionMode::Average).unwrap();
        assert_eq!(g.value(f).data(), &[2.0, 3.0]);
        for mode in [FusionMode::WeightedAverage, FusionMode::OpinionFusion, FusionMode::Average] {
            assert_eq!(mode.to_string().parse::<FusionMode>().unwrap(), mode);
        }
        assert!("mean".parse::<FusionMode>().is_err());
    }
}
