//! Calibrated cross-entropy, the combined training objective, calibrated
//! prediction and zero-shot metrics.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numgraph::{Graph, Tensor, Var};

/// Class attribute vectors (`|C| × |A|`) with the seen/unseen partition.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassSemanticMatrix {
    z: Tensor,
    seen: Vec<usize>,
    unseen: Vec<usize>,
    is_unseen: Vec<bool>,
}

impl ClassSemanticMatrix {
    /// `seen_flags[c]` marks class `c` as seen.
    pub fn new(z: Tensor, seen_flags: &[bool]) -> Result<Self> {
        if seen_flags.len() != z.rows() {
            return Err(Error::shape("class semantics", z.shape(), [seen_flags.len(), z.cols()]));
        }
        if !z.all_finite() {
            return Err(Error::numeric("class attribute vectors must be finite"));
        }
        let seen: Vec<usize> = (0..z.rows()).filter(|&c| seen_flags[c]).collect();
        let unseen: Vec<usize> = (0..z.rows()).filter(|&c| !seen_flags[c]).collect();
        if seen.is_empty() || unseen.is_empty() {
            return Err(Error::domain(format!(
                "need both seen and unseen classes, got {} seen and {} unseen",
                seen.len(),
                unseen.len()
            )));
        }
        Ok(ClassSemanticMatrix {
            z,
            seen,
            unseen,
            is_unseen: seen_flags.iter().map(|&s| !s).collect(),
        })
    }

    pub fn z(&self) -> &Tensor {
        &self.z
    }

    pub fn seen(&self) -> &[usize] {
        &self.seen
    }

    pub fn unseen(&self) -> &[usize] {
        &self.unseen
    }

    pub fn is_unseen(&self, class: usize) -> bool {
        self.is_unseen[class]
    }

    pub fn class_count(&self) -> usize {
        self.z.rows()
    }

    pub fn attribute_count(&self) -> usize {
        self.z.cols()
    }

    /// `1 × |C|` row holding `delta` at unseen classes and 0 elsewhere.
    pub fn unseen_indicator(&self, delta: f64) -> Tensor {
        Tensor::from_fn(1, self.class_count(), |_, c| if self.is_unseen[c] { delta } else { 0.0 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionCoefficients {
    pub mu: f64,
    pub lambda_cal: f64,
    pub lambda_edl: f64,
    /// Added to unseen-class scores.
    pub delta: f64,
}

impl Default for FusionCoefficients {
    fn default() -> Self {
        FusionCoefficients {
            mu: 0.5,
            lambda_cal: 0.2,
            lambda_edl: 0.001,
            delta: 1.0,
        }
    }
}

impl FusionCoefficients {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.mu) {
            return Err(Error::domain(format!("mu must lie in [0, 1], got {}", self.mu)));
        }
        for (name, v) in [("lambda_cal", self.lambda_cal), ("lambda_edl", self.lambda_edl), ("delta", self.delta)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::domain(format!("{name} must be finite and nonnegative, got {v}")));
            }
        }
        Ok(())
    }
}

/// `μ f_A + (1 − μ) f_V`.
pub fn fused_embedding(g: &mut Graph, f_a: Var, f_v: Var, mu: f64) -> Result<Var> {
    if g.shape(f_a) != g.shape(f_v) {
        return Err(Error::shape("fused_embedding", g.shape(f_a), g.shape(f_v)));
    }
    if mu == 1.0 {
        return Ok(f_a);
    }
    if mu == 0.0 {
        return Ok(f_v);
    }
    let a = g.scale(f_a, mu);
    let v = g.scale(f_v, 1.0 - mu);
    g.add(a, v)
}

/// Batch mean of the seen-class cross-entropy of the scores `f · z^c`, minus
/// `λ_CAL` times the summed log-probability of the unseen classes under a
/// softmax over all classes with `δ` added to unseen scores.
pub fn arise_loss(
    g: &mut Graph,
    fused: Var,
    labels: &[usize],
    semantics: &ClassSemanticMatrix,
    coeffs: &FusionCoefficients,
) -> Result<Var> {
    let [batch, _] = g.shape(fused);
    if batch != labels.len() {
        return Err(Error::shape("arise_loss labels", g.shape(fused), [labels.len(), 1]));
    }
    if batch == 0 {
        return Err(Error::domain("arise_loss needs a nonempty batch"));
    }
    let mut seen_pos = vec![usize::MAX; semantics.class_count()];
    for (i, &c) in semantics.seen().iter().enumerate() {
        seen_pos[c] = i;
    }
    for &y in labels {
        if y >= semantics.class_count() || semantics.is_unseen(y) {
            return Err(Error::domain(format!("training label {y} is not a seen class")));
        }
    }
    let z = g.constant(semantics.z().clone());
    let scores = g.matmul_t(fused, z)?;

    let seen_scores = g.select_cols(scores, semantics.seen())?;
    let log_p = g.log_softmax_rows(seen_scores)?;
    let pick = g.constant(Tensor::from_fn(batch, semantics.seen().len(), |i, j| {
        f64::from(seen_pos[labels[i]] == j)
    }));
    let picked = g.mul(log_p, pick)?;
    let ce = g.sum(picked);
    let ce = g.scale(ce, -1.0 / batch as f64);
    if coeffs.lambda_cal == 0.0 {
        return Ok(ce);
    }

    let shift = g.constant(semantics.unseen_indicator(coeffs.delta));
    let calibrated = g.add(scores, shift)?;
    let log_all = g.log_softmax_rows(calibrated)?;
    let unseen = g.select_cols(log_all, semantics.unseen())?;
    let cal = g.sum(unseen);
    let cal = g.scale(cal, -coeffs.lambda_cal / batch as f64);
    g.add(ce, cal)
}

/// Per-batch component losses feeding [`total_loss`].
#[derive(Debug, Clone, Copy)]
pub struct LossComponents {
    pub arise: Var,
    pub vicl: Var,
    pub digs: Var,
    pub edl: Var,
}

/// `L_ARISE + L_VICL + L_DIGS + λ_EDL · L_EDL`.
pub fn total_loss(g: &mut Graph, parts: &LossComponents, coeffs: &FusionCoefficients) -> Result<Var> {
    let s = g.add(parts.arise, parts.vicl)?;
    let s = g.add(s, parts.digs)?;
    let e = g.scale(parts.edl, coeffs.lambda_edl);
    g.add(s, e)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EvalMode {
    /// Unseen test instances, unseen candidates only.
    #[default]
    Czsl,
    /// Both test splits, every class a candidate.
    Gzsl,
}

impl fmt::Display for EvalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvalMode::Czsl => "czsl",
            EvalMode::Gzsl => "gzsl",
        })
    }
}

impl FromStr for EvalMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "czsl" => Ok(EvalMode::Czsl),
            "gzsl" => Ok(EvalMode::Gzsl),
            other => Err(format!("unknown evaluation mode `{other}` (czsl | gzsl)")),
        }
    }
}

/// Calibrated class scores `(μ f_A + (1−μ) f_V) · z^c + δ [c unseen]` for every class.
pub fn class_scores(f_a: &[f64], f_v: &[f64], semantics: &ClassSemanticMatrix, coeffs: &FusionCoefficients) -> Result<Vec<f64>> {
    let width = semantics.attribute_count();
    if f_a.len() != width || f_v.len() != width {
        return Err(Error::shape("class_scores", [1, f_a.len()], [1, f_v.len()]));
    }
    let z = semantics.z();
    Ok((0..semantics.class_count())
        .map(|c| {
            let zc = z.row_slice(c);
            let sa: f64 = f_a.iter().zip(zc).map(|(x, y)| x * y).sum();
            let sv: f64 = f_v.iter().zip(zc).map(|(x, y)| x * y).sum();
            let indicator = if semantics.is_unseen(c) { coeffs.delta } else { 0.0 };
            coeffs.mu * sa + (1.0 - coeffs.mu) * sv + indicator
        })
        .collect())
}

/// Highest-scoring candidate; ties go to the lowest class id.
pub fn argmax_over(scores: &[f64], candidates: impl IntoIterator<Item = usize>) -> Option<usize> {
    let mut best: Option<usize> = None;
    for c in candidates {
        if best.is_none_or(|b| scores[c] > scores[b] || (scores[c] == scores[b] && c < b)) {
            best = Some(c);
        }
    }
    best
}

pub fn predict(
    f_a: &[f64],
    f_v: &[f64],
    semantics: &ClassSemanticMatrix,
    coeffs: &FusionCoefficients,
    mode: EvalMode,
) -> Result<usize> {
    let scores = class_scores(f_a, f_v, semantics, coeffs)?;
    let best = match mode {
        EvalMode::Czsl => argmax_over(&scores, semantics.unseen().iter().copied()),
        EvalMode::Gzsl => argmax_over(&scores, 0..semantics.class_count()),
    };
    Ok(best.expect("semantics has classes in both splits"))
}

/// `2SU / (S + U)`, zero when either is zero.
pub fn harmonic_mean(seen: f64, unseen: f64) -> f64 {
    if seen + unseen == 0.0 {
        0.0
    } else {
        2.0 * seen * unseen / (seen + unseen)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GzslMetrics {
    pub seen: f64,
    pub unseen: f64,
    pub harmonic: f64,
}

impl GzslMetrics {
    pub fn from_accuracies(seen: f64, unseen: f64) -> Self {
        GzslMetrics {
            seen,
            unseen,
            harmonic: harmonic_mean(seen, unseen),
        }
    }
}

/// Mean over the given classes (those with at least one instance) of their
/// per-class top-1 accuracy.
fn macro_accuracy(predictions: &[usize], labels: &[usize], classes: &[usize], split: &str) -> Result<f64> {
    let max = classes.iter().copied().max().unwrap_or(0);
    let mut hit = vec![0usize; max + 1];
    let mut total = vec![0usize; max + 1];
    let mut member = vec![false; max + 1];
    for &c in classes {
        member[c] = true;
    }
    for (&p, &y) in predictions.iter().zip(labels) {
        if y <= max && member[y] {
            total[y] += 1;
            hit[y] += usize::from(p == y);
        }
    }
    let present: Vec<usize> = classes.iter().copied().filter(|&c| total[c] > 0).collect();
    if present.is_empty() {
        return Err(Error::domain(format!("no {split}-class instances to evaluate")));
    }
    Ok(present.iter().map(|&c| hit[c] as f64 / total[c] as f64).sum::<f64>() / present.len() as f64)
}

fn check_lengths(predictions: &[usize], labels: &[usize]) -> Result<()> {
    if predictions.len() != labels.len() {
        return Err(Error::shape("metrics", [predictions.len(), 1], [labels.len(), 1]));
    }
    Ok(())
}

/// Macro-averaged seen accuracy `S`, unseen accuracy `U` (fractions in
/// `[0, 1]`) and their harmonic mean.
pub fn gzsl_metrics(predictions: &[usize], labels: &[usize], semantics: &ClassSemanticMatrix) -> Result<GzslMetrics> {
    check_lengths(predictions, labels)?;
    let s = macro_accuracy(predictions, labels, semantics.seen(), "seen")?;
    let u = macro_accuracy(predictions, labels, semantics.unseen(), "unseen")?;
    Ok(GzslMetrics::from_accuracies(s, u))
}

/// Macro-averaged top-1 accuracy over unseen classes.
pub fn czsl_metrics(predictions: &[usize], labels: &[usize], semantics: &ClassSemanticMatrix) -> Result<f64> {
    check_lengths(predictions, labels)?;
    macro_accuracy(predictions, labels, semantics.unseen(), "unseen")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numgraph::check_gradients;
    use proptest::prelude::*;

    fn toy() -> ClassSemanticMatrix {
        // classes 0, 1 seen; class 2 unseen
        let z = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.6, 0.6]]).unwrap();
        ClassSemanticMatrix::new(z, &[true, true, false]).unwrap()
    }

    #[test]
    fn semantics_validation() {
        assert!(ClassSemanticMatrix::new(Tensor::zeros(2, 2), &[true, true]).is_err());
        assert!(ClassSemanticMatrix::new(Tensor::zeros(2, 2), &[true]).is_err());
        let s = toy();
        assert_eq!(s.seen(), &[0, 1]);
        assert_eq!(s.unseen(), &[2]);
        assert_eq!(s.unseen_indicator(2.5).data(), &[0.0, 0.0, 2.5]);
    }

    #[test]
    fn coefficient_validation() {
        assert!(FusionCoefficients::default().validate().is_ok());
        let bad = FusionCoefficients {
            mu: 1.5,
            ..FusionCoefficients::default()
        };
        assert!(bad.validate().is_err());
        let bad = FusionCoefficients {
            delta: -1.0,
            ..FusionCoefficients::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn fused_embedding_extremes_and_linearity() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::row(&[1.0, -2.0, 0.5]));
        let v = g.constant(Tensor::row(&[0.3, 0.7, 4.0]));
        let f1 = fused_embedding(&mut g, a, v, 1.0).unwrap();
        let f0 = fused_embedding(&mut g, a, v, 0.0).unwrap();
        assert_eq!(g.value(f1), g.value(a));
        assert_eq!(g.value(f0), g.value(v));
        let z = [0.2, 0.9, -0.4];
        let dot = |t: &Tensor| t.data().iter().zip(&z).map(|(x, y)| x * y).sum::<f64>();
        let mu = 0.3;
        let f = fused_embedding(&mut g, a, v, mu).unwrap();
        let lhs = dot(g.value(f));
        let rhs = mu * dot(g.value(a)) + (1.0 - mu) * dot(g.value(v));
        assert!((lhs - rhs).abs() < 1e-12);
        let w = g.constant(Tensor::zeros(1, 2));
        assert!(fused_embedding(&mut g, a, w, 0.5).is_err());
    }

    fn reference_ce(scores: &[Vec<f64>], labels: &[usize]) -> f64 {
        scores
            .iter()
            .zip(labels)
            .map(|(s, &y)| {
                let m = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = m + s.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
                lse - s[y]
            })
            .sum::<f64>()
            / labels.len() as f64
    }

    #[test]
    fn without_calibration_arise_is_seen_cross_entropy() {
        let sem = toy();
        let f = Tensor::from_rows(&[vec![0.4, 1.3], vec![-0.7, 0.2], vec![2.0, 0.1]]).unwrap();
        let labels = [1, 0, 0];
        let coeffs = FusionCoefficients {
            lambda_cal: 0.0,
            ..FusionCoefficients::default()
        };
        let mut g = Graph::new();
        let fv = g.param(f.clone());
        let l = arise_loss(&mut g, fv, &labels, &sem, &coeffs).unwrap();
        // scores over the seen classes are just the two coordinates
        let scores: Vec<Vec<f64>> = (0..3).map(|i| f.row_slice(i).to_vec()).collect();
        assert!((g.item(l) - reference_ce(&scores, &labels)).abs() < 1e-10);
    }

    #[test]
    fn equal_scores_give_log_seen_count() {
        let z = Tensor::full(5, 3, 0.5);
        let sem = ClassSemanticMatrix::new(z, &[true, true, true, false, false]).unwrap();
        let coeffs = FusionCoefficients {
            lambda_cal: 0.0,
            ..FusionCoefficients::default()
        };
        let mut g = Graph::new();
        let f = g.param(Tensor::from_rows(&[vec![0.1, 0.2, 0.3], vec![1.0, -1.0, 2.0]]).unwrap());
        let l = arise_loss(&mut g, f, &[0, 2], &sem, &coeffs).unwrap();
        assert!((g.item(l) - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn two_seen_one_unseen_matches_hand_evaluation() {
        let sem = toy();
        let coeffs = FusionCoefficients {
            lambda_cal: 0.2,
            delta: 1.0,
            ..FusionCoefficients::default()
        };
        let f = Tensor::from_rows(&[vec![1.0, 0.5], vec![0.0, 2.0]]).unwrap();
        let labels = [0, 1];
        let mut g = Graph::new();
        let fv = g.param(f);
        let l = arise_loss(&mut g, fv, &labels, &sem, &coeffs).unwrap();
        // scores: row 0 = (1.0, 0.5, 0.9), row 1 = (0.0, 2.0, 1.2); δ = 1 lifts the unseen score
        let ce0 = (1f64.exp() + 0.5f64.exp()).ln() - 1.0;
        let ce1 = (1.0 + 2f64.exp()).ln() - 2.0;
        let cal0 = 1.9 - (1f64.exp() + 0.5f64.exp() + 1.9f64.exp()).ln();
        let cal1 = 2.2 - (1.0 + 2f64.exp() + 2.2f64.exp()).ln();
        let expected = (ce0 + ce1) / 2.0 - 0.2 * (cal0 + cal1) / 2.0;
        assert!((g.item(l) - expected).abs() < 1e-10);
        assert!((expected - 0.416_499_606_773_864_2).abs() < 1e-10, "{expected}");
    }

    #[test]
    fn unseen_training_label_is_rejected() {
        let sem = toy();
        let mut g = Graph::new();
        let f = g.param(Tensor::zeros(1, 2));
        let err = arise_loss(&mut g, f, &[2], &sem, &FusionCoefficients::default()).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }

    #[test]
    fn arise_gradient_check() {
        let sem = toy();
        let f = Tensor::from_rows(&[vec![0.3, -0.8], vec![1.1, 0.4], vec![-0.2, 0.9]]).unwrap();
        let report = check_gradients(
            |g, v| arise_loss(g, v[0], &[0, 1, 1], &sem, &FusionCoefficients::default()),
            &[f],
            1e-5,
            1e-4,
        )
        .unwrap();
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn total_loss_composition() {
        let mut g = Graph::new();
        let parts = LossComponents {
            arise: g.scalar(1.5),
            vicl: g.scalar(0.25),
            digs: g.scalar(2.0),
            edl: g.scalar(100.0),
        };
        let zero = FusionCoefficients {
            lambda_edl: 0.0,
            ..FusionCoefficients::default()
        };
        let t = total_loss(&mut g, &parts, &zero).unwrap();
        assert_eq!(g.item(t), 3.75);
        let t = total_loss(&mut g, &parts, &FusionCoefficients::default()).unwrap();
        assert!((g.item(t) - 3.85).abs() < 1e-12);
    }

    #[test]
    fn czsl_shift_is_irrelevant_and_large_delta_forces_unseen() {
        let z = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.7, 0.7], vec![-1.0, 0.2]]).unwrap();
        let sem = ClassSemanticMatrix::new(z, &[true, false, true, false]).unwrap();
        let fa = [0.4, 1.0];
        let fv = [0.9, -0.3];
        let mut c = FusionCoefficients {
            delta: 0.0,
            ..FusionCoefficients::default()
        };
        let base = predict(&fa, &fv, &sem, &c, EvalMode::Czsl).unwrap();
        c.delta = 5.0;
        assert_eq!(predict(&fa, &fv, &sem, &c, EvalMode::Czsl).unwrap(), base);
        c.delta = 1e6;
        assert!(sem.is_unseen(predict(&fa, &fv, &sem, &c, EvalMode::Gzsl).unwrap()));
    }

    #[test]
    fn three_class_toy_prediction() {
        let sem = toy();
        let c = FusionCoefficients {
            mu: 0.5,
            delta: 0.0,
            ..FusionCoefficients::default()
        };
        // fused = (0.5, 0.45): scores 0.5, 0.45, 0.57
        let fa = [0.6, 0.3];
        let fv = [0.4, 0.6];
        let scores = class_scores(&fa, &fv, &sem, &c).unwrap();
        let expected = [0.5, 0.45, 0.57];
        for (s, e) in scores.iter().zip(expected) {
            assert!((s - e).abs() < 1e-12);
        }
        assert_eq!(predict(&fa, &fv, &sem, &c, EvalMode::Gzsl).unwrap(), 2);
        assert_eq!(predict(&fa, &fv, &sem, &c, EvalMode::Czsl).unwrap(), 2);
        // lifting seen scores past the unseen one
        let fa = [1.0, 0.0];
        assert_eq!(predict(&fa, &fv, &sem, &c, EvalMode::Gzsl).unwrap(), 0);
    }

    #[test]
    fn argmax_ties_take_lowest_id() {
        assert_eq!(argmax_over(&[1.0, 3.0, 3.0, 2.0], 0..4), Some(1));
        assert_eq!(argmax_over(&[1.0, 3.0, 3.0, 2.0], [3, 2, 1]), Some(1));
        assert_eq!(argmax_over(&[1.0], []), None);
    }

    #[test]
    fn harmonic_mean_reference_rows() {
        assert!((harmonic_mean(72.4, 71.1) - 71.7).abs() < 0.05);
        assert!((harmonic_mean(72.8, 62.9) - 67.5).abs() < 0.05);
        assert_eq!(harmonic_mean(0.0, 55.0), 0.0);
        assert_eq!(harmonic_mean(40.0, 0.0), 0.0);
        assert_eq!(harmonic_mean(0.0, 0.0), 0.0);
    }

    #[test]
    fn metrics_are_macro_averaged() {
        let sem = toy();
        // class 0: 1 of 1 right, class 1: 1 of 3 right, class 2: 2 of 2 right
        let labels = [0, 1, 1, 1, 2, 2];
        let preds = [0, 1, 0, 2, 2, 2];
        let m = gzsl_metrics(&preds, &labels, &sem).unwrap();
        assert!((m.seen - (1.0 + 1.0 / 3.0) / 2.0).abs() < 1e-15);
        assert_eq!(m.unseen, 1.0);
        assert!((m.harmonic - harmonic_mean(m.seen, m.unseen)).abs() < 1e-15);
        assert_eq!(czsl_metrics(&preds, &labels, &sem).unwrap(), 1.0);
        assert!(gzsl_metrics(&[0], &[0], &sem).is_err());
        assert!(czsl_metrics(&[0, 1], &[0, 1], &sem).is_err());
        assert!(czsl_metrics(&[0], &[2, 2], &sem).is_err());
    }

    proptest! {
        #[test]
        fn harmonic_mean_properties(s in 0.0f64..100.0, u in 0.0f64..100.0) {
            prop_assert_eq!(harmonic_mean(s, u), harmonic_mean(u, s));
            prop_assert!(harmonic_mean(s, u) <= (s + u) / 2.0 + 1e-12);
            prop_assert_eq!(harmonic_mean(s, u) == 0.0, s == 0.0 || u == 0.0);
        }

        #[test]
        fn delta_keeps_order_within_groups(
            fa in prop::collection::vec(-2.0f64..2.0, 2),
            fv in prop::collection::vec(-2.0f64..2.0, 2),
            delta in 0.0f64..10.0,
        ) {
            let z = Tensor::from_rows(&[vec![1.0, 0.2], vec![0.1, 0.8], vec![0.5, 0.5], vec![0.9, -0.3]]).unwrap();
            let sem = ClassSemanticMatrix::new(z, &[true, true, false, false]).unwrap();
            let c0 = FusionCoefficients { delta: 0.0, ..FusionCoefficients::default() };
            let c1 = FusionCoefficients { delta, ..FusionCoefficients::default() };
            let s0 = class_scores(&fa, &fv, &sem, &c0).unwrap();
            let s1 = class_scores(&fa, &fv, &sem, &c1).unwrap();
            for group in [sem.seen(), sem.unseen()] {
                prop_assert_eq!(argmax_over(&s0, group.iter().copied()), argmax_over(&s1, group.iter().copied()));
            }
        }

        #[test]
        fn positive_scaling_keeps_prediction(
            fa in prop::collection::vec(-2.0f64..2.0, 2),
            fv in prop::collection::vec(-2.0f64..2.0, 2),
            t in 0.01f64..100.0,
        ) {
            let sem = toy();
            let c = FusionCoefficients { delta: 0.0, ..FusionCoefficients::default() };
            let scores = class_scores(&fa, &fv, &sem, &c).unwrap();
            let mut sorted = scores.clone();
            sorted.sort_by(|a, b| b.total_cmp(a));
            prop_assume!(sorted[0] - sorted[1] > 1e-9);
            let sa: Vec<f64> = fa.iter().map(|x| x * t).collect();
            let sv: Vec<f64> = fv.iter().map(|x| x * t).collect();
            prop_assert_eq!(
                predict(&fa, &fv, &sem, &c, EvalMode::Gzsl).unwrap(),
                predict(&sa, &sv, &sem, &c, EvalMode::Gzsl).unwrap()
            );
        }
    }
}
