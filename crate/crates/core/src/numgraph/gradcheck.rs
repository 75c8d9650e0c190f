use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Outcome of [`check_gradients`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Largest relative error over every compared entry.
    pub max_rel_error: f64,
    /// `(parameter index, flat entry index)` of the worst entry.
    pub worst: Option<(usize, usize)>,
    pub checked: usize,
    /// Entries sitting on a kink or jump of `f` within `h`, where the central
    /// difference is not a derivative estimate.
    pub skipped_nonsmooth: usize,
    pub passed: bool,
}

/// One-sided slopes further apart than this (relative) mark a kink or jump
/// within the step; a smooth `f` gives a gap of about `h * |f''|`.
const KINK_RATIO: f64 = 1e-3;

fn evaluate<F>(f: &F, params: &[Tensor]) -> Result<(f64, Graph, Vec<Var>, Var)>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|p| g.param(p.clone())).collect();
    let out = f(&mut g, &vars)?;
    if g.shape(out) != [1, 1] {
        return Err(Error::shape("check_gradients", g.shape(out), [1, 1]));
    }
    let v = g.item(out);
    if !v.is_finite() {
        return Err(Error::numeric(format!("function value is not finite: {v}")));
    }
    Ok((v, g, vars, out))
}

/// Compares backward-pass gradients of the scalar graph function `f` with
/// central differences `(f(x+h) - f(x-h)) / 2h`, entry by entry.
///
/// The relative error of an entry is `|analytic - numeric| / max(|analytic|,
/// |numeric|, 1e-6 * max(1, |f(x)|))`; the floor keeps entries whose true
/// gradient is below finite-difference resolution from dominating.
pub fn check_gradients<F>(f: F, params: &[Tensor], h: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    if h <= 0.0 {
        return Err(Error::domain(format!("finite-difference step must be positive, got {h}")));
    }
    let (f0, mut g, vars, out) = evaluate(&f, params)?;
    g.backward(out)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(params)
        .map(|(v, p)| g.grad(*v).cloned().unwrap_or_else(|| Tensor::zeros(p.rows(), p.cols())))
        .collect();
    drop(g);

    let floor = 1e-6 * f0.abs().max(1.0);
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
        skipped_nonsmooth: 0,
        passed: true,
    };
    let mut probe: Vec<Tensor> = params.to_vec();
    for (pi, p) in params.iter().enumerate() {
        for k in 0..p.len() {
            let x = p.data()[k];
            probe[pi].data_mut()[k] = x + h;
            let fp = evaluate(&f, &probe)?.0;
            probe[pi].data_mut()[k] = x - h;
            let fm = evaluate(&f, &probe)?.0;
            probe[pi].data_mut()[k] = x;

            let forward = (fp - f0) / h;
            let backward = (f0 - fm) / h;
            let numeric = (fp - fm) / (2.0 * h);
            let a = analytic[pi].data()[k];
            let scale = a.abs().max(numeric.abs()).max(floor);
            if (forward - backward).abs() > KINK_RATIO * forward.abs().max(backward.abs()).max(floor) {
                report.skipped_nonsmooth += 1;
                continue;
            }
            report.checked += 1;
            let rel = (a - numeric).abs() / scale;
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((pi, k));
            }
        }
    }
    report.passed = report.max_rel_error < tol;
    Ok(report)
}
