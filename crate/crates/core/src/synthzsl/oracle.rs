//! Reference classifiers used to sanity-check generated data and to set the
//! bar for learned models.

use super::{Instance, Split, ZslDataset};
use crate::error::{Error, Result};
use crate::inference::{argmax_over, czsl_metrics};
use crate::numgraph::Tensor;

/// Which rows of an instance a classifier sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum View {
    All,
    Visual,
    Attribute,
}

pub fn flatten(inst: &Instance, view: View) -> Vec<f64> {
    match view {
        View::All => inst.regions.data().to_vec(),
        View::Visual => inst.visual_stream().into_data(),
        View::Attribute => inst.attribute_stream().into_data(),
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Per-class means of `train`, indexed by class id (`None` for absent classes).
pub fn class_means<'a>(train: impl IntoIterator<Item = &'a Instance>, classes: usize, view: View) -> Vec<Option<Vec<f64>>> {
    let mut sums: Vec<Option<(Vec<f64>, usize)>> = vec![None; classes];
    for inst in train {
        let x = flatten(inst, view);
        let slot = sums[inst.label].get_or_insert_with(|| (vec![0.0; x.len()], 0));
        for (s, v) in slot.0.iter_mut().zip(&x) {
            *s += v;
        }
        slot.1 += 1;
    }
    sums.into_iter()
        .map(|s| s.map(|(v, n)| v.into_iter().map(|x| x / n as f64).collect()))
        .collect()
}

/// Fraction of `test` whose nearest class mean (Euclidean) is their label.
/// Equal distances go to the lowest class id.
pub fn nearest_class_mean_accuracy<'a>(
    means: &[Option<Vec<f64>>],
    test: impl IntoIterator<Item = &'a Instance>,
    view: View,
) -> Result<f64> {
    let (mut hit, mut total) = (0usize, 0usize);
    for inst in test {
        let x = flatten(inst, view);
        let neg: Vec<f64> = means
            .iter()
            .map(|m| m.as_ref().map_or(f64::NEG_INFINITY, |m| -sq_dist(&x, m)))
            .collect();
        let candidates = (0..means.len()).filter(|&c| means[c].is_some());
        let pred = argmax_over(&neg, candidates).ok_or_else(|| Error::domain("no class means to compare against"))?;
        hit += usize::from(pred == inst.label);
        total += 1;
    }
    if total == 0 {
        return Err(Error::domain("no test instances"));
    }
    Ok(hit as f64 / total as f64)
}

/// Solves `(XᵀX + λI) W = XᵀY` by Cholesky factorization.
pub fn ridge(x: &Tensor, y: &Tensor, lambda: f64) -> Result<Tensor> {
    if x.rows() != y.rows() {
        return Err(Error::shape("ridge", x.shape(), y.shape()));
    }
    let d = x.cols();
    let xt = x.transpose();
    let mut a = xt.matmul(x)?;
    for i in 0..d {
        a.set(i, i, a.get(i, i) + lambda);
    }
    let b = xt.matmul(y)?;
    // A = L Lᵀ
    let mut l = Tensor::zeros(d, d);
    for i in 0..d {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l.get(i, k) * l.get(j, k)).sum();
            if i == j {
                let v = a.get(i, i) - s;
                if !(v > 0.0) {
                    return Err(Error::numeric("ridge system is not positive definite"));
                }
                l.set(i, i, v.sqrt());
            } else {
                l.set(i, j, (a.get(i, j) - s) / l.get(j, j));
            }
        }
    }
    let mut w = Tensor::zeros(d, y.cols());
    for c in 0..y.cols() {
        let mut t = vec![0.0; d];
        for i in 0..d {
            let s: f64 = (0..i).map(|k| l.get(i, k) * t[k]).sum();
            t[i] = (b.get(i, c) - s) / l.get(i, i);
        }
        for i in (0..d).rev() {
            let s: f64 = (i + 1..d).map(|k| l.get(k, i) * w.get(k, c)).sum();
            w.set(i, c, (t[i] - s) / l.get(i, i));
        }
    }
    Ok(w)
}

/// Attribute-space nearest-class baseline for unseen classes: a ridge
/// regression from centred region features to class attribute vectors is fit
/// on the training split, and each unseen test instance is assigned the
/// unseen class whose attribute vector is nearest its prediction. Returns
/// macro-averaged unseen accuracy.
///
/// `lambda` is relative to the mean per-feature variance, so rescaling the
/// features leaves the result unchanged.
pub fn attribute_regression_baseline(dataset: &ZslDataset, lambda: f64) -> Result<f64> {
    let train: Vec<&Instance> = dataset.split(Split::TrainSeen).collect();
    let test: Vec<&Instance> = dataset.split(Split::TestUnseen).collect();
    if train.is_empty() || test.is_empty() {
        return Err(Error::domain("baseline needs training and unseen test instances"));
    }
    let z = dataset.semantics.z();
    let width = train[0].regions.len();
    let mut mean_x = vec![0.0; width];
    for inst in &train {
        for (m, v) in mean_x.iter_mut().zip(inst.regions.data()) {
            *m += v / train.len() as f64;
        }
    }
    let mut mean_y = vec![0.0; z.cols()];
    for inst in &train {
        for (m, v) in mean_y.iter_mut().zip(z.row_slice(inst.label)) {
            *m += v / train.len() as f64;
        }
    }
    let x = Tensor::from_fn(train.len(), width, |i, j| train[i].regions.data()[j] - mean_x[j]);
    let y = Tensor::from_fn(train.len(), z.cols(), |i, j| z.get(train[i].label, j) - mean_y[j]);
    let variance = x.data().iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
    let w = ridge(&x, &y, lambda * variance)?;

    let unseen = dataset.semantics.unseen();
    let mut predictions = Vec::with_capacity(test.len());
    let mut labels = Vec::with_capacity(test.len());
    for inst in &test {
        let centred: Vec<f64> = inst.regions.data().iter().zip(&mean_x).map(|(v, m)| v - m).collect();
        let xr = Tensor::new(1, width, centred)?;
        let pred = xr.matmul(&w)?;
        let attrs: Vec<f64> = pred.data().iter().zip(&mean_y).map(|(p, m)| p + m).collect();
        let neg: Vec<f64> = (0..z.rows()).map(|c| -sq_dist(&attrs, z.row_slice(c))).collect();
        predictions.push(argmax_over(&neg, unseen.iter().copied()).expect("unseen classes exist"));
        labels.push(inst.label);
    }
    czsl_metrics(&predictions, &labels, &dataset.semantics)
}
