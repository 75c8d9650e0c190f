//! Training loop, evaluation and per-epoch diagnostics.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::digs::digs_terms;
use crate::edl::{edl_total, fuse_dirichlet, one_hot, AnnealSchedule, EdlWeights, FusionMode};
use crate::error::{Error, Result};
use crate::grounding::{EvidenceActivation, Pooling};
use crate::inference::{
    arise_loss, argmax_over, class_scores, czsl_metrics, fused_embedding, gzsl_metrics, total_loss, EvalMode,
    FusionCoefficients, GzslMetrics, LossComponents,
};
use crate::model::{forward, BoundModel, CrestModel};
use crate::numgraph::{AdamState, Graph, Tensor, Var};
use crate::subjective_logic::{conflict, DirichletParams};
use crate::synthzsl::{Instance, Split, ZslDataset};
use crate::vicl::{vicl_loss, ContrastiveBatch, ViclConfig};

/// A grounding direction switched off for an ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DroppedModality {
    #[default]
    None,
    /// Attribute-side transformer unused; inference relies on the visual side.
    Agt,
    /// Visual-side transformer unused; inference relies on the attribute side.
    Vgt,
}

impl fmt::Display for DroppedModality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DroppedModality::None => "none",
            DroppedModality::Agt => "agt",
            DroppedModality::Vgt => "vgt",
        })
    }
}

impl FromStr for DroppedModality {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(DroppedModality::None),
            "agt" => Ok(DroppedModality::Agt),
            "vgt" => Ok(DroppedModality::Vgt),
            other => Err(format!("unknown modality `{other}` (none | agt | vgt)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub mu: f64,
    pub lambda_cal: f64,
    pub lambda_edl: f64,
    pub beta: f64,
    pub gamma: f64,
    pub tau: f64,
    pub delta: f64,
    pub margin: f64,
    pub similarity_threshold: f64,
    /// Epochs until the KL weight reaches one.
    pub annealing_epochs: usize,
    /// Multiplier on the contrastive loss; 0 switches it off.
    pub vicl_weight: f64,
    /// Multiplier on the pattern-bank loss; 0 switches it off.
    pub digs_weight: f64,
    pub layers: usize,
    pub key_width: usize,
    pub ffn_hidden: usize,
    pub bank_size: usize,
    pub pattern_width: usize,
    pub fusion_mode: FusionMode,
    pub evidence_activation: EvidenceActivation,
    pub pooling: Pooling,
    pub drop_modality: DroppedModality,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 64,
            learning_rate: 1e-4,
            weight_decay: 1e-4,
            seed: 0,
            mu: 0.5,
            lambda_cal: 0.2,
            lambda_edl: 0.001,
            beta: 1.0,
            gamma: 1.0,
            tau: 0.1,
            delta: 1.0,
            margin: 1.0,
            similarity_threshold: 0.5,
            annealing_epochs: 10,
            vicl_weight: 1.0,
            digs_weight: 1.0,
            layers: 1,
            key_width: 32,
            ffn_hidden: 64,
            bank_size: 64,
            pattern_width: 16,
            fusion_mode: FusionMode::default(),
            evidence_activation: EvidenceActivation::default(),
            pooling: Pooling::default(),
            drop_modality: DroppedModality::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("batch_size", self.batch_size),
            ("annealing_epochs", self.annealing_epochs),
            ("layers", self.layers),
            ("key_width", self.key_width),
            ("ffn_hidden", self.ffn_hidden),
            ("pattern_width", self.pattern_width),
        ] {
            if v == 0 {
                return Err(Error::config(key, 0, "must be positive"));
            }
        }
        if self.bank_size < 2 {
            return Err(Error::config("bank_size", 0, "needs at least 2 patterns"));
        }
        let positive = [
            ("learning_rate", self.learning_rate),
            ("tau", self.tau),
            ("margin", self.margin),
        ];
        for (key, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::config(key, 0, format!("must be positive and finite, got {v}")));
            }
        }
        let nonnegative = [
            ("weight_decay", self.weight_decay),
            ("lambda_cal", self.lambda_cal),
            ("lambda_edl", self.lambda_edl),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("delta", self.delta),
            ("vicl_weight", self.vicl_weight),
            ("digs_weight", self.digs_weight),
        ];
        for (key, v) in nonnegative {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::config(key, 0, format!("must be nonnegative and finite, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.mu) {
            return Err(Error::config("mu", 0, format!("must lie in [0, 1], got {}", self.mu)));
        }
        if !(-1.0..=1.0).contains(&self.similarity_threshold) {
            return Err(Error::config("similarity_threshold", 0, "must lie in [-1, 1]"));
        }
        Ok(())
    }

    /// Coefficients with `μ` forced to the surviving side when a modality is dropped.
    pub fn coefficients(&self) -> FusionCoefficients {
        let mu = match self.drop_modality {
            DroppedModality::None => self.mu,
            DroppedModality::Agt => 0.0,
            DroppedModality::Vgt => 1.0,
        };
        FusionCoefficients {
            mu,
            lambda_cal: self.lambda_cal,
            lambda_edl: self.lambda_edl,
            delta: self.delta,
        }
    }

    pub fn vicl(&self) -> ViclConfig {
        ViclConfig {
            temperature: self.tau,
            similarity_threshold: self.similarity_threshold,
        }
    }

    pub fn edl_weights(&self) -> EdlWeights {
        EdlWeights {
            beta: self.beta,
            gamma: self.gamma,
        }
    }

    /// `key = value` lines accepted by the config parser.
    pub fn to_config_string(&self) -> String {
        let pairs: Vec<(&str, String)> = vec![
            ("epochs", self.epochs.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("weight_decay", self.weight_decay.to_string()),
            ("seed", self.seed.to_string()),
            ("mu", self.mu.to_string()),
            ("lambda_cal", self.lambda_cal.to_string()),
            ("lambda_edl", self.lambda_edl.to_string()),
            ("beta", self.beta.to_string()),
            ("gamma", self.gamma.to_string()),
            ("tau", self.tau.to_string()),
            ("delta", self.delta.to_string()),
            ("margin", self.margin.to_string()),
            ("similarity_threshold", self.similarity_threshold.to_string()),
            ("annealing_epochs", self.annealing_epochs.to_string()),
            ("vicl_weight", self.vicl_weight.to_string()),
            ("digs_weight", self.digs_weight.to_string()),
            ("layers", self.layers.to_string()),
            ("key_width", self.key_width.to_string()),
            ("ffn_hidden", self.ffn_hidden.to_string()),
            ("bank_size", self.bank_size.to_string()),
            ("pattern_width", self.pattern_width.to_string()),
            ("fusion_mode", self.fusion_mode.to_string()),
            ("evidence_activation", self.evidence_activation.to_string()),
            ("pooling", self.pooling.to_string()),
            ("drop_modality", self.drop_modality.to_string()),
        ];
        pairs.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

/// Per-epoch training losses (batch means) and held-out diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochReport {
    pub epoch: usize,
    pub loss_arise: f64,
    pub loss_vicl: f64,
    pub loss_digs: f64,
    pub loss_edl: f64,
    pub loss_total: f64,
    pub uncertainty_attribute: f64,
    pub uncertainty_visual: f64,
    pub uncertainty_fused: f64,
    pub conflict: f64,
    pub seen: f64,
    pub unseen: f64,
    pub harmonic: f64,
    pub czsl: f64,
    /// Wall-clock time of the epoch; kept out of the CSV so reruns compare equal.
    pub seconds: f64,
}

pub const EPOCH_CSV_HEADER: &str = "epoch,loss_arise,loss_vicl,loss_digs,loss_edl,loss_total,uncertainty_attribute,uncertainty_visual,uncertainty_fused,conflict,seen,unseen,harmonic,czsl";

impl EpochReport {
    fn csv_row(&self) -> String {
        let v = [
            self.loss_arise,
            self.loss_vicl,
            self.loss_digs,
            self.loss_edl,
            self.loss_total,
            self.uncertainty_attribute,
            self.uncertainty_visual,
            self.uncertainty_fused,
            self.conflict,
            self.seen,
            self.unseen,
            self.harmonic,
            self.czsl,
        ];
        let cells: Vec<String> = v.iter().map(|x| x.to_string()).collect();
        format!("{},{}", self.epoch, cells.join(","))
    }
}

pub fn write_epochs_csv(path: &Path, reports: &[EpochReport]) -> Result<()> {
    let mut out = format!("{EPOCH_CSV_HEADER}\n");
    for r in reports {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_epochs_csv(path: &Path) -> Result<Vec<EpochReport>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(EPOCH_CSV_HEADER) {
        return Err(Error::format(path, 0, "unexpected epoch CSV header"));
    }
    let mut offset = EPOCH_CSV_HEADER.len() as u64 + 1;
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let at = offset;
        offset += line.len() as u64 + 1;
        let bad = || Error::format(path, at, format!("line {}: malformed epoch row", i + 2));
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 14 {
            return Err(bad());
        }
        let epoch: usize = cells[0].parse().map_err(|_| bad())?;
        let v: Vec<f64> = cells[1..].iter().map(|c| c.parse()).collect::<Result<_, _>>().map_err(|_| bad())?;
        out.push(EpochReport {
            epoch,
            loss_arise: v[0],
            loss_vicl: v[1],
            loss_digs: v[2],
            loss_edl: v[3],
            loss_total: v[4],
            uncertainty_attribute: v[5],
            uncertainty_visual: v[6],
            uncertainty_fused: v[7],
            conflict: v[8],
            seen: v[9],
            unseen: v[10],
            harmonic: v[11],
            czsl: v[12],
            seconds: 0.0,
        });
    }
    Ok(out)
}

/// Per-instance outputs on both test splits, in dataset order.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub instance_ids: Vec<usize>,
    pub labels: Vec<usize>,
    pub splits: Vec<Split>,
    /// Prediction over every class.
    pub gzsl_predictions: Vec<usize>,
    /// Prediction over unseen classes (meaningful for unseen instances).
    pub czsl_predictions: Vec<usize>,
    pub uncertainty_attribute: Vec<f64>,
    pub uncertainty_visual: Vec<f64>,
    pub uncertainty_fused: Vec<f64>,
    pub conflict: Vec<f64>,
    pub gzsl: GzslMetrics,
    pub czsl: f64,
}

impl Evaluation {
    /// Metrics of `mode` as `(name, value)` pairs.
    pub fn metrics(&self, mode: EvalMode) -> Vec<(&'static str, f64)> {
        match mode {
            EvalMode::Czsl => vec![("ACC", self.czsl)],
            EvalMode::Gzsl => vec![("S", self.gzsl.seen), ("U", self.gzsl.unseen), ("H", self.gzsl.harmonic)],
        }
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

const EVAL_CHUNK: usize = 128;

/// Runs the model over both test splits.
pub fn evaluate(model: &CrestModel, dataset: &ZslDataset, config: &TrainConfig) -> Result<Evaluation> {
    let test: Vec<&Instance> = dataset.instances.iter().filter(|i| i.split != Split::TrainSeen).collect();
    if test.is_empty() {
        return Err(Error::domain("dataset has no test instances"));
    }
    let sem = &dataset.semantics;
    let coeffs = config.coefficients();
    let mut e = Evaluation {
        instance_ids: Vec::with_capacity(test.len()),
        labels: Vec::with_capacity(test.len()),
        splits: Vec::with_capacity(test.len()),
        gzsl_predictions: Vec::with_capacity(test.len()),
        czsl_predictions: Vec::with_capacity(test.len()),
        uncertainty_attribute: Vec::with_capacity(test.len()),
        uncertainty_visual: Vec::with_capacity(test.len()),
        uncertainty_fused: Vec::with_capacity(test.len()),
        conflict: Vec::with_capacity(test.len()),
        gzsl: GzslMetrics::from_accuracies(0.0, 0.0),
        czsl: 0.0,
    };
    for chunk in test.chunks(EVAL_CHUNK) {
        let mut g = Graph::new();
        let bound = model.bind(&mut g, false);
        let z = g.constant(sem.z().clone());
        let out = forward(&mut g, &bound, chunk, z, config)?;
        let (fa, fv) = (g.value(out.f_attribute), g.value(out.f_visual));
        let (aa, av) = (g.value(out.alpha_attribute), g.value(out.alpha_visual));
        for (i, inst) in chunk.iter().enumerate() {
            let scores = class_scores(fa.row_slice(i), fv.row_slice(i), sem, &coeffs)?;
            e.gzsl_predictions
                .push(argmax_over(&scores, 0..sem.class_count()).expect("classes exist"));
            e.czsl_predictions
                .push(argmax_over(&scores, sem.unseen().iter().copied()).expect("unseen classes exist"));
            let da = DirichletParams::new(aa.row_slice(i).to_vec())?;
            let dv = DirichletParams::new(av.row_slice(i).to_vec())?;
            let modalities = match config.drop_modality {
                DroppedModality::None => vec![da.clone(), dv.clone()],
                DroppedModality::Agt => vec![dv.clone()],
                DroppedModality::Vgt => vec![da.clone()],
            };
            let fused = fuse_dirichlet(&modalities, config.fusion_mode)?;
            e.uncertainty_attribute.push(da.uncertainty());
            e.uncertainty_visual.push(dv.uncertainty());
            e.uncertainty_fused.push(fused.uncertainty());
            e.conflict.push(conflict(&da.opinion(), &dv.opinion())?);
            e.instance_ids.push(inst.id);
            e.labels.push(inst.label);
            e.splits.push(inst.split);
        }
    }
    e.gzsl = gzsl_metrics(&e.gzsl_predictions, &e.labels, sem)?;
    let (czsl_pred, czsl_labels): (Vec<usize>, Vec<usize>) = e
        .splits
        .iter()
        .zip(e.czsl_predictions.iter().zip(&e.labels))
        .filter(|(s, _)| **s == Split::TestUnseen)
        .map(|(_, (&p, &y))| (p, y))
        .unzip();
    e.czsl = czsl_metrics(&czsl_pred, &czsl_labels, sem)?;
    Ok(e)
}

#[derive(Debug, Clone, Copy, Default)]
struct LossTotals {
    arise: f64,
    vicl: f64,
    digs: f64,
    edl: f64,
    total: f64,
    batches: usize,
}

/// One optimizer step on `batch`; returns the component losses.
/// Graph nodes of the training objective for one batch.
#[derive(Debug, Clone, Copy)]
pub struct BatchLoss {
    pub arise: Var,
    pub vicl: Var,
    pub digs: Var,
    pub edl: Var,
    pub total: Var,
}

/// Builds the full training objective for `batch` on `g`. `epoch` drives the
/// KL annealing.
pub fn batch_loss(
    g: &mut Graph,
    bound: &BoundModel,
    batch: &[&Instance],
    dataset: &ZslDataset,
    config: &TrainConfig,
    epoch: usize,
) -> Result<BatchLoss> {
    let sem = &dataset.semantics;
    let coeffs = config.coefficients();
    let z = g.constant(sem.z().clone());
    let out = forward(g, bound, batch, z, config)?;
    let labels: Vec<usize> = batch.iter().map(|i| i.label).collect();

    let alphas = match config.drop_modality {
        DroppedModality::None => vec![out.alpha_attribute, out.alpha_visual],
        DroppedModality::Agt => vec![out.alpha_visual],
        DroppedModality::Vgt => vec![out.alpha_attribute],
    };
    let y = one_hot(&labels, sem.class_count());
    let schedule = AnnealSchedule::new(config.annealing_epochs, epoch)?;
    let edl = edl_total(g, &alphas, &y, schedule, config.edl_weights(), config.fusion_mode)?;

    let use_vicl = config.vicl_weight > 0.0 && batch.len() >= 2 && config.drop_modality != DroppedModality::Vgt;
    let vicl = if use_vicl {
        let cb = ContrastiveBatch::new(g, out.f_visual, labels.clone(), config.vicl())?;
        let l = vicl_loss(g, &cb)?;
        g.scale(l, config.vicl_weight)
    } else {
        g.scalar(0.0)
    };
    let use_digs = config.digs_weight > 0.0 && config.drop_modality != DroppedModality::Agt;
    let digs = if use_digs {
        let t = digs_terms(g, out.readout.queries, bound.bank.patterns, config.margin)?;
        g.scale(t.total, config.digs_weight)
    } else {
        g.scalar(0.0)
    };
    let fused = fused_embedding(g, out.f_attribute, out.f_visual, coeffs.mu)?;
    let arise = arise_loss(g, fused, &labels, sem, &coeffs)?;
    let parts = LossComponents { arise, vicl, digs, edl };
    let total = total_loss(g, &parts, &coeffs)?;
    Ok(BatchLoss {
        arise,
        vicl,
        digs,
        edl,
        total,
    })
}

fn train_step(
    model: &mut CrestModel,
    adam: &mut AdamState,
    batch: &[&Instance],
    dataset: &ZslDataset,
    config: &TrainConfig,
    epoch: usize,
) -> Result<[f64; 5]> {
    let mut g = Graph::new();
    let bound = model.bind(&mut g, true);
    let loss = batch_loss(&mut g, &bound, batch, dataset, config, epoch)?;
    let total_value = g.item(loss.total);
    if !total_value.is_finite() {
        return Err(Error::numeric(format!("training loss became {total_value} in epoch {epoch}")));
    }
    g.backward(loss.total)?;

    let vars = bound.trainable_vars();
    let grads: Vec<Tensor> = vars
        .iter()
        .zip(model.trainable())
        .map(|(&v, t)| g.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(t.rows(), t.cols())))
        .collect();
    let losses = [g.item(loss.arise), g.item(loss.vicl), g.item(loss.digs), g.item(loss.edl), total_value];
    drop(g);
    let grad_refs: Vec<&Tensor> = grads.iter().collect();
    let mut params = model.trainable_mut();
    adam.step(&mut params, &grad_refs)?;
    Ok(losses)
}

fn epoch_report(epoch: usize, totals: LossTotals, eval: &Evaluation, seconds: f64) -> EpochReport {
    let n = totals.batches.max(1) as f64;
    EpochReport {
        epoch,
        loss_arise: totals.arise / n,
        loss_vicl: totals.vicl / n,
        loss_digs: totals.digs / n,
        loss_edl: totals.edl / n,
        loss_total: totals.total / n,
        uncertainty_attribute: mean(&eval.uncertainty_attribute),
        uncertainty_visual: mean(&eval.uncertainty_visual),
        uncertainty_fused: mean(&eval.uncertainty_fused),
        conflict: mean(&eval.conflict),
        seen: eval.gzsl.seen,
        unseen: eval.gzsl.unseen,
        harmonic: eval.gzsl.harmonic,
        czsl: eval.czsl,
        seconds,
    }
}

/// Trained parameters and one report per epoch.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: CrestModel,
    pub reports: Vec<EpochReport>,
}

/// Initializes a model from `config.seed` and trains it on the seen-class
/// training split, evaluating after every epoch. `on_epoch` sees each report
/// as it is produced.
pub fn train_with(
    dataset: &ZslDataset,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochReport),
) -> Result<TrainOutcome> {
    config.validate()?;
    dataset.validate()?;
    let train: Vec<&Instance> = dataset.split(Split::TrainSeen).collect();
    if train.is_empty() {
        return Err(Error::domain("training split is empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = CrestModel::init(
        &mut rng,
        config,
        dataset.semantics.attribute_count(),
        dataset.feature_width(),
    )?;
    let shapes: Vec<[usize; 2]> = model.trainable().iter().map(|t| t.shape()).collect();
    let mut adam = AdamState::new(&shapes, config.learning_rate, config.weight_decay);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut reports = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let start = Instant::now();
        order.shuffle(&mut rng);
        let mut totals = LossTotals::default();
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&Instance> = chunk.iter().map(|&i| train[i]).collect();
            let [a, v, d, e, t] = train_step(&mut model, &mut adam, &batch, dataset, config, epoch)?;
            totals.arise += a;
            totals.vicl += v;
            totals.digs += d;
            totals.edl += e;
            totals.total += t;
            totals.batches += 1;
        }
        let eval = evaluate(&model, dataset, config)?;
        let report = epoch_report(epoch, totals, &eval, start.elapsed().as_secs_f64());
        on_epoch(&report);
        reports.push(report);
    }
    Ok(TrainOutcome { model, reports })
}

pub fn train(dataset: &ZslDataset, config: &TrainConfig) -> Result<TrainOutcome> {
    train_with(dataset, config, |_| {})
}

/// Ranks with ties sharing their average rank.
fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation (Pearson correlation of average ranks).
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::domain("spearman needs two equal-length series of at least 2 values"));
    }
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let (mx, my) = (mean(&rx), mean(&ry));
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my) * (b - my)).sum();
    if vx == 0.0 || vy == 0.0 {
        return Err(Error::domain("spearman is undefined for a constant series"));
    }
    Ok(cov / (vx * vy).sqrt())
}


/// Component removed by an ablation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationTarget {
    Edl,
    Vicl,
    Digs,
    Agt,
    Vgt,
}

impl fmt::Display for AblationTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AblationTarget::Edl => "edl",
            AblationTarget::Vicl => "vicl",
            AblationTarget::Digs => "digs",
            AblationTarget::Agt => "agt",
            AblationTarget::Vgt => "vgt",
        })
    }
}

impl FromStr for AblationTarget {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "edl" => Ok(AblationTarget::Edl),
            "vicl" => Ok(AblationTarget::Vicl),
            "digs" => Ok(AblationTarget::Digs),
            "agt" => Ok(AblationTarget::Agt),
            "vgt" => Ok(AblationTarget::Vgt),
            other => Err(format!("unknown ablation target `{other}` (edl | vicl | digs | agt | vgt)")),
        }
    }
}

/// `config` with `target` removed. Dropping EDL also swaps the
/// uncertainty-weighted fusion for a plain average.
pub fn ablated(config: &TrainConfig, target: AblationTarget) -> TrainConfig {
    let mut c = config.clone();
    match target {
        AblationTarget::Edl => {
            c.lambda_edl = 0.0;
            c.fusion_mode = FusionMode::Average;
        }
        AblationTarget::Vicl => c.vicl_weight = 0.0,
        AblationTarget::Digs => c.digs_weight = 0.0,
        AblationTarget::Agt => c.drop_modality = DroppedModality::Agt,
        AblationTarget::Vgt => c.drop_modality = DroppedModality::Vgt,
    }
    c
}

/// Final-epoch metrics of one ablation arm.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub variant: String,
    pub seen: f64,
    pub unseen: f64,
    pub harmonic: f64,
    pub czsl: f64,
}

impl AblationRow {
    pub fn from_evaluation(variant: impl Into<String>, e: &Evaluation) -> Self {
        AblationRow {
            variant: variant.into(),
            seen: e.gzsl.seen,
            unseen: e.gzsl.unseen,
            harmonic: e.gzsl.harmonic,
            czsl: e.czsl,
        }
    }
}

pub const ABLATION_CSV_HEADER: &str = "variant,S,U,H,ACC";

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = format!("{ABLATION_CSV_HEADER}\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{},{}\n", r.variant, r.seen, r.unseen, r.harmonic, r.czsl));
    }
    out
}

pub fn parse_ablation_csv(text: &str) -> Result<Vec<AblationRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(ABLATION_CSV_HEADER) {
        return Err(Error::format("<ablation csv>", 0, "unexpected header"));
    }
    let mut offset = ABLATION_CSV_HEADER.len() as u64 + 1;
    let mut rows = Vec::new();
    for line in lines {
        let at = offset;
        offset += line.len() as u64 + 1;
        let bad = || Error::format("<ablation csv>", at, format!("malformed row `{line}`"));
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 5 {
            return Err(bad());
        }
        let v: Vec<f64> = cells[1..].iter().map(|c| c.parse()).collect::<Result<_, _>>().map_err(|_| bad())?;
        rows.push(AblationRow {
            variant: cells[0].to_string(),
            seen: v[0],
            unseen: v[1],
            harmonic: v[2],
            czsl: v[3],
        });
    }
    Ok(rows)
}

/// Trains the full model and the variant without `target` from the same seed.
pub fn run_ablation(dataset: &ZslDataset, config: &TrainConfig, target: AblationTarget) -> Result<[AblationRow; 2]> {
    let full = train(dataset, config)?;
    let full_eval = evaluate(&full.model, dataset, config)?;
    let variant = ablated(config, target);
    let reduced = train(dataset, &variant)?;
    let reduced_eval = evaluate(&reduced.model, dataset, &variant)?;
    Ok([
        AblationRow::from_evaluation("full", &full_eval),
        AblationRow::from_evaluation(format!("without_{target}"), &reduced_eval),
    ])
}
