//! Two-stage training.
//!
//! Stage 1 fits the encoder and projector under the simplified supervised
//! contrastive loss over augmented multi-view batches. Stage 2 fits the
//! classifier with cross entropy on frozen representations, early-stopped on
//! a stratified validation split. Both stages use Adam with the learning
//! rate halved when the monitored loss stagnates (the encoder monitors its
//! training loss, the classifier its validation loss).

use std::time::Instant;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::augmentation::{self, AugmentKind};
use crate::data::{stratified_split_indices, LabeledDataset, SplitTag};
use crate::error::{Error, Result};
use crate::loss::{supcon_simplified_with_grad, Similarity, SupConBatch};
use crate::model::{batch_matrix, Mlp, MlpGrads, ScottModel, TrainStage};
use crate::neural::{Dense, DenseGrads, Phase};
use crate::rng;

/// Hyperparameters of the two-stage schedule. Defaults are the full-scale
/// settings: learning rate 0.001 halving on stagnation, 300 encoder epochs
/// at batch size 128, 200 classifier epochs at batch size 64 with early
/// stopping on validation loss, two views per instance, temperature 1.0.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub encoder_epochs: usize,
    pub encoder_batch: usize,
    pub classifier_epochs: usize,
    pub classifier_batch: usize,
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    pub min_improvement: f64,
    pub early_stop_patience: usize,
    pub validation_fraction: f64,
    pub n_views: usize,
    pub temperature: f64,
    pub similarity: Similarity,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            encoder_epochs: 300,
            encoder_batch: 128,
            classifier_epochs: 200,
            classifier_batch: 64,
            plateau_patience: 10,
            plateau_factor: 0.5,
            min_improvement: 1e-4,
            early_stop_patience: 20,
            validation_fraction: 0.2,
            n_views: 2,
            temperature: 1.0,
            similarity: Similarity::Cosine,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::config("learning rate must be positive"));
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return Err(Error::config("plateau factor must be in (0,1)"));
        }
        if self.encoder_epochs == 0
            || self.encoder_batch == 0
            || self.classifier_epochs == 0
            || self.classifier_batch == 0
        {
            return Err(Error::config("epochs and batch sizes must be positive"));
        }
        if self.n_views == 0 {
            return Err(Error::config("n_views must be >= 1"));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::config("validation fraction must be in (0,1)"));
        }
        Ok(())
    }
}

/// Per-stage training record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub stage: String,
    /// Mean per-row loss per epoch.
    pub epoch_losses: Vec<f64>,
    pub lr_trace: Vec<f64>,
    pub epoch_seconds: Vec<f64>,
    /// Per-batch losses of the final epoch (bookkeeping check).
    pub final_epoch_batch_losses: Vec<f64>,
    pub validation_losses: Option<Vec<f64>>,
    pub best_epoch: Option<usize>,
    pub final_loss: f64,
    pub seed: u64,
}

// ---------------------------------------------------------------------------
// Learning-rate schedule and early stopping
// ---------------------------------------------------------------------------

/// New learning rate given a loss history: multiplied by `factor` when the
/// best loss of the last `patience` epochs failed to improve on the best of
/// the preceding epochs by at least `min_improvement`; floored at 1e-6.
pub fn lr_on_plateau(
    history: &[f64],
    lr: f64,
    patience: usize,
    factor: f64,
    min_improvement: f64,
) -> f64 {
    assert!(factor > 0.0 && factor < 1.0, "factor must be in (0,1)");
    if history.len() < patience + 1 {
        return lr;
    }
    let split = history.len() - patience;
    let best_before = history[..split].iter().cloned().fold(f64::INFINITY, f64::min);
    let best_recent = history[split..].iter().cloned().fold(f64::INFINITY, f64::min);
    if best_before - best_recent < min_improvement {
        (lr * factor).max(1e-6)
    } else {
        lr
    }
}

/// Stateful wrapper around [`lr_on_plateau`]: the observation window resets
/// after each reduction so the rate is halved once per stagnation stretch.
#[derive(Debug, Clone)]
pub struct PlateauScheduler {
    lr: f64,
    patience: usize,
    factor: f64,
    min_improvement: f64,
    history: Vec<f64>,
}

impl PlateauScheduler {
    pub fn new(lr: f64, patience: usize, factor: f64, min_improvement: f64) -> Self {
        PlateauScheduler {
            lr,
            patience,
            factor,
            min_improvement,
            history: Vec::new(),
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Records an epoch loss and returns the rate to use next.
    pub fn observe(&mut self, loss: f64) -> f64 {
        self.history.push(loss);
        let new = lr_on_plateau(
            &self.history,
            self.lr,
            self.patience,
            self.factor,
            self.min_improvement,
        );
        if new < self.lr {
            self.history.clear();
        }
        self.lr = new;
        self.lr
    }
}

#[derive(Debug, Clone)]
pub struct EarlyStopper {
    best: f64,
    best_epoch: usize,
    wait: usize,
    patience: usize,
    min_delta: f64,
}

impl EarlyStopper {
    pub fn new(patience: usize, min_delta: f64) -> Self {
        EarlyStopper {
            best: f64::INFINITY,
            best_epoch: 0,
            wait: 0,
            patience,
            min_delta,
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    /// Returns (improved, should_stop).
    pub fn observe(&mut self, epoch: usize, loss: f64) -> (bool, bool) {
        if loss < self.best - self.min_delta {
            self.best = loss;
            self.best_epoch = epoch;
            self.wait = 0;
            (true, false)
        } else {
            self.wait += 1;
            (false, self.wait >= self.patience)
        }
    }
}

// ---------------------------------------------------------------------------
// Optimizers
// ---------------------------------------------------------------------------

/// Adam with the usual moment coefficients (0.9, 0.999). Parameter tensors
/// are matched to their moment buffers by enumeration order, which is fixed
/// by the model structure.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step(&mut self, mut pairs: Vec<(&mut [f64], &[f64])>) {
        if self.m.is_empty() {
            self.m = pairs.iter().map(|(p, _)| vec![0.0; p.len()]).collect();
            self.v = self.m.clone();
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        for (idx, (params, grads)) in pairs.iter_mut().enumerate() {
            let m = &mut self.m[idx];
            let v = &mut self.v[idx];
            for i in 0..params.len() {
                let g = grads[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                if self.lr != 0.0 {
                    let mhat = m[i] / bc1;
                    let vhat = v[i] / bc2;
                    params[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
                }
            }
        }
    }
}

/// Plain stochastic gradient descent (used by the descent-property tests).
#[derive(Debug, Clone)]
pub struct Sgd {
    pub lr: f64,
}

impl Sgd {
    pub fn step(&self, mut pairs: Vec<(&mut [f64], &[f64])>) {
        if self.lr == 0.0 {
            return;
        }
        for (params, grads) in pairs.iter_mut() {
            for i in 0..params.len() {
                params[i] -= self.lr * grads[i];
            }
        }
    }
}

// Parameter/gradient slice enumeration. Order is the structural order and
// must stay identical between the two sides.

fn dense_pairs<'a>(
    layer: &'a mut Dense,
    grads: &'a DenseGrads,
    out: &mut Vec<(&'a mut [f64], &'a [f64])>,
) {
    let Dense { w, b } = layer;
    out.push((w.as_slice_mut().unwrap(), grads.w.as_slice().unwrap()));
    out.push((b.as_slice_mut().unwrap(), grads.b.as_slice().unwrap()));
}

fn mlp_pairs<'a>(
    mlp: &'a mut Mlp,
    grads: &'a MlpGrads,
    out: &mut Vec<(&'a mut [f64], &'a [f64])>,
) {
    for (layer, g) in mlp.layers.iter_mut().zip(&grads.layers) {
        dense_pairs(layer, g, out);
    }
}

fn encoder_pairs<'a>(
    encoder: &'a mut crate::model::Encoder,
    grads: &'a crate::model::EncoderGrads,
    out: &mut Vec<(&'a mut [f64], &'a [f64])>,
) {
    dense_pairs(&mut encoder.embed, &grads.embed, out);
    for (block, bg) in encoder.blocks.iter_mut().zip(&grads.blocks) {
        let attn = &mut block.attn;
        out.push((
            attn.wq.as_slice_mut().unwrap(),
            bg.attn.wq.as_slice().unwrap(),
        ));
        out.push((
            attn.wk.as_slice_mut().unwrap(),
            bg.attn.wk.as_slice().unwrap(),
        ));
        out.push((
            attn.wv.as_slice_mut().unwrap(),
            bg.attn.wv.as_slice().unwrap(),
        ));
        out.push((
            attn.wo.as_slice_mut().unwrap(),
            bg.attn.wo.as_slice().unwrap(),
        ));
        for (conv, cg) in block.convs.iter_mut().zip(&bg.convs) {
            out.push((conv.w.as_slice_mut().unwrap(), cg.w.as_slice().unwrap()));
            out.push((conv.b.as_slice_mut().unwrap(), cg.b.as_slice().unwrap()));
        }
        if let (Some(norm), Some(ng)) = (&mut block.norm, &bg.norm) {
            out.push((
                norm.gamma.as_slice_mut().unwrap(),
                ng.gamma.as_slice().unwrap(),
            ));
            out.push((
                norm.beta.as_slice_mut().unwrap(),
                ng.beta.as_slice().unwrap(),
            ));
        }
    }
}

// ---------------------------------------------------------------------------
// Cross entropy
// ---------------------------------------------------------------------------

/// Mean cross entropy of softmax(logits) against integer targets, with the
/// gradient w.r.t. the logits.
pub fn softmax_cross_entropy(logits: &Array2<f64>, targets: &[usize]) -> (f64, Array2<f64>) {
    let (n, c) = logits.dim();
    assert_eq!(n, targets.len());
    let mut grad = Array2::zeros((n, c));
    let mut loss = 0.0;
    for i in 0..n {
        let row = logits.row(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for v in row.iter() {
            denom += (v - max).exp();
        }
        let log_denom = max + denom.ln();
        loss += -(row[targets[i]] - log_denom);
        for j in 0..c {
            let p = (row[j] - max).exp() / denom;
            grad[(i, j)] = (p - if j == targets[i] { 1.0 } else { 0.0 }) / n as f64;
        }
    }
    (loss / n as f64, grad)
}

/// Mean cross entropy only (validation path).
pub fn cross_entropy_value(logits: &Array2<f64>, targets: &[usize]) -> f64 {
    softmax_cross_entropy(logits, targets).0
}

// ---------------------------------------------------------------------------
// View construction
// ---------------------------------------------------------------------------

/// How training views are generated from each instance: view 0 is always the
/// original; the rest are augmented copies.
#[derive(Debug, Clone)]
pub enum AugmentationPlan {
    /// Apply one operator with per-series default parameters.
    Standard { kind: AugmentKind },
    /// Tail-preserving augmentation for λ-length change-point windows,
    /// cycling through `kinds` per instance.
    CpdTail { tail: usize, kinds: Vec<AugmentKind> },
    /// No augmentation; only valid with a single view.
    None,
}

impl AugmentationPlan {
    fn make_view(
        &self,
        series: &crate::data::TimeSeries,
        instance: usize,
        view: usize,
        epoch: usize,
        seed: u64,
    ) -> Result<crate::data::TimeSeries> {
        let stamp = (epoch as u64) << 40 | (instance as u64) << 8 | view as u64;
        let mut rng_ = rng::indexed_rng(seed, "augment", stamp);
        match self {
            AugmentationPlan::Standard { kind } => {
                augmentation::augment(series, *kind, &mut rng_)
            }
            AugmentationPlan::CpdTail { tail, kinds } => {
                let kind = kinds[(instance + view) % kinds.len()];
                augmentation::augment_cpd_slice(series, *tail, kind, &mut rng_)
            }
            AugmentationPlan::None => Err(Error::config(
                "augmentation plan `none` cannot build extra views",
            )),
        }
    }
}

// ---------------------------------------------------------------------------
// Stage 1: encoder + projector
// ---------------------------------------------------------------------------

/// Trains the encoder and projector in place under the simplified supervised
/// contrastive loss. Views are drawn fresh each epoch from the augmentation
/// plan; batches are flat with `chunk · n_views` rows in view-major order.
pub fn train_encoder(
    model: &mut ScottModel,
    dataset: &LabeledDataset,
    plan: &AugmentationPlan,
    config: &TrainConfig,
) -> Result<TrainReport> {
    config.validate()?;
    if dataset.split() != SplitTag::Train {
        return Err(Error::config("encoder training expects the train split"));
    }
    if config.n_views > 1 && matches!(plan, AugmentationPlan::None) {
        return Err(Error::config("n_views > 1 requires an augmentation plan"));
    }

    let n = dataset.len();
    let seed = config.seed;
    let mut shuffle_rng = rng::stream_rng(seed, "shuffle-encoder");
    let mut dropout_rng = rng::stream_rng(seed, "dropout-encoder");
    let mut adam = Adam::new(config.learning_rate);
    let mut scheduler = PlateauScheduler::new(
        config.learning_rate,
        config.plateau_patience,
        config.plateau_factor,
        config.min_improvement,
    );

    let mut epoch_losses = Vec::new();
    let mut lr_trace = Vec::new();
    let mut epoch_seconds = Vec::new();
    let mut last_batch_losses = Vec::new();

    for epoch in 0..config.encoder_epochs {
        let start = Instant::now();
        let mut order: Vec<usize> = (0..n).collect();
        use rand::seq::SliceRandom;
        order.shuffle(&mut shuffle_rng);

        let mut batch_losses = Vec::new();
        for chunk in order.chunks(config.encoder_batch) {
            let m = chunk.len();
            let rows = m * config.n_views;
            let t = dataset.series_len();
            let mut batch = Array2::zeros((rows, t));
            let mut labels = vec![0usize; rows];
            for (i, &inst) in chunk.iter().enumerate() {
                let src = &dataset.series()[inst];
                for q in 0..config.n_views {
                    let view = if q == 0 {
                        src.clone()
                    } else {
                        plan.make_view(src, inst, q, epoch, seed)?
                    };
                    let row = q * m + i;
                    for (j, v) in view.values().iter().enumerate() {
                        batch[(row, j)] = *v;
                    }
                    labels[row] = dataset.labels()[inst];
                }
            }

            let mut phase = Phase::Train(&mut dropout_rng);
            let (r, enc_cache) = model.encoder.forward(&batch, &mut phase)?;
            let (z, proj_cache) = model.projector.forward(&r, &mut phase)?;
            let supcon = SupConBatch::new(
                z,
                labels,
                config.n_views,
                config.temperature,
                config.similarity,
            )?;
            let (loss, dz) = supcon_simplified_with_grad(&supcon)?;
            if !loss.value.is_finite() {
                return Err(Error::NonFinite(format!(
                    "encoder loss at epoch {epoch}, batch starting with instance {} (seed {seed})",
                    chunk[0]
                )));
            }
            batch_losses.push(loss.value / rows as f64);

            let mut enc_grads = model.encoder.zero_grads();
            let mut proj_grads = model.projector.zero_grads();
            let dr = model.projector.backward(&proj_cache, &dz, &mut proj_grads);
            model.encoder.backward(&enc_cache, &dr, &mut enc_grads);

            let mut pairs = Vec::new();
            encoder_pairs(&mut model.encoder, &enc_grads, &mut pairs);
            mlp_pairs(&mut model.projector, &proj_grads, &mut pairs);
            adam.step(pairs);
        }

        let epoch_loss = batch_losses.iter().sum::<f64>() / batch_losses.len() as f64;
        epoch_losses.push(epoch_loss);
        let lr = scheduler.observe(epoch_loss);
        adam.lr = lr;
        lr_trace.push(lr);
        epoch_seconds.push(start.elapsed().as_secs_f64());
        if epoch + 1 == config.encoder_epochs {
            last_batch_losses = batch_losses;
        }
    }

    model.meta.stage = TrainStage::EncoderTrained;
    let final_loss = *epoch_losses.last().unwrap();
    Ok(TrainReport {
        stage: "encoder".into(),
        epoch_losses,
        lr_trace,
        epoch_seconds,
        final_epoch_batch_losses: last_batch_losses,
        validation_losses: None,
        best_epoch: None,
        final_loss,
        seed,
    })
}

// ---------------------------------------------------------------------------
// Stage 2: classifier
// ---------------------------------------------------------------------------

/// Trains the classifier on frozen features (representations by default).
/// Early-stops on validation loss and restores the best-validation epoch's
/// parameters.
pub fn train_classifier(
    model: &mut ScottModel,
    features: &Array2<f64>,
    labels: &[usize],
    config: &TrainConfig,
) -> Result<TrainReport> {
    config.validate()?;
    if features.nrows() != labels.len() {
        return Err(Error::config("one label per feature row required"));
    }
    let distinct = {
        let mut seen = vec![false; model.meta.classes];
        for &l in labels {
            if l >= model.meta.classes {
                return Err(Error::config(format!("label {l} out of range")));
            }
            seen[l] = true;
        }
        seen.iter().filter(|s| **s).count()
    };
    if distinct < 2 {
        return Err(Error::config(
            "classifier training requires at least 2 classes present",
        ));
    }

    let seed = config.seed;
    let (train_idx, val_idx) = stratified_split_indices(
        labels,
        model.meta.classes,
        config.validation_fraction,
        rng::derive_seed(seed, "classifier-validation"),
    )?;

    let gather = |idx: &[usize]| {
        let mut x = Array2::zeros((idx.len(), features.ncols()));
        let mut y = Vec::with_capacity(idx.len());
        for (row, &i) in idx.iter().enumerate() {
            x.row_mut(row).assign(&features.row(i));
            y.push(labels[i]);
        }
        (x, y)
    };
    let (train_x, train_y) = gather(&train_idx);
    let (val_x, val_y) = gather(&val_idx);

    let mut shuffle_rng = rng::stream_rng(seed, "shuffle-classifier");
    let mut dropout_rng = rng::stream_rng(seed, "dropout-classifier");
    let mut adam = Adam::new(config.learning_rate);
    let mut scheduler = PlateauScheduler::new(
        config.learning_rate,
        config.plateau_patience,
        config.plateau_factor,
        config.min_improvement,
    );
    let mut stopper = EarlyStopper::new(config.early_stop_patience, 0.0);

    let mut epoch_losses = Vec::new();
    let mut val_losses = Vec::new();
    let mut lr_trace = Vec::new();
    let mut epoch_seconds = Vec::new();
    let mut last_batch_losses = Vec::new();
    let mut best_params: Option<Mlp> = None;

    for epoch in 0..config.classifier_epochs {
        let start = Instant::now();
        let mut order: Vec<usize> = (0..train_x.nrows()).collect();
        use rand::seq::SliceRandom;
        order.shuffle(&mut shuffle_rng);

        let mut batch_losses = Vec::new();
        for chunk in order.chunks(config.classifier_batch) {
            let mut x = Array2::zeros((chunk.len(), train_x.ncols()));
            let mut y = Vec::with_capacity(chunk.len());
            for (row, &i) in chunk.iter().enumerate() {
                x.row_mut(row).assign(&train_x.row(i));
                y.push(train_y[i]);
            }
            let mut phase = Phase::Train(&mut dropout_rng);
            let (logits, cache) = model.classifier.forward(&x, &mut phase)?;
            let (loss, dlogits) = softmax_cross_entropy(&logits, &y);
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "classifier loss at epoch {epoch} (seed {seed})"
                )));
            }
            batch_losses.push(loss);
            let mut grads = model.classifier.zero_grads();
            model.classifier.backward(&cache, &dlogits, &mut grads);
            let mut pairs = Vec::new();
            mlp_pairs(&mut model.classifier, &grads, &mut pairs);
            adam.step(pairs);
        }

        let epoch_loss = batch_losses.iter().sum::<f64>() / batch_losses.len() as f64;
        epoch_losses.push(epoch_loss);
        last_batch_losses = batch_losses;

        let (val_logits, _) = model.classifier.forward(&val_x, &mut Phase::Eval)?;
        let val_loss = cross_entropy_value(&val_logits, &val_y);
        val_losses.push(val_loss);

        let lr = scheduler.observe(val_loss);
        adam.lr = lr;
        lr_trace.push(lr);
        epoch_seconds.push(start.elapsed().as_secs_f64());

        let (improved, stop) = stopper.observe(epoch, val_loss);
        if improved {
            best_params = Some(model.classifier.clone());
        }
        if stop {
            break;
        }
    }

    if let Some(best) = best_params {
        model.classifier = best;
    }
    model.meta.stage = TrainStage::FullyTrained;

    let final_loss = *epoch_losses.last().unwrap();
    Ok(TrainReport {
        stage: "classifier".into(),
        epoch_losses,
        lr_trace,
        epoch_seconds,
        final_epoch_batch_losses: last_batch_losses,
        validation_losses: Some(val_losses),
        best_epoch: Some(stopper.best_epoch()),
        final_loss,
        seed,
    })
}

/// Frozen representations for a whole dataset, computed in fixed-size
/// chunks.
pub fn encode_dataset(model: &ScottModel, dataset: &LabeledDataset) -> Result<Array2<f64>> {
    let refs: Vec<&crate::data::TimeSeries> = dataset.series().iter().collect();
    let mut out = Array2::zeros((refs.len(), model.encoder.width()));
    for (start, chunk) in refs.chunks(256).enumerate().map(|(i, c)| (i * 256, c)) {
        let batch = batch_matrix(chunk)?;
        let r = model.encode(&batch, &mut Phase::Eval)?;
        for (row, i) in (start..start + chunk.len()).enumerate() {
            out.row_mut(i).assign(&r.row(row));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::TimeSeries;
    use crate::error::Error;
    use crate::model::ModelConfig;
    use crate::rng::stream_rng;
    use rand::Rng;

    fn toy_config(seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: 0.01,
            encoder_epochs: 50,
            encoder_batch: 16,
            classifier_epochs: 60,
            classifier_batch: 8,
            seed,
            ..Default::default()
        }
    }

    fn tiny_model(classes: usize, seed: u64) -> ScottModel {
        let config = ModelConfig {
            width: 8,
            heads: 2,
            head_dim: 4,
            kernel_size: 2,
            conv_filters: 8,
            dilations: vec![1, 2],
            projector_hidden: vec![8, 8],
            classifier_hidden: vec![16, 8],
            ..Default::default()
        };
        ScottModel::new(&config, classes, seed).unwrap()
    }

    /// Linearly separable two-class toy set: class 0 rises, class 1 falls.
    fn toy_dataset(n_per_class: usize, t: usize, seed: u64) -> LabeledDataset {
        let mut rng = stream_rng(seed, "toy");
        let mut series = Vec::new();
        let mut labels = Vec::new();
        for c in 0..2usize {
            for _ in 0..n_per_class {
                let slope = if c == 0 { 1.0 } else { -1.0 };
                let offset: f64 = rng.gen_range(-0.5..0.5);
                let vals: Vec<f64> = (0..t)
                    .map(|i| offset + slope * i as f64 / t as f64 + rng.gen_range(-0.05..0.05))
                    .collect();
                series.push(TimeSeries::new(vals).unwrap());
                labels.push(c);
            }
        }
        LabeledDataset::from_labeled_series(series, labels, 2, SplitTag::Train).unwrap()
    }

    #[test]
    fn lr_on_plateau_examples() {
        // Strictly decreasing by more than the threshold: unchanged.
        let decreasing: Vec<f64> = (0..12).map(|i| 1.0 - i as f64 * 0.01).collect();
        assert_eq!(lr_on_plateau(&decreasing, 0.1, 10, 0.5, 1e-4), 0.1);
        // Flat history of patience+1: halved.
        let flat = vec![0.7; 11];
        assert_eq!(lr_on_plateau(&flat, 0.1, 10, 0.5, 1e-4), 0.05);
        // Floor at 1e-6.
        assert_eq!(lr_on_plateau(&flat, 1e-6, 10, 0.5, 1e-4), 1e-6);
        // Too short a history: unchanged.
        assert_eq!(lr_on_plateau(&[1.0, 1.0], 0.1, 10, 0.5, 1e-4), 0.1);
    }

    #[test]
    fn scheduler_halves_once_per_stretch() {
        let mut s = PlateauScheduler::new(0.4, 3, 0.5, 1e-4);
        let mut rates = Vec::new();
        for _ in 0..12 {
            rates.push(s.observe(1.0));
        }
        // Nonincreasing, each change exactly x0.5.
        for w in rates.windows(2) {
            assert!(w[1] <= w[0]);
            if w[1] != w[0] {
                assert!((w[1] - w[0] * 0.5).abs() < 1e-15);
            }
        }
        assert!(rates.last().unwrap() < &0.4);
    }

    #[test]
    fn adam_zero_lr_keeps_params_bit_identical() {
        let mut model = tiny_model(2, 0);
        let before: Vec<Vec<f64>> = model
            .projector
            .layers
            .iter()
            .map(|l| l.w.iter().cloned().collect())
            .collect();
        let mut grads = model.projector.zero_grads();
        for g in &mut grads.layers {
            g.w.fill(0.37);
            g.b.fill(-0.12);
        }
        let mut adam = Adam::new(0.0);
        let mut pairs = Vec::new();
        mlp_pairs(&mut model.projector, &grads, &mut pairs);
        adam.step(pairs);
        for (layer, orig) in model.projector.layers.iter().zip(&before) {
            let now: Vec<f64> = layer.w.iter().cloned().collect();
            assert!(now.iter().zip(orig).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }

    /// Descent sanity on a separable 2-class toy set. The supervised
    /// contrastive loss has an entropy floor: every anchor's denominator
    /// contains its |P| positives, so the per-anchor loss cannot drop below
    /// ln((n_same-1) + n_other·e^{-2}) even under perfect class collapse
    /// (cosine similarity, tau = 1). The halving check therefore applies to
    /// the excess above that floor.
    #[test]
    fn encoder_training_halves_toy_excess_loss() {
        let dataset = toy_dataset(8, 12, 1);
        let mut model = tiny_model(2, 2);
        let config = toy_config(3);
        let report = train_encoder(
            &mut model,
            &dataset,
            &AugmentationPlan::Standard {
                kind: AugmentKind::Jitter,
            },
            &config,
        )
        .unwrap();
        // Flat batch of 32 rows, 16 per class.
        let n_same = 16.0f64;
        let n_other = 16.0f64;
        let floor = ((n_same - 1.0) + n_other * (-2.0f64).exp()).ln();
        let first = report.epoch_losses[0];
        let last = report.final_loss;
        assert!(first > floor && last > floor, "floor {floor} vs {first}, {last}");
        assert!(
            last - floor < 0.5 * (first - floor),
            "excess loss did not halve: {first} -> {last} (floor {floor})"
        );
        assert_eq!(model.meta.stage, TrainStage::EncoderTrained);
    }

    #[test]
    fn lr_trace_nonincreasing_with_exact_halving() {
        let dataset = toy_dataset(6, 10, 4);
        let mut model = tiny_model(2, 5);
        let mut config = toy_config(6);
        config.encoder_epochs = 40;
        config.plateau_patience = 3;
        let report = train_encoder(
            &mut model,
            &dataset,
            &AugmentationPlan::Standard {
                kind: AugmentKind::Jitter,
            },
            &config,
        )
        .unwrap();
        for w in report.lr_trace.windows(2) {
            assert!(w[1] <= w[0]);
            if w[1] != w[0] {
                assert!((w[1] / w[0] - 0.5).abs() < 1e-12, "{} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn encoder_training_is_deterministic() {
        let dataset = toy_dataset(5, 9, 7);
        let config = toy_config(8);
        let mut m1 = tiny_model(2, 9);
        let mut m2 = tiny_model(2, 9);
        let plan = AugmentationPlan::Standard {
            kind: AugmentKind::Jitter,
        };
        let mut c = config.clone();
        c.encoder_epochs = 10;
        let r1 = train_encoder(&mut m1, &dataset, &plan, &c).unwrap();
        let r2 = train_encoder(&mut m2, &dataset, &plan, &c).unwrap();
        assert_eq!(r1.epoch_losses, r2.epoch_losses);
        assert_eq!(
            m1.encoder.embed.w.as_slice().unwrap(),
            m2.encoder.embed.w.as_slice().unwrap()
        );
    }

    #[test]
    fn epoch_loss_is_mean_of_batch_losses() {
        let dataset = toy_dataset(9, 8, 10);
        let mut model = tiny_model(2, 11);
        let mut config = toy_config(12);
        config.encoder_epochs = 3;
        config.encoder_batch = 4;
        let report = train_encoder(
            &mut model,
            &dataset,
            &AugmentationPlan::Standard {
                kind: AugmentKind::Jitter,
            },
            &config,
        )
        .unwrap();
        let mean = report.final_epoch_batch_losses.iter().sum::<f64>()
            / report.final_epoch_batch_losses.len() as f64;
        assert!((mean - report.final_loss).abs() < 1e-12);
    }

    #[test]
    fn classifier_overfits_separable_toy_set() {
        let dataset = toy_dataset(10, 10, 13);
        let mut model = tiny_model(2, 14);
        let mut config = toy_config(15);
        config.encoder_epochs = 30;
        train_encoder(
            &mut model,
            &dataset,
            &AugmentationPlan::Standard {
                kind: AugmentKind::Jitter,
            },
            &config,
        )
        .unwrap();
        let features = encode_dataset(&model, &dataset).unwrap();
        train_classifier(&mut model, &features, dataset.labels(), &config).unwrap();

        let probs = model
            .classify(&features, &mut Phase::Eval)
            .unwrap();
        let predicted: Vec<usize> = probs
            .rows()
            .into_iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .unwrap()
                    .0
            })
            .collect();
        let acc = crate::metrics::accuracy(&predicted, dataset.labels()).unwrap();
        assert_eq!(acc, 1.0, "train accuracy {acc}");
        assert_eq!(model.meta.stage, TrainStage::FullyTrained);
    }

    #[test]
    fn classifier_early_stops_and_restores_best_epoch() {
        // A small noisy feature set: validation loss plateaus well before the
        // epoch cap.
        let mut rng = stream_rng(16, "noisy");
        let n = 40;
        let d = 8;
        let features = Array2::from_shape_fn((n, d), |(i, j)| {
            let class_shift = if i % 2 == 0 { 0.3 } else { -0.3 };
            class_shift + 0.05 * ((i * 7 + j * 3) % 5) as f64 + rng.gen_range(-1.0..1.0)
        });
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let mut model = tiny_model(2, 17);
        let mut config = toy_config(18);
        config.classifier_epochs = 150;
        config.early_stop_patience = 8;
        let report = train_classifier(&mut model, &features, &labels, &config).unwrap();
        let val = report.validation_losses.as_ref().unwrap();
        assert!(
            val.len() < 150,
            "expected early stop, ran {} epochs",
            val.len()
        );
        // Best epoch is the argmin of the validation trace.
        let argmin = val
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(report.best_epoch, Some(argmin));
    }

    /// Full-chain gradient validation: supcon(project(encode(x))) against
    /// central finite differences, both through the input and through every
    /// parameter tensor.
    #[test]
    fn end_to_end_gradient_matches_finite_differences() {
        use crate::neural::gradcheck::{finite_diff_grad, max_rel_error_floored};

        let model = tiny_model(2, 30);
        let mut rng = stream_rng(31, "e2e");
        let b = 4;
        let t = 7;
        let batch = Array2::from_shape_fn((b, t), |_| rng.gen_range(-1.0..1.0));
        let labels = vec![0usize, 1, 0, 1];

        let eval = |model: &ScottModel, batch: &Array2<f64>| -> f64 {
            let r = model.encode(batch, &mut Phase::Eval).unwrap();
            let z = model.project(&r, &mut Phase::Eval).unwrap();
            let sb = SupConBatch::new(z, labels.clone(), 1, 1.0, Similarity::Cosine).unwrap();
            crate::loss::supcon_simplified(&sb).unwrap().value
        };

        // Analytic gradients.
        let (r, enc_cache) = model.encoder.forward(&batch, &mut Phase::Eval).unwrap();
        let (z, proj_cache) = model.projector.forward(&r, &mut Phase::Eval).unwrap();
        let sb = SupConBatch::new(z, labels.clone(), 1, 1.0, Similarity::Cosine).unwrap();
        let (_, dz) = supcon_simplified_with_grad(&sb).unwrap();
        let mut enc_grads = model.encoder.zero_grads();
        let mut proj_grads = model.projector.zero_grads();
        let dr = model.projector.backward(&proj_cache, &dz, &mut proj_grads);
        let dx = model.encoder.backward(&enc_cache, &dr, &mut enc_grads);

        // Input gradient.
        let flat: Vec<f64> = batch.iter().cloned().collect();
        let numeric = finite_diff_grad(
            &mut |p| {
                let arr = Array2::from_shape_vec((b, t), p.to_vec()).unwrap();
                eval(&model, &arr)
            },
            &flat,
            1e-5,
        );
        let analytic: Vec<f64> = dx.iter().cloned().collect();
        // Components whose gradient is below the finite-difference noise
        // floor (|loss|*ulp/(2*eps) ~ 1e-11 here) are indistinguishable from
        // zero; floor the denominator above that noise.
        let err = max_rel_error_floored(&analytic, &numeric, 1e-6);
        assert!(err < 1e-4, "input gradient error {err}");

        // Parameter gradients: every tensor, first few entries.
        let mut probe = model.clone();
        let mut analytic_params = Vec::new();
        {
            let mut pairs = Vec::new();
            encoder_pairs(&mut probe.encoder, &enc_grads, &mut pairs);
            mlp_pairs(&mut probe.projector, &proj_grads, &mut pairs);
            for (_, g) in &pairs {
                analytic_params.push(g.iter().take(3).cloned().collect::<Vec<f64>>());
            }
        }
        let n_tensors = analytic_params.len();
        for tensor_idx in 0..n_tensors {
            for entry in 0..analytic_params[tensor_idx].len() {
                let eps = 1e-5;
                let mut value_at = |delta: f64| {
                    let mut m = model.clone();
                    {
                        let enc_g = m.encoder.zero_grads();
                        let proj_g = m.projector.zero_grads();
                        let mut pairs = Vec::new();
                        encoder_pairs(&mut m.encoder, &enc_g, &mut pairs);
                        mlp_pairs(&mut m.projector, &proj_g, &mut pairs);
                        pairs[tensor_idx].0[entry] += delta;
                    }
                    eval(&m, &batch)
                };
                let numeric = (value_at(eps) - value_at(-eps)) / (2.0 * eps);
                let analytic = analytic_params[tensor_idx][entry];
                let rel =
                    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
                assert!(
                    rel < 1e-4,
                    "tensor {tensor_idx} entry {entry}: analytic {analytic} vs numeric {numeric}"
                );
            }
        }
    }

    #[test]
    fn single_class_classifier_errors() {
        let features = Array2::zeros((6, 4));
        let labels = vec![0usize; 6];
        let mut model = tiny_model(2, 19);
        let config = toy_config(20);
        assert!(train_classifier(&mut model, &features, &labels, &config).is_err());
    }

    /// A diverging run (unbounded similarities under a huge step size)
    /// aborts with a diagnostic instead of emitting NaN parameters.
    #[test]
    fn non_finite_loss_aborts_with_diagnostic() {
        let dataset = toy_dataset(6, 8, 24);
        let mut model = tiny_model(2, 25);
        let mut config = toy_config(26);
        config.learning_rate = 1e78;
        config.encoder_epochs = 40;
        config.similarity = Similarity::Dot;
        let result = train_encoder(
            &mut model,
            &dataset,
            &AugmentationPlan::Standard {
                kind: AugmentKind::Jitter,
            },
            &config,
        );
        match result {
            Err(Error::NonFinite(msg)) => {
                assert!(msg.contains("epoch"), "diagnostic should name the epoch: {msg}");
            }
            other => panic!("expected a non-finite abort, got {other:?}"),
        }
    }

    #[test]
    fn nviews_without_plan_errors() {
        let dataset = toy_dataset(4, 8, 21);
        let mut model = tiny_model(2, 22);
        let config = toy_config(23);
        assert!(train_encoder(&mut model, &dataset, &AugmentationPlan::None, &config).is_err());
    }



}