use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{ConfusionMatrix, MetricsReport};
use super::optim::Adam;
use crate::autograd::Graph;
use crate::data::patches::{PatchSet, Split};
use crate::error::{Error, Result};
use crate::model::params::apply_stat_updates;
use crate::model::{argmax_rows, Model};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { lr: 1e-3, batch_size: 64, epochs: 100, seed: 0, beta1: 0.9, beta2: 0.999, adam_eps: 1e-8 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be finite and non-negative, got {}", self.lr)));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("batch size and epochs must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.adam_eps > 0.0) {
            return Err(Error::Config("Adam coefficients must lie in [0, 1) with positive eps".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    pub loss: f64,
    /// Accuracy of the training-mode predictions made during the epoch.
    pub train_oa: f64,
    pub seconds: f64,
}

pub fn epoch_csv(log: &[EpochLog]) -> String {
    let mut s = String::from("epoch,loss,train_oa,seconds\n");
    for e in log {
        s.push_str(&format!("{},{:.6},{:.6},{:.3}\n", e.epoch, e.loss, e.train_oa, e.seconds));
    }
    s
}

/// `N×B×P×P` batch of the given samples.
pub fn gather<T: Scalar>(set: &PatchSet, indices: &[usize]) -> Result<Tensor<T>> {
    let mut data = Vec::with_capacity(indices.len() * set.patch_len());
    for &i in indices {
        data.extend(set.patch(i).into_iter().map(|v| T::of(v as f64)));
    }
    Tensor::new(vec![indices.len(), set.bands(), set.size(), set.size()], data)
}

fn step_seed(seed: u64, step: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(step)
}

/// Mini-batch Adam on mean cross-entropy over the training split.
///
/// Samples are reshuffled each epoch with seed `seed + epoch`. Calls
/// `on_epoch` after every epoch.
pub fn train_with<T: Scalar>(
    model: &mut Model<T>,
    set: &PatchSet,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<Vec<EpochLog>> {
    cfg.validate()?;
    let train_idx = set.indices(Split::Train);
    if train_idx.is_empty() {
        return Err(Error::Data("training split is empty".into()));
    }
    if set.classes() != model.config().classes {
        return Err(Error::Config(format!("data has {} classes, model {}", set.classes(), model.config().classes)));
    }
    let mut adam = Adam::new(model.store(), cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps);
    let trainable = model.store().trainable_ids();
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        let mut order = train_idx.clone();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(epoch as u64)));
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let x = gather::<T>(set, chunk)?;
            let targets: Vec<usize> = chunk.iter().map(|&i| set.samples()[i].class()).collect();
            let mut ctx = model.ctx(Graph::training(step_seed(cfg.seed, adam.steps())));
            let xv = ctx.graph.input(x);
            let logits = model.forward(&mut ctx, xv)?;
            let loss = ctx.graph.cross_entropy(logits, &targets)?;
            let value = ctx.graph.value(loss).item().as_f64();
            if !value.is_finite() {
                return Err(Error::Numeric(format!("non-finite loss at epoch {} batch {b}", epoch + 1)));
            }
            loss_sum += value * chunk.len() as f64;
            let preds = argmax_rows(ctx.graph.value(logits));
            correct += preds.iter().zip(&targets).filter(|(p, t)| p == t).count();
            let mut grads = ctx.graph.backward(loss)?;
            let pairs: Vec<_> = trainable.iter().filter_map(|&id| grads.take(ctx.p(id)).map(|g| (id, g))).collect();
            let updates = std::mem::take(&mut ctx.stat_updates);
            drop(ctx);
            adam.step(model.store_mut(), &pairs);
            apply_stat_updates(model.store_mut(), &updates);
        }
        let entry = EpochLog {
            epoch: epoch + 1,
            loss: loss_sum / order.len() as f64,
            train_oa: correct as f64 / order.len() as f64,
            seconds: start.elapsed().as_secs_f64(),
        };
        on_epoch(&entry);
        log.push(entry);
    }
    Ok(log)
}

pub fn train<T: Scalar>(model: &mut Model<T>, set: &PatchSet, cfg: &TrainConfig) -> Result<Vec<EpochLog>> {
    train_with(model, set, cfg, |_| {})
}

/// Inference-mode class predictions for `indices`, in order.
///
/// Batches are spread over the available cores; results do not depend on
/// the thread count.
pub fn predict<T: Scalar>(model: &Model<T>, set: &PatchSet, indices: &[usize], batch: usize) -> Result<Vec<usize>> {
    let batch = batch.max(1);
    let chunks: Vec<&[usize]> = indices.chunks(batch).collect();
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(chunks.len()).max(1);
    let per = chunks.len().div_ceil(threads);
    let results: Vec<Result<Vec<usize>>> = std::thread::scope(|s| {
        let handles: Vec<_> = chunks
            .chunks(per.max(1))
            .map(|group| {
                s.spawn(move || -> Result<Vec<usize>> {
                    let mut out = Vec::new();
                    for c in group {
                        out.extend(model.predict(gather(set, c)?)?);
                    }
                    Ok(out)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("prediction thread panicked")).collect()
    });
    let mut out = Vec::with_capacity(indices.len());
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

/// Confusion matrix and metrics of the samples in `split`.
pub fn evaluate<T: Scalar>(model: &Model<T>, set: &PatchSet, split: Split) -> Result<(ConfusionMatrix, MetricsReport)> {
    let idx = set.indices(split);
    if idx.is_empty() {
        return Err(Error::Data(format!("{split:?} split is empty")));
    }
    let preds = predict(model, set, &idx, 64)?;
    let truth: Vec<usize> = idx.iter().map(|&i| set.samples()[i].class()).collect();
    let cm = ConfusionMatrix::from_pairs(set.classes(), &truth, &preds);
    let report = cm.metrics();
    Ok((cm, report))
}
