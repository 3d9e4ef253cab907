use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use dropsync_core::rng;

use crate::dataset::PairSet;
use crate::error::{NeuralError, Result};
use crate::loss::{bce_with_logit, bce_with_logit_grad};
use crate::model::{ModelConfig, SiameseModel};
use crate::optim::{Adam, DEFAULT_LR};
use crate::param::Parameterized;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub stage1: StageConfig,
    pub stage2: StageConfig,
    pub seed: u64,
    /// Worker threads; 0 uses rayon's default. Results do not depend on it.
    pub threads: usize,
}

impl TrainConfig {
    pub fn new(model: ModelConfig, seed: u64) -> Self {
        Self {
            model,
            stage1: StageConfig { epochs: 20, batch_size: 50, lr: DEFAULT_LR },
            stage2: StageConfig { epochs: 20, batch_size: 30, lr: DEFAULT_LR },
            seed,
            threads: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        for (name, s) in [("stage1", &self.stage1), ("stage2", &self.stage2)] {
            if s.epochs == 0 || s.batch_size == 0 || !(s.lr > 0.0) {
                return Err(NeuralError::InvalidConfig { field: "stage", reason: format!("{name}: epochs, batch size and lr must be positive") });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub stage: u8,
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_loss: Option<f64>,
    pub dev_f1: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct StageData<'a> {
    pub train: &'a PairSet,
    pub dev: Option<&'a PairSet>,
}

/// Loss and parameter gradient of one example.
pub fn pair_gradient(model: &SiameseModel, set: &PairSet, i: usize) -> Result<(f64, SiameseModel)> {
    let mut grads = model.zeros_like();
    let loss = accumulate_gradients(model, set, &[i], &mut grads)?;
    Ok((loss, grads))
}

/// Examples per independently accumulated gradient buffer.
pub const GRAD_CHUNK: usize = 8;

/// Accumulate loss and gradients of `indices` sequentially into `grads`.
fn accumulate_gradients(model: &SiameseModel, set: &PairSet, indices: &[usize], grads: &mut SiameseModel) -> Result<f64> {
    let mut loss = 0.0;
    for &i in indices {
        let (h, r) = set.tensors(i, &model.normalizer)?;
        let label = set.examples[i].label;
        let cache = model.forward(&h, &r)?;
        model.backward(&cache, bce_with_logit_grad(cache.logit, label), grads, false);
        loss += bce_with_logit(cache.logit, label);
    }
    Ok(loss)
}

/// Mean loss and mean gradient over `indices`. The batch is cut into fixed
/// chunks of [`GRAD_CHUNK`] examples, each accumulated in order and the
/// chunk sums added in order, so results do not depend on thread count.
pub fn batch_gradient(model: &SiameseModel, set: &PairSet, indices: &[usize]) -> Result<(f64, SiameseModel)> {
    if indices.is_empty() {
        return Err(NeuralError::EmptyDataset("batch"));
    }
    let parts: Vec<(f64, SiameseModel)> = indices
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut g = model.zeros_like();
            let l = accumulate_gradients(model, set, chunk, &mut g)?;
            Ok((l, g))
        })
        .collect::<Result<_>>()?;
    let mut parts = parts.into_iter();
    let (mut loss, mut total) = parts.next().expect("non-empty batch");
    for (l, g) in parts {
        loss += l;
        total.accumulate(&g);
    }
    let n = indices.len() as f64;
    total.scale(1.0 / n);
    Ok((loss / n, total))
}

/// Probabilities for every example of `set`, in order.
pub fn predict_set(model: &SiameseModel, set: &PairSet) -> Result<Vec<f64>> {
    (0..set.len())
        .into_par_iter()
        .map(|i| {
            let (h, r) = set.tensors(i, &model.normalizer)?;
            model.predict(&h, &r)
        })
        .collect()
}

/// F1 of thresholded probabilities against labels; 0 when undefined.
pub fn f1_at_half(probs: &[f64], labels: impl IntoIterator<Item = u8>) -> f64 {
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (&p, y) in probs.iter().zip(labels) {
        match (p >= 0.5, y == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    if tp == 0 {
        return 0.0;
    }
    let (p, r) = (tp as f64 / (tp + fp) as f64, tp as f64 / (tp + fn_) as f64);
    2.0 * p * r / (p + r)
}

fn dev_metrics(model: &SiameseModel, dev: &PairSet) -> Result<(f64, f64)> {
    let probs = predict_set(model, dev)?;
    let loss = probs.iter().zip(&dev.examples).map(|(&p, e)| crate::loss::bce_loss(p, e.label)).sum::<f64>() / dev.len().max(1) as f64;
    Ok((loss, f1_at_half(&probs, dev.examples.iter().map(|e| e.label))))
}

/// Train one stage in place with a fresh optimizer.
pub fn train_stage(model: &mut SiameseModel, stage: u8, cfg: &StageConfig, seed: u64, data: StageData<'_>) -> Result<Vec<EpochMetrics>> {
    if data.train.is_empty() {
        return Err(NeuralError::EmptyDataset("training pairs"));
    }
    let mut adam = Adam::new(cfg.lr);
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut r = rng::rng_at(seed, &[0x7a41, stage as u64, epoch as u64]);
        order.shuffle(&mut r);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let (loss, grads) = batch_gradient(model, data.train, batch)?;
            if !loss.is_finite() {
                return Err(NeuralError::NonFinite("training loss"));
            }
            loss_sum += loss * batch.len() as f64;
            adam.step(model, &grads)?;
        }
        let (dev_loss, dev_f1) = match data.dev {
            Some(d) if !d.is_empty() => {
                let (l, f) = dev_metrics(model, d)?;
                (Some(l), Some(f))
            }
            _ => (None, None),
        };
        let m = EpochMetrics { stage, epoch, train_loss: loss_sum / data.train.len() as f64, dev_loss, dev_f1 };
        log::info!("stage {stage} epoch {epoch}: loss {:.4} dev_f1 {:?}", m.train_loss, m.dev_f1);
        history.push(m);
    }
    Ok(history)
}

/// Two-stage training. Without `init` a model is built from the config and
/// its normalizer is fitted on the first stage's training pairs; a
/// warm-started model keeps its own normalizer. Either stage may be skipped.
pub fn train(cfg: &TrainConfig, stage1: Option<StageData<'_>>, stage2: Option<StageData<'_>>, init: Option<SiameseModel>) -> Result<(SiameseModel, Vec<EpochMetrics>)> {
    cfg.validate()?;
    let first = stage1.or(stage2).ok_or(NeuralError::EmptyDataset("no training stage"))?;
    let run = || -> Result<(SiameseModel, Vec<EpochMetrics>)> {
        let mut model = match init {
            Some(m) => m,
            None => {
                let mut m = SiameseModel::new(cfg.model, &mut rng::rng_at(cfg.seed, &[0x1417]))?;
                m.normalizer = first.train.fit_normalizer()?;
                m
            }
        };
        let mut history = Vec::new();
        if let Some(d) = stage1 {
            history.extend(train_stage(&mut model, 1, &cfg.stage1, cfg.seed, d)?);
        }
        if let Some(d) = stage2 {
            history.extend(train_stage(&mut model, 2, &cfg.stage2, cfg.seed, d)?);
        }
        Ok((model, history))
    };
    if cfg.threads == 0 {
        run()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| NeuralError::InvalidConfig { field: "threads", reason: e.to_string() })?;
        pool.install(run)
    }
}
