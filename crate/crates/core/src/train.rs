//! SGD with momentum, warmup plus cosine annealing, and an early-stopping
//! training loop.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::ImageDataset;
use crate::error::{invalid, Result};
use crate::nn::{cross_entropy, softmax, ForwardStats, ScoreMode, VitModel};
use crate::stats::{compute_metrics, Metrics};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr0: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub warmup_epochs: usize,
    pub patience: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr0: 0.05,
            batch_size: 16,
            epochs: 100,
            warmup_epochs: 3,
            patience: 20,
            momentum: 0.9,
            weight_decay: 0.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr0 >= 0.0 && self.lr0.is_finite()) {
            return Err(invalid(format!("lr0 = {} must be finite and non-negative", self.lr0)));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch_size must be positive"));
        }
        if self.warmup_epochs >= self.epochs {
            return Err(invalid(format!(
                "warmup_epochs = {} must be below epochs = {}",
                self.warmup_epochs, self.epochs
            )));
        }
        if self.patience == 0 {
            return Err(invalid("patience must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(invalid(format!("momentum = {} must lie in [0, 1)", self.momentum)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(invalid(format!("weight_decay = {} must be finite and non-negative", self.weight_decay)));
        }
        Ok(())
    }
}

/// Linear warmup to `lr0`, then a half cosine over the remaining epochs.
pub fn lr_schedule(epoch: usize, config: &TrainConfig) -> f64 {
    let w = config.warmup_epochs;
    if epoch < w {
        return config.lr0 * (epoch + 1) as f64 / w as f64;
    }
    let span = (config.epochs - w) as f64;
    let t = (epoch - w) as f64;
    config.lr0 * 0.5 * (1.0 + (std::f64::consts::PI * t / span).cos())
}

/// `v ← m·v + g + wd·p`, then `p ← p − lr·v`.
pub fn sgd_step<T: Scalar>(
    params: &mut [T],
    grads: &[T],
    velocity: &mut [T],
    lr: T,
    momentum: T,
    weight_decay: T,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != velocity.len() {
        return Err(invalid(format!(
            "sgd shapes differ: {} params, {} grads, {} velocity",
            params.len(),
            grads.len(),
            velocity.len()
        )));
    }
    for ((p, &g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        *v = momentum * *v + g + weight_decay * *p;
        *p -= lr * *v;
    }
    Ok(())
}

/// Predictions of a model over a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub metrics: Metrics,
    pub predictions: Vec<u8>,
    /// Softmax probability of class 1.
    pub positive_probs: Vec<f64>,
    /// Largest softmax probability per sample.
    pub confidences: Vec<f64>,
    pub circuit: ForwardStats<f64>,
}

impl Evaluation {
    pub fn correct(&self, labels: &[u8]) -> Vec<bool> {
        self.predictions.iter().zip(labels).map(|(p, y)| p == y).collect()
    }
}

pub fn evaluate<T: Scalar>(model: &VitModel<T>, data: &ImageDataset<T>, mode: ScoreMode<T>) -> Result<Evaluation> {
    if data.is_empty() {
        return Err(invalid("cannot evaluate on an empty dataset"));
    }
    if model.config().num_classes != 2 {
        return Err(invalid("evaluation metrics assume two classes"));
    }
    let (logits, stats) = model.predict_batch(&data.images, mode)?;
    let mut loss = 0.0;
    let (mut predictions, mut positive_probs, mut confidences) = (Vec::new(), Vec::new(), Vec::new());
    for (z, &y) in logits.iter().zip(&data.labels) {
        loss += cross_entropy(z, y as usize)?.as_f64();
        let p = softmax(z);
        let p1 = p[1].as_f64();
        // Ties go to class 0.
        predictions.push(u8::from(z[1] > z[0]));
        positive_probs.push(p1);
        confidences.push(p1.max(1.0 - p1));
    }
    let metrics = compute_metrics(&data.labels, &predictions, &positive_probs)?;
    Ok(Evaluation {
        loss: loss / data.len() as f64,
        metrics,
        predictions,
        positive_probs,
        confidences,
        circuit: ForwardStats {
            pairs: stats.pairs,
            clean_sum: stats.clean_sum.as_f64(),
            scored_sum: stats.scored_sum.as_f64(),
            abs_shift_sum: stats.abs_shift_sum.as_f64(),
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub valid_loss: f64,
    pub valid: Metrics,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_valid_accuracy: f64,
    /// Model at the epoch with the highest validation accuracy.
    pub best: VitModel<T>,
    pub stopped_early: bool,
}

impl<T> TrainOutcome<T> {
    pub fn best_record(&self) -> &EpochRecord {
        &self.history[self.best_epoch]
    }
}

/// Minibatch SGD over shuffled epochs. Stops once validation accuracy has
/// not strictly improved for `patience` epochs.
pub fn train_loop<T: Scalar>(
    mut model: VitModel<T>,
    train: &ImageDataset<T>,
    valid: &ImageDataset<T>,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome<T>> {
    config.validate()?;
    if train.is_empty() || valid.is_empty() {
        return Err(invalid("training needs non-empty train and validation splits"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut velocity = vec![T::zero(); model.param_count()];
    let mut order: Vec<usize> = (0..train.len()).collect();
    let labels = train.labels_usize();
    let mut history = Vec::new();
    let (mut best, mut best_epoch, mut best_acc, mut stale) = (model.clone(), 0, f64::NEG_INFINITY, 0);
    let mut stopped_early = false;

    for epoch in 0..config.epochs {
        let lr = lr_schedule(epoch, config);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let images: Vec<&[T]> = batch.iter().map(|&i| train.images[i].as_slice()).collect();
            let ys: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let (loss, grad) = model.batch_gradient(&images, &ys)?;
            loss_sum += loss.as_f64() * batch.len() as f64;
            sgd_step(
                model.params_mut(),
                &grad,
                &mut velocity,
                T::lit(lr),
                T::lit(config.momentum),
                T::lit(config.weight_decay),
            )?;
        }
        if model.params().iter().any(|p| !p.is_finite()) {
            return Err(invalid(format!("parameters diverged at epoch {epoch}; lower lr0")));
        }
        let eval = evaluate(&model, valid, ScoreMode::Exact)?;
        let record = EpochRecord {
            epoch,
            lr,
            train_loss: loss_sum / train.len() as f64,
            valid_loss: eval.loss,
            valid: eval.metrics,
        };
        on_epoch(&record);
        history.push(record);
        if eval.metrics.accuracy > best_acc {
            (best, best_epoch, best_acc, stale) = (model.clone(), epoch, eval.metrics.accuracy, 0);
        } else {
            stale += 1;
            if stale >= config.patience {
                stopped_early = true;
                break;
            }
        }
    }
    Ok(TrainOutcome { history, best_epoch, best_valid_accuracy: best_acc, best, stopped_early })
}
