//! A small Pre-Norm vision transformer with a pluggable attention scorer.
//!
//! All trainable scalars live in one flat buffer described by a [`Layout`];
//! gradients use the same layout, so optimizers, checkpoints and finite
//! difference checks work on plain slices.

mod forward;
mod layout;

pub use forward::{ForwardStats, ScoreMode, LN_EPS};
pub use layout::{Init, Layout, Slot};

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attention::{AttentionConfig, MlpScorer, ScorerKind};
use crate::error::{invalid, Error, Result};
use crate::qpa::QpaParams;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VitConfig {
    pub image_size: usize,
    pub channels: usize,
    pub patch_size: usize,
    pub num_layers: usize,
    pub heads: usize,
    pub hidden_size: usize,
    pub mlp_hidden: usize,
    pub num_classes: usize,
    pub scorer: ScorerKind,
    /// Aggregation depth `D` of pairwise scorers.
    pub depth: usize,
}

impl Default for VitConfig {
    fn default() -> Self {
        Self {
            image_size: 16,
            channels: 1,
            patch_size: 4,
            num_layers: 1,
            heads: 2,
            hidden_size: 32,
            mlp_hidden: 64,
            num_classes: 2,
            scorer: ScorerKind::Qpa,
            depth: 16,
        }
    }
}

impl VitConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("image_size", self.image_size),
            ("channels", self.channels),
            ("patch_size", self.patch_size),
            ("num_layers", self.num_layers),
            ("heads", self.heads),
            ("hidden_size", self.hidden_size),
            ("mlp_hidden", self.mlp_hidden),
            ("num_classes", self.num_classes),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(invalid(format!("{name} must be positive")));
        }
        if !self.image_size.is_multiple_of(self.patch_size) {
            return Err(invalid(format!(
                "image size {} is not divisible by patch size {}",
                self.image_size, self.patch_size
            )));
        }
        if !self.hidden_size.is_multiple_of(self.heads) {
            return Err(invalid(format!("hidden size {} is not divisible by {} heads", self.hidden_size, self.heads)));
        }
        if self.scorer.uses_depth() {
            self.attention().validate()?;
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_size / self.heads
    }

    pub fn num_patches(&self) -> usize {
        let side = self.image_size / self.patch_size;
        side * side
    }

    /// Patches plus the CLS token.
    pub fn num_tokens(&self) -> usize {
        self.num_patches() + 1
    }

    pub fn patch_dim(&self) -> usize {
        self.channels * self.patch_size * self.patch_size
    }

    pub fn image_len(&self) -> usize {
        self.channels * self.image_size * self.image_size
    }

    pub fn attention(&self) -> AttentionConfig {
        AttentionConfig { heads: self.heads, head_dim: self.head_dim(), depth: self.depth, scorer: self.scorer }
    }

    /// Trainable scalars of one layer's scorer.
    pub fn scorer_params(&self) -> usize {
        match self.scorer {
            ScorerKind::Qpa => QpaParams::<f64>::COUNT,
            ScorerKind::QpaInd => 3,
            ScorerKind::Mlp49 | ScorerKind::Mlp585 => self.scorer.mlp_variant().expect("mlp").param_count(),
            ScorerKind::Cosine => self.heads,
            ScorerKind::Dot | ScorerKind::Linear => 0,
        }
    }
}

/// Model weights plus the configuration that shapes them.
#[derive(Debug, Clone, PartialEq)]
pub struct VitModel<T> {
    config: VitConfig,
    layout: Layout,
    params: Vec<T>,
}

/// Initial cosine temperature.
pub const INITIAL_TEMPERATURE: f64 = 10.0;
const INIT_STD: f64 = 0.02;

fn truncated_normal<R: Rng + ?Sized>(rng: &mut R, std: f64) -> f64 {
    let n = Normal::new(0.0, std).expect("positive std");
    loop {
        let x: f64 = n.sample(rng);
        if x.abs() <= 2.0 * std {
            return x;
        }
    }
}

impl<T: Scalar> VitModel<T> {
    /// Freshly initialised model. Projections use a truncated normal
    /// (σ = 0.02, cut at 2σ); biases, LayerNorm offsets and the CLS token are
    /// zero; LayerNorm gains are one.
    pub fn new(config: VitConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![T::zero(); layout.total()];
        for (_, slot, init) in layout.tensors() {
            let dst = &mut params[slot.range()];
            match init {
                Init::Zeros => {}
                Init::Ones => dst.fill(T::one()),
                Init::TruncNormal => dst.iter_mut().for_each(|x| *x = T::lit(truncated_normal(&mut rng, INIT_STD))),
                Init::Scorer => init_scorer(&config, dst, &mut rng),
            }
        }
        Ok(Self { config, layout, params })
    }

    pub fn from_params(config: VitConfig, params: Vec<T>) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        if params.len() != layout.total() {
            return Err(invalid(format!("expected {} parameters, got {}", layout.total(), params.len())));
        }
        Ok(Self { config, layout, params })
    }

    pub fn config(&self) -> &VitConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Circuit parameters of `layer`, for the quantum scorers.
    pub fn qpa_params(&self, layer: usize) -> Option<QpaParams<T>> {
        let slot = self.layout.layers.get(layer)?.scorer;
        let s = &self.params[slot.range()];
        match self.config.scorer {
            ScorerKind::Qpa => Some(QpaParams::new(s[0], s[1], s[2], s[3], s[4])),
            ScorerKind::QpaInd => Some(QpaParams::new(s[0], T::zero(), T::zero(), s[1], s[2])),
            _ => None,
        }
    }

    /// Class logits for one image laid out channel-major.
    pub fn forward(&self, image: &[T]) -> Result<Vec<T>> {
        let w = forward::Weights::new(self)?;
        forward::forward(&w, image, ScoreMode::Exact, false, None).map(|(logits, _)| logits)
    }

    /// Logits with a noise channel acting on every circuit evaluation. Adds
    /// the clean and noisy circuit outputs of every scored pair to `stats`.
    pub fn forward_with_mode(
        &self,
        image: &[T],
        mode: ScoreMode<T>,
        stats: Option<&mut ForwardStats<T>>,
    ) -> Result<Vec<T>> {
        let w = forward::Weights::new(self)?;
        forward::forward(&w, image, mode, false, stats).map(|(logits, _)| logits)
    }

    /// Logits for a batch of images, evaluated in parallel.
    pub fn predict_batch(&self, images: &[Vec<T>], mode: ScoreMode<T>) -> Result<(Vec<Vec<T>>, ForwardStats<T>)> {
        let w = forward::Weights::new(self)?;
        let results: Vec<Result<(Vec<T>, ForwardStats<T>)>> = images
            .par_iter()
            .map(|img| {
                let mut stats = ForwardStats::default();
                forward::forward(&w, img, mode, false, Some(&mut stats)).map(|(l, _)| (l, stats))
            })
            .collect();
        let mut logits = Vec::with_capacity(images.len());
        let mut total = ForwardStats::default();
        for r in results {
            let (l, s) = r?;
            total.merge(&s);
            logits.push(l);
        }
        Ok((logits, total))
    }

    /// Cross-entropy loss and its gradient for one labelled image.
    pub fn backward(&self, image: &[T], label: usize) -> Result<(T, Vec<T>)> {
        let w = forward::Weights::new(self)?;
        forward::loss_and_grad(&w, image, label)
    }

    /// Mean loss and mean gradient over a batch. Per-sample gradients are
    /// computed in parallel and summed in input order.
    pub fn batch_gradient(&self, images: &[&[T]], labels: &[usize]) -> Result<(T, Vec<T>)> {
        if images.len() != labels.len() || images.is_empty() {
            return Err(invalid("batch must be non-empty with one label per image"));
        }
        let w = forward::Weights::new(self)?;
        let per_sample: Vec<Result<(T, Vec<T>)>> =
            images.par_iter().zip(labels.par_iter()).map(|(img, &y)| forward::loss_and_grad(&w, img, y)).collect();
        let mut grad = vec![T::zero(); self.params.len()];
        let mut loss = T::zero();
        for r in per_sample {
            let (l, g) = r?;
            loss += l;
            for (a, b) in grad.iter_mut().zip(&g) {
                *a += *b;
            }
        }
        let scale = T::one() / T::from_usize_lossy(images.len());
        grad.iter_mut().for_each(|g| *g *= scale);
        Ok((loss * scale, grad))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config: self.config,
            params: self.params.iter().map(|x| x.as_f64()).collect(),
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.format != CHECKPOINT_FORMAT || ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint {} v{} (expected {CHECKPOINT_FORMAT} v{CHECKPOINT_VERSION})",
                ckpt.format, ckpt.version
            )));
        }
        Self::from_params(ckpt.config, ckpt.params.iter().map(|&x| T::lit(x)).collect())
    }
}

fn init_scorer<T: Scalar>(config: &VitConfig, dst: &mut [T], rng: &mut ChaCha8Rng) {
    match config.scorer {
        ScorerKind::Qpa => dst.copy_from_slice(&QpaParams::<T>::init(rng).to_array()),
        ScorerKind::QpaInd => {
            let p = QpaParams::<T>::init(rng);
            dst.copy_from_slice(&[p.theta_s, p.alpha, p.beta]);
        }
        ScorerKind::Mlp49 | ScorerKind::Mlp585 => {
            let m = MlpScorer::<T>::init(config.scorer.mlp_variant().expect("mlp"), rng);
            dst.copy_from_slice(m.params());
        }
        ScorerKind::Cosine => dst.fill(T::lit(INITIAL_TEMPERATURE.ln())),
        ScorerKind::Dot | ScorerKind::Linear => {}
    }
}

pub const CHECKPOINT_FORMAT: &str = "qpa-vit";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Serialised model: configuration plus the flat parameter buffer in
/// [`Layout`] order, stored as `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: VitConfig,
    pub params: Vec<f64>,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }
}

/// Cross-entropy `logsumexp(z) − z[label]`.
pub fn cross_entropy<T: Scalar>(logits: &[T], label: usize) -> Result<T> {
    if label >= logits.len() {
        return Err(invalid(format!("label {label} out of range for {} classes", logits.len())));
    }
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<T>().ln();
    Ok(lse - logits[label])
}

pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exp: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: T = exp.iter().copied().sum();
    exp.into_iter().map(|e| e / total).collect()
}
