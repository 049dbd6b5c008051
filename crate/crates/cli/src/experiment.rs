//! One training run: split, initialise, train, evaluate the best checkpoint.

use std::time::Instant;

use qpa_core::attention::ScorerKind;
use qpa_core::data::ImageDataset;
use qpa_core::nn::{ScoreMode, VitModel};
use qpa_core::stats::{stratify_by_confidence, Metrics, Stratum};
use qpa_core::train::{evaluate, train_loop, EpochRecord};
use serde::Serialize;

use crate::config::{RunConfig, SCHEMA_VERSION};

pub struct RunResult {
    pub scorer: ScorerKind,
    pub seed: u64,
    pub history: Vec<EpochRecord>,
    pub summary: RunSummary,
    pub model: VitModel<f64>,
    pub wall_seconds: f64,
}

/// Deterministic description of a finished run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub scorer: ScorerKind,
    pub seed: u64,
    pub param_count: usize,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub valid_loss: f64,
    pub valid: Metrics,
    pub strata: [Stratum; 3],
}

#[derive(Debug, Serialize)]
pub struct HistoryLine<'a> {
    pub schema_version: u32,
    pub scorer: ScorerKind,
    pub seed: u64,
    #[serde(flatten)]
    pub record: &'a EpochRecord,
}

impl RunResult {
    pub fn history_lines(&self) -> Vec<HistoryLine<'_>> {
        self.history
            .iter()
            .map(|record| HistoryLine { schema_version: SCHEMA_VERSION, scorer: self.scorer, seed: self.seed, record })
            .collect()
    }
}

/// Trains `scorer` with `seed` driving the split, initialisation and
/// shuffling. The configuration must already be validated.
pub fn run_one(cfg: &RunConfig, data: &ImageDataset<f64>, scorer: ScorerKind, seed: u64) -> anyhow::Result<RunResult> {
    let start = Instant::now();
    let (train, valid) = cfg.splits(data, seed)?;
    let vit = qpa_core::nn::VitConfig { scorer, ..cfg.model };
    let model = VitModel::new(vit, seed)?;
    let param_count = model.param_count();
    let tc = qpa_core::train::TrainConfig { seed, ..cfg.train };
    let outcome = train_loop(model, &train, &valid, &tc, |_| {})?;
    let eval = evaluate(&outcome.best, &valid, ScoreMode::Exact)?;
    let strata = stratify_by_confidence(&eval.confidences, &eval.correct(&valid.labels))?;
    let summary = RunSummary {
        schema_version: SCHEMA_VERSION,
        scorer,
        seed,
        param_count,
        epochs_run: outcome.history.len(),
        best_epoch: outcome.best_epoch,
        stopped_early: outcome.stopped_early,
        valid_loss: eval.loss,
        valid: eval.metrics,
        strata,
    };
    Ok(RunResult {
        scorer,
        seed,
        history: outcome.history,
        summary,
        model: outcome.best,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}
