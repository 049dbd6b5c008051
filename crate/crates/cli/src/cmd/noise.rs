use std::path::PathBuf;

use clap::Args;
use qpa_core::nn::{Checkpoint, ScoreMode, VitModel};
use qpa_core::quantum::NoiseChannel;
use qpa_core::train::evaluate;
use serde::Serialize;

use crate::config::{RunConfig, SCHEMA_VERSION};
use crate::{create_out_dir, parse_channel, usage, write_csv, Common, Log};

/// Largest accepted deviation of the bit-flip mean from its closed form.
pub const BIT_FLIP_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Args)]
pub struct NoiseArgs {
    #[command(flatten)]
    common: Common,
    /// Checkpoint written by `qpa train`. Its `run.toml` supplies the data
    /// configuration unless `--config` is given.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Seed of the validation split; defaults to the training seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_delimiter = ',', value_parser = parse_channel)]
    channels: Option<Vec<NoiseChannel>>,
    #[arg(long, value_delimiter = ',')]
    gammas: Option<Vec<f64>>,
}

#[derive(Debug, Serialize)]
pub struct NoiseRow {
    pub schema_version: u32,
    pub channel: NoiseChannel,
    pub gamma: f64,
    pub accuracy: f64,
    pub baseline_accuracy: f64,
    pub accuracy_delta: f64,
    pub mean_mu_clean: f64,
    pub mean_mu: f64,
    pub mean_mu_shift: f64,
    pub mean_abs_mu_shift: f64,
    /// `|mean μ − (μ̄(1−2γ)² + 2γ(1−γ))|`, bit flip only.
    pub bf_closed_form_error: Option<f64>,
}

pub fn run(args: NoiseArgs, log: Log) -> anyhow::Result<bool> {
    let config_path = args.common.config.clone().or_else(|| {
        let beside = args.checkpoint.with_file_name("run.toml");
        beside.exists().then_some(beside)
    });
    let mut cfg = RunConfig::load(config_path.as_deref())?;
    let ckpt = Checkpoint::load(&args.checkpoint).map_err(|e| usage(format!("{}: {e}", args.checkpoint.display())))?;
    if !ckpt.config.scorer.is_quantum() {
        return Err(usage(format!("noise sweeps need a circuit-scored checkpoint, got `{}`", ckpt.config.scorer)));
    }
    cfg.model = ckpt.config;
    if let Some(c) = args.channels {
        cfg.noise.channels = c;
    }
    if let Some(g) = args.gammas {
        cfg.noise.gammas = g;
    }
    cfg.validate()?;
    let model = VitModel::<f64>::from_checkpoint(&ckpt).map_err(|e| usage(e.to_string()))?;
    let data = cfg.dataset()?;
    let (_, valid) = cfg.splits(&data, args.seed.unwrap_or(cfg.train.seed))?;
    if valid.is_empty() {
        return Err(usage("the validation split is empty"));
    }

    // Every channel is the identity at γ = 0.
    let baseline = evaluate(&model, &valid, ScoreMode::Noisy { channel: NoiseChannel::BitFlip, gamma: 0.0 })?;
    let base_acc = baseline.metrics.accuracy;
    let base_mu = baseline.circuit.mean_clean().unwrap_or(f64::NAN);
    log.info(format_args!(
        "baseline accuracy {base_acc:.4}, mean μ {base_mu:.6} over {} pairs",
        baseline.circuit.pairs
    ));

    let mut rows = Vec::new();
    let mut ok = true;
    for &channel in &cfg.noise.channels {
        for &gamma in &cfg.noise.gammas {
            let e = evaluate(&model, &valid, ScoreMode::Noisy { channel, gamma })?;
            let (clean, mu) = (e.circuit.mean_clean().unwrap_or(f64::NAN), e.circuit.mean_scored().unwrap_or(f64::NAN));
            let bf_err = (channel == NoiseChannel::BitFlip)
                .then(|| (mu - (clean * (1.0 - 2.0 * gamma).powi(2) + 2.0 * gamma * (1.0 - gamma))).abs());
            let row = NoiseRow {
                schema_version: SCHEMA_VERSION,
                channel,
                gamma,
                accuracy: e.metrics.accuracy,
                baseline_accuracy: base_acc,
                accuracy_delta: e.metrics.accuracy - base_acc,
                mean_mu_clean: clean,
                mean_mu: mu,
                mean_mu_shift: mu - clean,
                mean_abs_mu_shift: e.circuit.mean_abs_shift().unwrap_or(f64::NAN),
                bf_closed_form_error: bf_err,
            };
            if bf_err.is_some_and(|err| err.is_nan() || err > BIT_FLIP_TOLERANCE) {
                log.info(format_args!("FAIL bit flip at γ = {gamma}: closed-form error {:e}", bf_err.unwrap()));
                ok = false;
            }
            let exact = e.predictions == baseline.predictions && e.circuit.scored_sum == baseline.circuit.scored_sum;
            if (channel == NoiseChannel::PhaseFlip || gamma == 0.0) && !exact {
                log.info(format_args!("FAIL {channel} at γ = {gamma} changed the scores"));
                ok = false;
            }
            log.info(format_args!(
                "{channel} γ={gamma:.3}: accuracy {:.4} ({:+.4}), mean |Δμ| {:.3e}",
                row.accuracy, row.accuracy_delta, row.mean_abs_mu_shift
            ));
            rows.push(row);
        }
    }
    let out = &args.common.out_dir;
    create_out_dir(out)?;
    write_csv(&out.join("noise.csv"), &rows)?;
    log.info(format_args!("wrote {}", out.join("noise.csv").display()));
    Ok(ok)
}
