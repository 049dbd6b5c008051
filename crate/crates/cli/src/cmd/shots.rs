use clap::Args;
use qpa_core::lab::shot_study;
use qpa_core::qpa::QpaCircuit;
use serde::Serialize;

use crate::config::{RunConfig, SCHEMA_VERSION};
use crate::{create_out_dir, usage, write_csv, Common, Log};

/// Allowed excess of the empirical spread over `1/(2√S)`.
pub const BOUND_SLACK: f64 = 1.1;

#[derive(Debug, Args)]
pub struct ShotsArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated shot counts.
    #[arg(long, value_delimiter = ',')]
    shots: Option<Vec<u64>>,
    #[arg(long)]
    repetitions: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Serialize)]
pub struct ShotRow {
    pub schema_version: u32,
    pub shots: u64,
    pub repetitions: u64,
    pub exact_mu: f64,
    pub mean: f64,
    pub empirical_std: f64,
    /// `1/(2√S)`, the largest possible binomial standard deviation.
    pub bound: f64,
    pub within_bound: bool,
}

pub fn run(args: ShotsArgs, log: Log) -> anyhow::Result<bool> {
    let mut cfg = RunConfig::load(args.common.config.as_deref())?.shots;
    if let Some(s) = args.shots {
        cfg.shots = s;
    }
    if let Some(r) = args.repetitions {
        cfg.repetitions = r;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if cfg.shots.is_empty() || cfg.shots.contains(&0) {
        return Err(usage("shot counts must be positive"));
    }
    if cfg.repetitions < 2 {
        return Err(usage("at least two repetitions are needed for a standard deviation"));
    }
    let mut rows = Vec::new();
    for (i, &s) in cfg.shots.iter().enumerate() {
        let stats = shot_study(QpaCircuit::default(), s, cfg.repetitions, cfg.seed.wrapping_add(i as u64))?;
        let bound = 0.5 / (s as f64).sqrt();
        let row = ShotRow {
            schema_version: SCHEMA_VERSION,
            shots: s,
            repetitions: cfg.repetitions,
            exact_mu: stats.exact,
            mean: stats.mean,
            empirical_std: stats.std,
            bound,
            within_bound: stats.std <= BOUND_SLACK * bound,
        };
        log.info(format_args!(
            "S={s:>6}: std {:.5} (bound {bound:.5}) {}",
            row.empirical_std,
            if row.within_bound { "ok" } else { "EXCEEDS" }
        ));
        rows.push(row);
    }
    let out = &args.common.out_dir;
    create_out_dir(out)?;
    write_csv(&out.join("shots.csv"), &rows)?;
    Ok(rows.iter().all(|r| r.within_bound))
}
