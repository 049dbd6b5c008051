use clap::Args;
use qpa_core::attention::ScorerKind;

use crate::config::RunConfig;
use crate::experiment::run_one;
use crate::{create_out_dir, parse_scorer, write_json, write_jsonl, Common, Log, TrainOverrides};

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    overrides: TrainOverrides,
    #[arg(long, value_parser = parse_scorer)]
    scorer: Option<ScorerKind>,
    /// Seed for the split, initialisation and shuffling.
    #[arg(long)]
    seed: Option<u64>,
}

pub fn run(args: TrainArgs, log: Log) -> anyhow::Result<bool> {
    let mut cfg = RunConfig::load(args.common.config.as_deref())?;
    args.overrides.apply(&mut cfg);
    if let Some(s) = args.scorer {
        cfg.model.scorer = s;
    }
    if let Some(s) = args.seed {
        cfg.train.seed = s;
    }
    cfg.validate()?;
    let data = cfg.dataset()?;
    let (scorer, seed) = (cfg.model.scorer, cfg.train.seed);
    log.info(format_args!("training {scorer} with seed {seed} for up to {} epochs", cfg.train.epochs));
    let result = run_one(&cfg, &data, scorer, seed)?;

    let out = &args.common.out_dir;
    create_out_dir(out)?;
    write_jsonl(&out.join("history.jsonl"), &result.history_lines())?;
    write_json(&out.join("summary.json"), &result.summary)?;
    result.model.to_checkpoint().save(&out.join("checkpoint.json"))?;
    std::fs::write(out.join("run.toml"), cfg.to_toml()?)?;
    let s = &result.summary;
    log.info(format_args!(
        "best epoch {} of {}: accuracy {:.4}, f1 {:.4}, auc {}; wrote {}",
        s.best_epoch,
        s.epochs_run,
        s.valid.accuracy,
        s.valid.f1,
        s.valid.auc_roc.map_or("n/a".into(), |a| format!("{a:.4}")),
        out.display()
    ));
    Ok(true)
}
