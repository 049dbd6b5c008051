use std::collections::BTreeMap;

use anyhow::Context;
use clap::Args;
use qpa_core::attention::ScorerKind;
use qpa_core::stats::{mean_std, paired_t_test, significance_stars, Metrics};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{RunConfig, SCHEMA_VERSION};
use crate::experiment::{run_one, RunSummary};
use crate::{create_out_dir, parse_scorer, usage, write_csv, write_jsonl, Common, Log, TrainOverrides};

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    overrides: TrainOverrides,
    /// Comma-separated scorer kinds.
    #[arg(long, value_delimiter = ',', value_parser = parse_scorer)]
    scorers: Option<Vec<ScorerKind>>,
    /// Comma-separated seeds; each seed fixes one shared data split.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Concurrent training runs.
    #[arg(short, long)]
    jobs: Option<usize>,
}

/// One line of the comparison table: either a per-scorer summary or a
/// paired test between two scorers on validation accuracy.
#[derive(Debug, Default, Serialize)]
pub struct CompareRow {
    pub schema_version: u32,
    pub row_type: &'static str,
    pub model: String,
    pub baseline: Option<String>,
    pub n: usize,
    pub accuracy_mean: Option<f64>,
    pub accuracy_std: Option<f64>,
    pub precision_mean: Option<f64>,
    pub precision_std: Option<f64>,
    pub recall_mean: Option<f64>,
    pub recall_std: Option<f64>,
    pub f1_mean: Option<f64>,
    pub f1_std: Option<f64>,
    pub auc_mean: Option<f64>,
    pub auc_std: Option<f64>,
    pub metric: Option<&'static str>,
    pub mean_diff: Option<f64>,
    pub t_statistic: Option<f64>,
    pub p_one_tail: Option<f64>,
    pub p_two_tail: Option<f64>,
    pub cohens_d: Option<f64>,
    pub ci95_low: Option<f64>,
    pub ci95_high: Option<f64>,
    pub stars: Option<&'static str>,
    pub degenerate: Option<bool>,
}

#[derive(Debug, Serialize)]
struct Timing {
    schema_version: u32,
    scorer: ScorerKind,
    seed: u64,
    wall_seconds: f64,
    epochs_run: usize,
}

fn summary_row(model: ScorerKind, runs: &[&RunSummary]) -> CompareRow {
    let stat = |f: fn(&Metrics) -> Option<f64>| -> (Option<f64>, Option<f64>) {
        let v: Option<Vec<f64>> = runs.iter().map(|r| f(&r.valid)).collect();
        v.map(|v| mean_std(&v)).map_or((None, None), |(m, s)| (Some(m), Some(s)))
    };
    let (accuracy_mean, accuracy_std) = stat(|m| Some(m.accuracy));
    let (precision_mean, precision_std) = stat(|m| Some(m.precision));
    let (recall_mean, recall_std) = stat(|m| Some(m.recall));
    let (f1_mean, f1_std) = stat(|m| Some(m.f1));
    let (auc_mean, auc_std) = stat(|m| m.auc_roc);
    CompareRow {
        schema_version: SCHEMA_VERSION,
        row_type: "summary",
        model: model.key().into(),
        n: runs.len(),
        accuracy_mean,
        accuracy_std,
        precision_mean,
        precision_std,
        recall_mean,
        recall_std,
        f1_mean,
        f1_std,
        auc_mean,
        auc_std,
        ..CompareRow::default()
    }
}

fn ttest_row(model: ScorerKind, baseline: ScorerKind, a: &[f64], b: &[f64]) -> anyhow::Result<CompareRow> {
    let t = paired_t_test(a, b)?;
    Ok(CompareRow {
        schema_version: SCHEMA_VERSION,
        row_type: "ttest",
        model: model.key().into(),
        baseline: Some(baseline.key().into()),
        n: t.n,
        metric: Some("accuracy"),
        mean_diff: Some(t.mean_diff),
        t_statistic: t.t_statistic,
        p_one_tail: t.p_one_tail,
        p_two_tail: t.p_two_tail,
        cohens_d: t.cohens_d,
        ci95_low: Some(t.ci95_low),
        ci95_high: Some(t.ci95_high),
        stars: t.p_one_tail.map(significance_stars),
        degenerate: Some(t.degenerate),
        ..CompareRow::default()
    })
}

pub fn run(args: CompareArgs, log: Log) -> anyhow::Result<bool> {
    let mut cfg = RunConfig::load(args.common.config.as_deref())?;
    args.overrides.apply(&mut cfg);
    if let Some(s) = args.scorers {
        cfg.compare.scorers = s;
    }
    if let Some(s) = args.seeds {
        cfg.compare.seeds = s;
    }
    if args.jobs.is_some() {
        cfg.compare.jobs = args.jobs;
    }
    cfg.validate()?;
    let (scorers, seeds) = (cfg.compare.scorers.clone(), cfg.compare.seeds.clone());
    if seeds.len() < 2 {
        return Err(usage("compare needs at least two seeds for a paired t-test"));
    }
    if scorers.len() < 2 {
        return Err(usage("compare needs at least two scorers"));
    }
    for s in &scorers {
        qpa_core::nn::VitConfig { scorer: *s, ..cfg.model }.validate().map_err(|e| usage(e.to_string()))?;
    }
    let data = cfg.dataset()?;

    // A scorer listed twice is trained once.
    let mut unique = scorers.clone();
    unique.sort_by_key(|s| s.key());
    unique.dedup();
    let tasks: Vec<(ScorerKind, u64)> = unique.iter().flat_map(|&s| seeds.iter().map(move |&seed| (s, seed))).collect();
    let jobs = cfg.compare.jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    log.info(format_args!("{} training runs on {jobs} workers", tasks.len()));
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build().context("building worker pool")?;
    let results = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(scorer, seed)| {
                let r = run_one(&cfg, &data, scorer, seed)?;
                log.info(format_args!(
                    "{scorer} seed {seed}: accuracy {:.4} after {} epochs ({:.1}s)",
                    r.summary.valid.accuracy, r.summary.epochs_run, r.wall_seconds
                ));
                Ok(r)
            })
            .collect::<anyhow::Result<Vec<_>>>()
    })?;
    let by_key: BTreeMap<(&str, u64), &crate::experiment::RunResult> =
        results.iter().map(|r| ((r.scorer.key(), r.seed), r)).collect();
    let runs_of =
        |s: ScorerKind| -> Vec<&RunSummary> { seeds.iter().map(|&seed| &by_key[&(s.key(), seed)].summary).collect() };
    let accuracies = |s: ScorerKind| -> Vec<f64> { runs_of(s).iter().map(|r| r.valid.accuracy).collect() };

    let mut rows: Vec<CompareRow> = scorers.iter().map(|&s| summary_row(s, &runs_of(s))).collect();
    for (i, &a) in scorers.iter().enumerate() {
        for &b in &scorers[i + 1..] {
            rows.push(ttest_row(a, b, &accuracies(a), &accuracies(b))?);
        }
    }

    let out = &args.common.out_dir;
    create_out_dir(out)?;
    write_csv(&out.join("compare.csv"), &rows)?;
    let ordered: Vec<&RunSummary> = unique.iter().flat_map(|&s| runs_of(s)).collect();
    write_jsonl(&out.join("runs.jsonl"), &ordered)?;
    let history: Vec<_> = unique
        .iter()
        .flat_map(|&s| seeds.iter().map(move |&seed| (s, seed)))
        .flat_map(|(s, seed)| by_key[&(s.key(), seed)].history_lines())
        .collect();
    write_jsonl(&out.join("history.jsonl"), &history)?;
    let timings: Vec<Timing> = results
        .iter()
        .map(|r| Timing {
            schema_version: SCHEMA_VERSION,
            scorer: r.scorer,
            seed: r.seed,
            wall_seconds: r.wall_seconds,
            epochs_run: r.summary.epochs_run,
        })
        .collect();
    write_jsonl(&out.join("timings.jsonl"), &timings)?;

    for r in rows.iter().filter(|r| r.row_type == "ttest") {
        log.info(format_args!(
            "{} vs {}: mean diff {:+.4}, t {}, p(one) {}, {}",
            r.model,
            r.baseline.as_deref().unwrap_or(""),
            r.mean_diff.unwrap_or(0.0),
            r.t_statistic.map_or("undefined".into(), |t| format!("{t:.3}")),
            r.p_one_tail.map_or("undefined".into(), |p| format!("{p:.4}")),
            r.stars.unwrap_or("degenerate"),
        ));
    }
    log.info(format_args!("wrote {}", out.join("compare.csv").display()));
    Ok(true)
}
