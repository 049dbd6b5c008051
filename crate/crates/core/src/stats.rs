//! Classification metrics, paired significance tests and confidence strata.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    /// Zero when nothing is predicted positive.
    pub precision: f64,
    /// Zero when no label is positive.
    pub recall: f64,
    pub f1: f64,
    /// Absent when only one class is present.
    pub auc_roc: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn new(labels: &[u8], preds: &[u8]) -> Self {
        let mut c = Self::default();
        for (&y, &p) in labels.iter().zip(preds) {
            match (y, p) {
                (1, 1) => c.tp += 1,
                (0, 1) => c.fp += 1,
                (0, _) => c.tn += 1,
                _ => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Confusion-matrix metrics for binary labels plus ROC AUC of the
/// positive-class scores.
pub fn compute_metrics(labels: &[u8], preds: &[u8], scores: &[f64]) -> Result<Metrics> {
    if labels.len() != preds.len() || labels.len() != scores.len() {
        return Err(invalid(format!(
            "{} labels, {} predictions and {} scores must match",
            labels.len(),
            preds.len(),
            scores.len()
        )));
    }
    if labels.is_empty() {
        return Err(invalid("metrics need at least one sample"));
    }
    if let Some(v) = labels.iter().chain(preds).find(|&&v| v > 1) {
        return Err(invalid(format!("label {v} is not binary")));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(invalid("scores must be finite"));
    }
    let c = Confusion::new(labels, preds);
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
    Ok(Metrics { accuracy: ratio(c.tp + c.tn, c.total()), precision, recall, f1, auc_roc: auc_roc(labels, scores) })
}

/// Mann–Whitney estimate of ROC AUC; ties count one half.
pub fn auc_roc(labels: &[u8], scores: &[f64]) -> Option<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1..=j+1 share their mean.
        let avg = (i + j + 2) as f64 / 2.0;
        rank_sum += order[i..=j].iter().filter(|&&k| labels[k] == 1).count() as f64 * avg;
        i = j + 1;
    }
    let pos = labels.iter().filter(|&&y| y == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let (p, n) = (pos as f64, neg as f64);
    Some((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    /// Mean of `a − b`.
    pub mean_diff: f64,
    pub t_statistic: Option<f64>,
    /// `P(T ≥ t)`: evidence that `a` exceeds `b`.
    pub p_one_tail: Option<f64>,
    pub p_two_tail: Option<f64>,
    pub cohens_d: Option<f64>,
    pub ci95_low: f64,
    pub ci95_high: f64,
    pub n: usize,
    /// Differences have zero variance; the statistic is undefined.
    pub degenerate: bool,
}

/// Paired Student t-test on `a − b` with `n − 1` degrees of freedom.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTestResult> {
    if a.len() != b.len() {
        return Err(invalid(format!("paired samples differ in length: {} vs {}", a.len(), b.len())));
    }
    let n = a.len();
    if n < 2 {
        return Err(invalid("a paired t-test needs at least two pairs"));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(invalid("paired samples must be finite"));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let nf = n as f64;
    let mean = d.iter().sum::<f64>() / nf;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let sd = var.sqrt();
    // Rounding noise in identical inputs must not produce a huge t.
    let scale = d.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
    if sd <= 1e-14 * scale || sd == 0.0 {
        return Ok(TTestResult {
            mean_diff: mean,
            t_statistic: None,
            p_one_tail: None,
            p_two_tail: None,
            cohens_d: None,
            ci95_low: mean,
            ci95_high: mean,
            n,
            degenerate: true,
        });
    }
    let dist = StudentsT::new(0.0, 1.0, nf - 1.0).expect("positive degrees of freedom");
    let se = sd / nf.sqrt();
    let t = mean / se;
    let p_one = dist.sf(t);
    let p_two = (2.0 * p_one.min(1.0 - p_one)).min(1.0);
    let crit = dist.inverse_cdf(0.975);
    Ok(TTestResult {
        mean_diff: mean,
        t_statistic: Some(t),
        p_one_tail: Some(p_one),
        p_two_tail: Some(p_two),
        cohens_d: Some(mean / sd),
        ci95_low: mean - crit * se,
        ci95_high: mean + crit * se,
        n,
        degenerate: false,
    })
}

/// `***` for p ≤ 0.001, `**` for p ≤ 0.01, `*` for p ≤ 0.05, else `n.s.`.
pub fn significance_stars(p: f64) -> &'static str {
    match p {
        p if p <= 0.001 => "***",
        p if p <= 0.01 => "**",
        p if p <= 0.05 => "*",
        _ => "n.s.",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConfidenceLevel {
    Low,
    Medium,
    High,
}

impl ConfidenceLevel {
    pub const ALL: [Self; 3] = [Self::Low, Self::Medium, Self::High];

    /// `[0.5, 0.6)`, `[0.6, 0.9)` and `[0.9, 1.0]`.
    pub fn bounds(self) -> (f64, f64) {
        match self {
            Self::Low => (0.5, 0.6),
            Self::Medium => (0.6, 0.9),
            Self::High => (0.9, 1.0),
        }
    }

    pub fn of(p: f64) -> Self {
        if p >= 0.9 {
            Self::High
        } else if p >= 0.6 {
            Self::Medium
        } else {
            Self::Low
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stratum {
    pub level: ConfidenceLevel,
    pub count: usize,
    pub correct: usize,
    /// Absent for an empty stratum.
    pub accuracy: Option<f64>,
}

const PROB_SLACK: f64 = 1e-9;

/// Per-stratum accuracy of binary predictions keyed by their max-softmax
/// probability; strata are returned low, medium, high.
pub fn stratify_by_confidence(max_probs: &[f64], correct: &[bool]) -> Result<[Stratum; 3]> {
    if max_probs.len() != correct.len() {
        return Err(invalid(format!("{} probabilities but {} flags", max_probs.len(), correct.len())));
    }
    if let Some(p) = max_probs.iter().find(|p| !(0.5 - PROB_SLACK..=1.0 + PROB_SLACK).contains(*p)) {
        return Err(invalid(format!("max-softmax probability {p} lies outside [0.5, 1]")));
    }
    let mut out = ConfidenceLevel::ALL.map(|level| Stratum { level, count: 0, correct: 0, accuracy: None });
    for (&p, &ok) in max_probs.iter().zip(correct) {
        let s = &mut out[ConfidenceLevel::of(p) as usize];
        s.count += 1;
        s.correct += ok as usize;
    }
    for s in &mut out {
        s.accuracy = (s.count > 0).then(|| s.correct as f64 / s.count as f64);
    }
    Ok(out)
}

/// Mean and sample standard deviation; the deviation is zero for one value.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
