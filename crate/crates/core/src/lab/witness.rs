use serde::Serialize;

use super::uniform_grid;
use crate::qpa::{QpaCircuit, QpaParams, ScoreKernel};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AsymmetryWitness<T> {
    pub q: T,
    pub k: T,
    /// `μ(q, k) − μ(k, q)`.
    pub gap: T,
}

/// Grid point with the largest `|μ(q,k) − μ(k,q)|` over an `n × n` grid on
/// `[−half_width, half_width]²`, if that gap exceeds `threshold`.
pub fn asymmetry_witness<T: Scalar>(
    circuit: QpaCircuit,
    params: &QpaParams<T>,
    n: usize,
    half_width: T,
    threshold: T,
) -> Option<AsymmetryWitness<T>> {
    let kernel = ScoreKernel::new(circuit, *params);
    uniform_grid(n, half_width)
        .into_iter()
        .map(|(q, k)| AsymmetryWitness { q, k, gap: kernel.score(q, k) - kernel.score(k, q) })
        .filter(|w| w.gap.abs() > threshold)
        .max_by(|a, b| a.gap.abs().partial_cmp(&b.gap.abs()).unwrap_or(std::cmp::Ordering::Equal))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NonMonotoneWitness<T> {
    pub q_min: T,
    pub mu_min: T,
    pub q_peak: T,
    pub mu_peak: T,
}

impl<T: Scalar> NonMonotoneWitness<T> {
    pub fn rise(&self) -> T {
        self.mu_peak - self.mu_min
    }
}

/// First strict local minimum of `q ↦ μ(q, 0)` on `samples` uniform points of
/// `[0, q_max]` whose subsequent maximum exceeds it by at least `min_rise`.
pub fn non_monotonicity_witness<T: Scalar>(
    circuit: QpaCircuit,
    params: &QpaParams<T>,
    q_max: T,
    samples: usize,
    min_rise: T,
) -> Option<NonMonotoneWitness<T>> {
    if samples < 3 {
        return None;
    }
    let kernel = ScoreKernel::new(circuit, *params);
    let qs: Vec<T> = (0..samples).map(|i| q_max * T::from_usize_lossy(i) / T::from_usize_lossy(samples - 1)).collect();
    let mu: Vec<T> = qs.iter().map(|&q| kernel.score(q, T::zero())).collect();
    (1..samples - 1).filter(|&i| mu[i - 1] > mu[i] && mu[i] < mu[i + 1]).find_map(|i| {
        let peak = (i + 1..samples).max_by(|&a, &b| mu[a].partial_cmp(&mu[b]).unwrap_or(std::cmp::Ordering::Equal))?;
        let w = NonMonotoneWitness { q_min: qs[i], mu_min: mu[i], q_peak: qs[peak], mu_peak: mu[peak] };
        (w.rise() >= min_rise).then_some(w)
    })
}
