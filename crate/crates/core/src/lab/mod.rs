//! Numerical probes of the circuit's structure: encoding kernels, separability,
//! effective-rank analysis of score Jacobians, and witnesses for asymmetry and
//! non-monotonicity. [`claims`] bundles everything into a pass/fail report.

pub mod claims;
mod witness;

pub use claims::{run_claims, shot_study, Claim, ShotStats, VerifyReport, CLAIM_IDS, REPORT_SCHEMA_VERSION};
pub use witness::{asymmetry_witness, non_monotonicity_witness, AsymmetryWitness, NonMonotoneWitness};

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::linalg::{numerical_rank, singular_values};
use crate::qpa::{QpaCircuit, QpaParams, ScoreKernel};
use crate::tensor::Matrix;
use crate::Scalar;

/// Input displacement `(Δq, Δk) = (q₂ − q₁, k₂ − k₁)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelPoint<T> {
    pub delta_q: T,
    pub delta_k: T,
}

impl<T: Scalar> KernelPoint<T> {
    pub fn new(delta_q: T, delta_k: T) -> Self {
        Self { delta_q, delta_k }
    }

    pub fn between(x1: (T, T), x2: (T, T)) -> Self {
        Self::new(x2.0 - x1.0, x2.1 - x1.1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankReport<T> {
    /// Descending.
    pub singular_values: Vec<T>,
    /// Count of singular values above `tolerance · σ_max`.
    pub numerical_rank: usize,
    /// Relative threshold.
    pub tolerance: T,
}

impl<T: Scalar> RankReport<T> {
    pub fn of(matrix: &Matrix<T>, tolerance: T) -> Self {
        let singular_values = singular_values(matrix);
        let numerical_rank = numerical_rank(&singular_values, tolerance);
        Self { singular_values, numerical_rank, tolerance }
    }
}

/// Default relative rank threshold.
pub const RANK_TOLERANCE: f64 = 1e-8;

/// Fidelity of two three-step encodings:
/// `cos²(λ₁'Δq + λ₂'Δk) · cos²(λ₂'Δq + λ₁'Δk)` with `λ' = λ/2`.
pub fn kernel_enc3<T: Scalar>(x1: (T, T), x2: (T, T), params: &QpaParams<T>) -> T {
    kernel_enc3_at(params, KernelPoint::between(x1, x2))
}

pub fn kernel_enc3_at<T: Scalar>(params: &QpaParams<T>, p: KernelPoint<T>) -> T {
    let (a, b) = half_lambdas(params);
    let u = (a * p.delta_q + b * p.delta_k).cos();
    let v = (b * p.delta_q + a * p.delta_k).cos();
    u * u * v * v
}

/// Fidelity of two independent encodings with common scale `e`:
/// `cos²(eΔq/2) · cos²(eΔk/2)`.
pub fn kernel_enc1<T: Scalar>(x1: (T, T), x2: (T, T), e: T) -> T {
    kernel_enc1_at(e, KernelPoint::between(x1, x2))
}

pub fn kernel_enc1_at<T: Scalar>(e: T, p: KernelPoint<T>) -> T {
    let h = T::lit(0.5) * e;
    let u = (h * p.delta_q).cos();
    let v = (h * p.delta_k).cos();
    u * u * v * v
}

/// `|<ψ_enc(x1)|ψ_enc(x2)>|²` by simulation.
pub fn kernel_statevector<T: Scalar>(circuit: &QpaCircuit, x1: (T, T), x2: (T, T), params: &QpaParams<T>) -> Result<T> {
    let a = circuit.encoding_state(x1.0, x1.1, params)?;
    let b = circuit.encoding_state(x2.0, x2.1, params)?;
    Ok(a.inner(&b).norm_sqr())
}

fn half_lambdas<T: Scalar>(params: &QpaParams<T>) -> (T, T) {
    let (l1, l2) = params.lambdas();
    (T::lit(0.5) * l1, T::lit(0.5) * l2)
}

/// Step of the central-difference stencil for mixed partials.
pub const MIXED_PARTIAL_STEP: f64 = 1e-4;
/// Kernel values at or below this make `ln K` unusable.
pub const KERNEL_FLOOR: f64 = 1e-8;

/// Central-difference estimate of `∂² ln K / ∂Δq ∂Δk` for an arbitrary kernel.
pub fn mixed_partial_log<T: Scalar>(kernel: impl Fn(KernelPoint<T>) -> T, point: KernelPoint<T>) -> Result<T> {
    let h = T::lit(MIXED_PARTIAL_STEP);
    let mut acc = T::zero();
    for (sq, sk, sign) in [(1.0, 1.0, 1.0), (1.0, -1.0, -1.0), (-1.0, 1.0, -1.0), (-1.0, -1.0, 1.0)] {
        let at = KernelPoint::new(point.delta_q + T::lit(sq) * h, point.delta_k + T::lit(sk) * h);
        let value = kernel(at);
        if !(value > T::lit(KERNEL_FLOOR)) {
            return Err(Error::NearSingular(format!("kernel {value} at ({}, {})", at.delta_q, at.delta_k)));
        }
        acc += T::lit(sign) * value.ln();
    }
    Ok(acc / (T::lit(4.0) * h * h))
}

/// Numerical mixed log-partial of the three-step encoding kernel.
pub fn mixed_partial_log_kernel<T: Scalar>(params: &QpaParams<T>, point: KernelPoint<T>) -> Result<T> {
    mixed_partial_log(|p| kernel_enc3_at(params, p), point)
}

/// `−2 λ₁'λ₂' [sec²(λ₁'Δq + λ₂'Δk) + sec²(λ₂'Δq + λ₁'Δk)]`.
pub fn mixed_partial_log_kernel_analytic<T: Scalar>(params: &QpaParams<T>, point: KernelPoint<T>) -> T {
    let (a, b) = half_lambdas(params);
    let u = (a * point.delta_q + b * point.delta_k).cos();
    let v = (b * point.delta_q + a * point.delta_k).cos();
    -T::lit(2.0) * a * b * (T::one() / (u * u) + T::one() / (v * v))
}

/// `∂(ωd, ωs)/∂(θs, γd, γs)`; independent of the parameters.
pub fn encoding_jacobian<T: Scalar>() -> Matrix<T> {
    let (o, t, z) = (T::one(), T::lit(2.0), T::zero());
    Matrix::from_rows(&[vec![o, t, z], vec![o, z, t]]).expect("fixed shape")
}

pub fn encoding_jacobian_rank<T: Scalar>(_params: &QpaParams<T>) -> RankReport<T> {
    RankReport::of(&encoding_jacobian(), T::lit(RANK_TOLERANCE))
}

/// Determinant of the leading 2×2 block of [`encoding_jacobian`].
pub fn encoding_jacobian_minor<T: Scalar>() -> T {
    let j = encoding_jacobian::<T>();
    j[(0, 0)] * j[(1, 1)] - j[(0, 1)] * j[(1, 0)]
}

/// `n × n` uniform grid over `[−half_width, half_width]²`.
pub fn uniform_grid<T: Scalar>(n: usize, half_width: T) -> Vec<(T, T)> {
    let step = |i: usize| {
        if n == 1 {
            T::zero()
        } else {
            -half_width + T::lit(2.0) * half_width * T::from_usize_lossy(i) / T::from_usize_lossy(n - 1)
        }
    };
    (0..n).flat_map(|i| (0..n).map(move |j| (step(i), step(j)))).collect()
}

/// The 5×5 probe grid over `[−1.5, 1.5]²`.
pub fn default_grid<T: Scalar>() -> Vec<(T, T)> {
    uniform_grid(5, T::lit(1.5))
}

fn check_grid<T: Scalar>(grid: &[(T, T)]) -> Result<()> {
    if grid.len() < QpaParams::<T>::COUNT {
        return Err(invalid(format!("probe grid needs at least 5 points, got {}", grid.len())));
    }
    if grid.iter().all(|p| *p == grid[0]) {
        return Err(invalid("probe grid is degenerate: all points coincide"));
    }
    if grid.iter().any(|(q, k)| !q.is_finite() || !k.is_finite()) {
        return Err(invalid("probe grid contains non-finite points"));
    }
    Ok(())
}

/// `|grid| × 5` Jacobian of `μ` with respect to `(θs, γd, γs, α, β)`.
pub fn score_jacobian<T: Scalar>(circuit: QpaCircuit, params: &QpaParams<T>, grid: &[(T, T)]) -> Matrix<T> {
    let kernel = ScoreKernel::new(circuit, *params);
    let rows: Vec<Vec<T>> = grid.iter().map(|&(q, k)| kernel.gradient(q, k).d_params.to_array().to_vec()).collect();
    Matrix::from_rows(&rows).expect("uniform row length")
}

/// Numerical rank of the full score Jacobian over `grid`.
pub fn full_circuit_rank<T: Scalar>(
    circuit: QpaCircuit,
    params: &QpaParams<T>,
    grid: &[(T, T)],
    tolerance: T,
) -> Result<RankReport<T>> {
    check_grid(grid)?;
    Ok(RankReport::of(&score_jacobian(circuit, params, grid), tolerance))
}

/// Rank on the `α = β = 0` slice, Jacobian restricted to `(θs, γd, γs)`.
pub fn encoding_slice_rank<T: Scalar>(
    circuit: QpaCircuit,
    params: &QpaParams<T>,
    grid: &[(T, T)],
    tolerance: T,
) -> Result<RankReport<T>> {
    check_grid(grid)?;
    let slice = QpaParams { alpha: T::zero(), beta: T::zero(), ..*params };
    Ok(RankReport::of(&score_jacobian(circuit, &slice, grid).columns(0, 3), tolerance))
}
