//! Attention scores, their aggregation, and hand-written backward passes.
//!
//! Pairwise scorers (the circuit, its independent-encoding ablation and the two
//! MLPs) act per head dimension: `A[i][j] = Σ_{d<D} f(Q[i][d], K[j][d])`. No
//! scaling is applied on that path. Dot and cosine scorers act on whole rows.
//! Linear attention bypasses the score matrix entirely.

mod mlp;

pub use mlp::{MlpScorer, MlpVariant};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::qpa::{CnotOrder, Encoding, QpaCircuit, QpaParams, ScoreKernel};
use crate::tensor::{dot, Matrix};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum ScorerKind {
    #[default]
    #[serde(rename = "qpa")]
    Qpa,
    #[serde(rename = "dot")]
    Dot,
    #[serde(rename = "mlp49")]
    Mlp49,
    #[serde(rename = "mlp585")]
    Mlp585,
    #[serde(rename = "cosine")]
    Cosine,
    #[serde(rename = "linear")]
    Linear,
    #[serde(rename = "qpa-ind")]
    QpaInd,
}

impl ScorerKind {
    pub const ALL: [ScorerKind; 7] =
        [Self::Qpa, Self::Dot, Self::Mlp49, Self::Mlp585, Self::Cosine, Self::Linear, Self::QpaInd];

    pub fn key(self) -> &'static str {
        match self {
            Self::Qpa => "qpa",
            Self::Dot => "dot",
            Self::Mlp49 => "mlp49",
            Self::Mlp585 => "mlp585",
            Self::Cosine => "cosine",
            Self::Linear => "linear",
            Self::QpaInd => "qpa-ind",
        }
    }

    /// Whether scores are summed over the first `D` head dimensions.
    pub fn uses_depth(self) -> bool {
        matches!(self, Self::Qpa | Self::QpaInd | Self::Mlp49 | Self::Mlp585)
    }

    pub fn is_quantum(self) -> bool {
        matches!(self, Self::Qpa | Self::QpaInd)
    }

    pub fn circuit(self) -> Option<QpaCircuit> {
        match self {
            Self::Qpa => Some(QpaCircuit::default()),
            Self::QpaInd => Some(QpaCircuit::new(Encoding::Independent, CnotOrder::QueryControlFirst)),
            _ => None,
        }
    }

    pub fn mlp_variant(self) -> Option<MlpVariant> {
        match self {
            Self::Mlp49 => Some(MlpVariant::Small),
            Self::Mlp585 => Some(MlpVariant::Large),
            _ => None,
        }
    }
}

impl fmt::Display for ScorerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for ScorerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|k| k.key() == s).ok_or_else(|| {
            let keys: Vec<_> = Self::ALL.iter().map(|k| k.key()).collect();
            invalid(format!("unknown scorer `{s}`; expected one of {}", keys.join(", ")))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttentionConfig {
    pub heads: usize,
    pub head_dim: usize,
    /// Number of leading head dimensions summed by pairwise scorers.
    pub depth: usize,
    pub scorer: ScorerKind,
}

impl AttentionConfig {
    pub fn hidden_size(&self) -> usize {
        self.heads * self.head_dim
    }

    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || self.head_dim == 0 || self.depth == 0 {
            return Err(invalid("heads, head_dim and depth must be positive"));
        }
        if self.depth > self.head_dim {
            return Err(invalid(format!(
                "aggregation depth D = {} exceeds head dimension {}",
                self.depth, self.head_dim
            )));
        }
        Ok(())
    }
}

/// A scalar score `f(q, k)` with trainable parameters.
pub trait PairScorer<T: Scalar>: Sync {
    fn num_params(&self) -> usize;

    fn score(&self, q: T, k: T) -> T;

    /// Adds `weight · ∂f/∂θ` into `param_grad` and returns
    /// `(weight · ∂f/∂q, weight · ∂f/∂k)`.
    fn accumulate(&self, q: T, k: T, weight: T, param_grad: &mut [T]) -> (T, T);
}

impl<T: Scalar> PairScorer<T> for ScoreKernel<T> {
    fn num_params(&self) -> usize {
        QpaParams::<T>::COUNT
    }

    #[inline]
    fn score(&self, q: T, k: T) -> T {
        ScoreKernel::score(self, q, k)
    }

    fn accumulate(&self, q: T, k: T, weight: T, param_grad: &mut [T]) -> (T, T) {
        let g = self.gradient(q, k);
        for (acc, d) in param_grad.iter_mut().zip(g.d_params.to_array()) {
            *acc += weight * d;
        }
        (weight * g.d_q, weight * g.d_k)
    }
}

fn check_pair<T: Scalar>(q: &Matrix<T>, k: &Matrix<T>, depth: usize) -> Result<()> {
    if q.cols() != k.cols() {
        return Err(invalid(format!("query width {} differs from key width {}", q.cols(), k.cols())));
    }
    if depth == 0 || depth > q.cols() {
        return Err(invalid(format!("aggregation depth D = {depth} must lie in 1..={}", q.cols())));
    }
    Ok(())
}

/// `A[i][j] = Σ_{d<depth} f(Q[i][d], K[j][d])`.
pub fn elementwise_scores<T: Scalar>(
    q: &Matrix<T>,
    k: &Matrix<T>,
    depth: usize,
    f: impl Fn(T, T) -> T,
) -> Result<Matrix<T>> {
    check_pair(q, k, depth)?;
    Ok(Matrix::from_fn(q.rows(), k.rows(), |i, j| {
        let (qi, kj) = (q.row(i), k.row(j));
        (0..depth).map(|d| f(qi[d], kj[d])).sum()
    }))
}

pub fn pairwise_scores<T: Scalar, S: PairScorer<T>>(
    q: &Matrix<T>,
    k: &Matrix<T>,
    scorer: &S,
    depth: usize,
) -> Result<Matrix<T>> {
    elementwise_scores(q, k, depth, |a, b| scorer.score(a, b))
}

/// Gradients of `Σ d_scores ⊙ A` with respect to `Q`, `K` and the scorer parameters.
pub fn pairwise_backward<T: Scalar, S: PairScorer<T>>(
    q: &Matrix<T>,
    k: &Matrix<T>,
    scorer: &S,
    depth: usize,
    d_scores: &Matrix<T>,
) -> Result<(Matrix<T>, Matrix<T>, Vec<T>)> {
    check_pair(q, k, depth)?;
    let mut dq = Matrix::zeros(q.rows(), q.cols());
    let mut dk = Matrix::zeros(k.rows(), k.cols());
    let mut dp = vec![T::zero(); scorer.num_params()];
    for i in 0..q.rows() {
        for j in 0..k.rows() {
            let w = d_scores[(i, j)];
            if w == T::zero() {
                continue;
            }
            for d in 0..depth {
                let (gq, gk) = scorer.accumulate(q[(i, d)], k[(j, d)], w, &mut dp);
                dq[(i, d)] += gq;
                dk[(j, d)] += gk;
            }
        }
    }
    Ok((dq, dk, dp))
}

/// Circuit scores summed over the first `depth` dimensions; entries lie in `[0, depth]`.
pub fn qpa_scores<T: Scalar>(q: &Matrix<T>, k: &Matrix<T>, params: &QpaParams<T>, depth: usize) -> Result<Matrix<T>> {
    pairwise_scores(q, k, &ScoreKernel::new(QpaCircuit::default(), *params), depth)
}

/// As [`qpa_scores`] with the encoding `RY(π/4 + θs q) ⊗ RY(π/4 + θs k)`.
pub fn qpsan_ind_scores<T: Scalar>(
    q: &Matrix<T>,
    k: &Matrix<T>,
    params: &QpaParams<T>,
    depth: usize,
) -> Result<Matrix<T>> {
    let circuit = ScorerKind::QpaInd.circuit().expect("quantum scorer");
    pairwise_scores(q, k, &ScoreKernel::new(circuit, *params), depth)
}

pub fn mlp_score<T: Scalar>(q: T, k: T, params: &MlpScorer<T>) -> T {
    params.score(q, k)
}

/// `A = Q Kᵀ / √d_h`.
pub fn dot_scores<T: Scalar>(q: &Matrix<T>, k: &Matrix<T>) -> Result<Matrix<T>> {
    check_pair(q, k, q.cols().max(1))?;
    let scale = T::one() / T::from_usize_lossy(q.cols()).sqrt();
    Ok(q.matmul_t(k).map(|x| x * scale))
}

pub fn dot_backward<T: Scalar>(q: &Matrix<T>, k: &Matrix<T>, d_scores: &Matrix<T>) -> (Matrix<T>, Matrix<T>) {
    let scale = T::one() / T::from_usize_lossy(q.cols()).sqrt();
    (d_scores.matmul(k).map(|x| x * scale), d_scores.t_matmul(q).map(|x| x * scale))
}

/// Added to row norms in the cosine scorer.
pub const COSINE_EPS: f64 = 1e-12;
/// Upper bound on the cosine temperature.
pub const MAX_TEMPERATURE: f64 = 100.0;

fn unit_rows<T: Scalar>(m: &Matrix<T>) -> (Matrix<T>, Vec<T>) {
    let norms: Vec<T> = (0..m.rows()).map(|i| dot(m.row(i), m.row(i)).sqrt()).collect();
    let eps = T::lit(COSINE_EPS);
    (Matrix::from_fn(m.rows(), m.cols(), |i, j| m[(i, j)] / (norms[i] + eps)), norms)
}

/// `exp(min(log τ, log 100))`.
pub fn temperature_scale<T: Scalar>(log_tau: T) -> T {
    log_tau.min(T::lit(MAX_TEMPERATURE).ln()).exp()
}

/// Cosine similarity of rows times the capped temperature `tau`.
pub fn cosine_scores<T: Scalar>(q: &Matrix<T>, k: &Matrix<T>, tau: T) -> Result<Matrix<T>> {
    if !(tau > T::zero()) {
        return Err(invalid(format!("temperature must be positive, got {tau}")));
    }
    cosine_scores_log(q, k, tau.ln())
}

pub fn cosine_scores_log<T: Scalar>(q: &Matrix<T>, k: &Matrix<T>, log_tau: T) -> Result<Matrix<T>> {
    check_pair(q, k, q.cols().max(1))?;
    let s = temperature_scale(log_tau);
    let (qh, _) = unit_rows(q);
    let (kh, _) = unit_rows(k);
    Ok(qh.matmul_t(&kh).map(|x| x * s))
}

fn unit_rows_backward<T: Scalar>(m: &Matrix<T>, unit: &Matrix<T>, norms: &[T], d_unit: &Matrix<T>) -> Matrix<T> {
    let eps = T::lit(COSINE_EPS);
    let mut out = Matrix::zeros(m.rows(), m.cols());
    for i in 0..m.rows() {
        let denom = norms[i] + eps;
        let proj = if norms[i] > T::zero() { dot(unit.row(i), d_unit.row(i)) / norms[i] } else { T::zero() };
        for j in 0..m.cols() {
            out[(i, j)] = d_unit[(i, j)] / denom - m[(i, j)] * proj / denom;
        }
    }
    out
}

/// Gradients with respect to `Q`, `K` and `log τ`.
pub fn cosine_backward<T: Scalar>(
    q: &Matrix<T>,
    k: &Matrix<T>,
    log_tau: T,
    d_scores: &Matrix<T>,
) -> (Matrix<T>, Matrix<T>, T) {
    let s = temperature_scale(log_tau);
    let (qh, qn) = unit_rows(q);
    let (kh, kn) = unit_rows(k);
    let cos = qh.matmul_t(&kh);
    let d_log_tau = if log_tau < T::lit(MAX_TEMPERATURE).ln() {
        s * cos.as_slice().iter().zip(d_scores.as_slice()).map(|(&c, &g)| c * g).sum::<T>()
    } else {
        T::zero()
    };
    let d_cos = d_scores.map(|x| x * s);
    let dqh = d_cos.matmul(&kh);
    let dkh = d_cos.t_matmul(&qh);
    (unit_rows_backward(q, &qh, &qn, &dqh), unit_rows_backward(k, &kh, &kn, &dkh), d_log_tau)
}

/// Stabiliser in the linear-attention denominator.
pub const LINEAR_EPS: f64 = 1e-6;

#[inline]
fn elu_plus_one<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x + T::one()
    } else {
        x.exp()
    }
}

#[inline]
fn elu_plus_one_grad<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else {
        x.exp()
    }
}

/// `φ(Q)(φ(K)ᵀV) / (φ(Q)·Σⱼφ(kⱼ) + ε)` with `φ = elu + 1`, evaluated right to left.
pub fn linear_attention<T: Scalar>(q: &Matrix<T>, k: &Matrix<T>, v: &Matrix<T>) -> Result<Matrix<T>> {
    check_pair(q, k, q.cols().max(1))?;
    if k.rows() != v.rows() {
        return Err(invalid("keys and values differ in token count"));
    }
    let (pq, pk) = (q.map(elu_plus_one), k.map(elu_plus_one));
    let kv = pk.t_matmul(v);
    let ksum = pk.sum_rows();
    let mut out = pq.matmul(&kv);
    let eps = T::lit(LINEAR_EPS);
    for i in 0..out.rows() {
        let den = dot(pq.row(i), &ksum) + eps;
        out.row_mut(i).iter_mut().for_each(|x| *x /= den);
    }
    Ok(out)
}

/// Gradients with respect to `Q`, `K` and `V`.
pub fn linear_attention_backward<T: Scalar>(
    q: &Matrix<T>,
    k: &Matrix<T>,
    v: &Matrix<T>,
    d_out: &Matrix<T>,
) -> (Matrix<T>, Matrix<T>, Matrix<T>) {
    let (pq, pk) = (q.map(elu_plus_one), k.map(elu_plus_one));
    let kv = pk.t_matmul(v);
    let ksum = pk.sum_rows();
    let num = pq.matmul(&kv);
    let eps = T::lit(LINEAR_EPS);
    let (n, dk_w, dv_w) = (q.rows(), q.cols(), v.cols());

    let mut d_num = Matrix::zeros(n, dv_w);
    let mut d_den = vec![T::zero(); n];
    for i in 0..n {
        let den = dot(pq.row(i), &ksum) + eps;
        for c in 0..dv_w {
            d_num[(i, c)] = d_out[(i, c)] / den;
        }
        d_den[i] = -dot(d_out.row(i), num.row(i)) / (den * den);
    }
    // num = φQ · KV, den = φQ · ksum
    let mut d_pq = d_num.matmul_t(&kv);
    for i in 0..n {
        for c in 0..dk_w {
            d_pq[(i, c)] += d_den[i] * ksum[c];
        }
    }
    let d_kv = pq.t_matmul(&d_num);
    let mut d_ksum = vec![T::zero(); dk_w];
    for i in 0..n {
        for c in 0..dk_w {
            d_ksum[c] += d_den[i] * pq[(i, c)];
        }
    }
    let mut d_pk = v.matmul_t(&d_kv);
    for j in 0..k.rows() {
        for c in 0..dk_w {
            d_pk[(j, c)] += d_ksum[c];
        }
    }
    let dv = pk.matmul(&d_kv);
    let dq = Matrix::from_fn(n, dk_w, |i, c| d_pq[(i, c)] * elu_plus_one_grad(q[(i, c)]));
    let dk = Matrix::from_fn(k.rows(), dk_w, |j, c| d_pk[(j, c)] * elu_plus_one_grad(k[(j, c)]));
    (dq, dk, dv)
}

/// Row-wise softmax.
pub fn softmax_rows<T: Scalar>(a: &Matrix<T>) -> Matrix<T> {
    let mut out = a.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut total = T::zero();
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            total += *x;
        }
        row.iter_mut().for_each(|x| *x /= total);
    }
    out
}

/// `softmax(A) V`, softmax taken along each row.
pub fn softmax_weighted_sum<T: Scalar>(a: &Matrix<T>, v: &Matrix<T>) -> Result<Matrix<T>> {
    if a.cols() != v.rows() {
        return Err(invalid("score columns must match value rows"));
    }
    Ok(softmax_rows(a).matmul(v))
}

/// Given `P = softmax(A)`, returns `(dA, dV)` for `O = P V`.
pub fn softmax_weighted_sum_backward<T: Scalar>(
    p: &Matrix<T>,
    v: &Matrix<T>,
    d_out: &Matrix<T>,
) -> (Matrix<T>, Matrix<T>) {
    let dp = d_out.matmul_t(v);
    let dv = p.t_matmul(d_out);
    let mut da = Matrix::zeros(p.rows(), p.cols());
    for i in 0..p.rows() {
        let inner = dot(dp.row(i), p.row(i));
        for j in 0..p.cols() {
            da[(i, j)] = p[(i, j)] * (dp[(i, j)] - inner);
        }
    }
    (da, dv)
}
