//! Forward pass with an optional tape, and the matching reverse pass.

use super::layout::{LayerSlots, Layout, Slot};
use super::{cross_entropy, softmax, VitConfig, VitModel};
use crate::attention::{
    cosine_backward, cosine_scores_log, dot_backward, dot_scores, elementwise_scores, linear_attention,
    linear_attention_backward, pairwise_backward, pairwise_scores, softmax_rows, softmax_weighted_sum_backward,
    MlpScorer, ScorerKind,
};
use crate::error::{invalid, Result};
use crate::qpa::{agreement, ScoreKernel};
use crate::quantum::NoiseChannel;
use crate::tensor::Matrix;
use crate::Scalar;

/// LayerNorm variance floor.
pub const LN_EPS: f64 = 1e-12;

/// How circuit scorers evaluate `μ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScoreMode<T> {
    Exact,
    /// Channel applied to both qubits before measurement, via the
    /// measurement-distribution route.
    Noisy {
        channel: NoiseChannel,
        gamma: T,
    },
}

/// Sums of circuit outputs over every scored `(q, k)` pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForwardStats<T> {
    pub pairs: u64,
    /// Noiseless `μ` at the visited inputs.
    pub clean_sum: T,
    /// `μ` as used by the forward pass.
    pub scored_sum: T,
    /// `Σ |μ_scored − μ_clean|`.
    pub abs_shift_sum: T,
}

impl<T: Scalar> Default for ForwardStats<T> {
    fn default() -> Self {
        Self { pairs: 0, clean_sum: T::zero(), scored_sum: T::zero(), abs_shift_sum: T::zero() }
    }
}

impl<T: Scalar> ForwardStats<T> {
    pub fn merge(&mut self, other: &Self) {
        self.pairs += other.pairs;
        self.clean_sum += other.clean_sum;
        self.scored_sum += other.scored_sum;
        self.abs_shift_sum += other.abs_shift_sum;
    }

    pub fn mean_clean(&self) -> Option<T> {
        (self.pairs > 0).then(|| self.clean_sum / T::lit(self.pairs as f64))
    }

    pub fn mean_scored(&self) -> Option<T> {
        (self.pairs > 0).then(|| self.scored_sum / T::lit(self.pairs as f64))
    }

    pub fn mean_abs_shift(&self) -> Option<T> {
        (self.pairs > 0).then(|| self.abs_shift_sum / T::lit(self.pairs as f64))
    }
}

enum ScorerWeights<T> {
    None,
    Kernel(ScoreKernel<T>),
    Mlp(MlpScorer<T>),
    LogTau(Vec<T>),
}

struct LayerWeights<T> {
    wq: Matrix<T>,
    wk: Matrix<T>,
    wv: Matrix<T>,
    wo: Matrix<T>,
    w1: Matrix<T>,
    w2: Matrix<T>,
    scorer: ScorerWeights<T>,
}

/// Matrices materialised once per step from the flat buffer.
pub(super) struct Weights<'a, T> {
    config: &'a VitConfig,
    layout: &'a Layout,
    layers_at: &'a [LayerSlots],
    params: &'a [T],
    patch_w: Matrix<T>,
    pos: Matrix<T>,
    head_w: Matrix<T>,
    layers: Vec<LayerWeights<T>>,
}

fn mat<T: Scalar>(params: &[T], s: Slot) -> Matrix<T> {
    Matrix::from_vec(s.rows, s.cols, params[s.range()].to_vec()).expect("slot shape")
}

impl<'a, T: Scalar> Weights<'a, T> {
    pub(super) fn new(model: &'a VitModel<T>) -> Result<Self> {
        let (c, lay, p) = (&model.config, &model.layout, &model.params[..]);
        let layers = lay
            .layers
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let scorer = match c.scorer {
                    ScorerKind::Qpa | ScorerKind::QpaInd => {
                        let params = model.qpa_params(i).expect("quantum scorer");
                        if !params.is_finite() {
                            return Err(invalid(format!("layer {i} circuit parameters are not finite")));
                        }
                        ScorerWeights::Kernel(ScoreKernel::new(c.scorer.circuit().expect("quantum"), params))
                    }
                    ScorerKind::Mlp49 | ScorerKind::Mlp585 => ScorerWeights::Mlp(MlpScorer::from_params(
                        c.scorer.mlp_variant().expect("mlp"),
                        p[l.scorer.range()].to_vec(),
                    )?),
                    ScorerKind::Cosine => ScorerWeights::LogTau(p[l.scorer.range()].to_vec()),
                    ScorerKind::Dot | ScorerKind::Linear => ScorerWeights::None,
                };
                Ok(LayerWeights {
                    wq: mat(p, l.wq),
                    wk: mat(p, l.wk),
                    wv: mat(p, l.wv),
                    wo: mat(p, l.wo),
                    w1: mat(p, l.w1),
                    w2: mat(p, l.w2),
                    scorer,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            config: c,
            layout: lay,
            layers_at: &lay.layers,
            params: p,
            patch_w: mat(p, lay.patch_w),
            pos: mat(p, lay.pos),
            head_w: mat(p, lay.head_w),
            layers,
        })
    }

    #[inline]
    fn vec(&self, s: Slot) -> &[T] {
        &self.params[s.range()]
    }
}

/// Non-overlapping patches of a channel-major image, one per row.
pub(super) fn patches<T: Scalar>(c: &VitConfig, image: &[T]) -> Result<Matrix<T>> {
    if image.len() != c.image_len() {
        return Err(invalid(format!("image has {} values, expected {}", image.len(), c.image_len())));
    }
    let (p, side, s) = (c.patch_size, c.image_size / c.patch_size, c.image_size);
    Ok(Matrix::from_fn(c.num_patches(), c.patch_dim(), |n, f| {
        let (pi, pj) = (n / side, n % side);
        let (ch, rem) = (f / (p * p), f % (p * p));
        let (dy, dx) = (rem / p, rem % p);
        image[ch * s * s + (pi * p + dy) * s + pj * p + dx]
    }))
}

struct LnCache<T> {
    xhat: Matrix<T>,
    inv_std: Vec<T>,
}

fn layer_norm<T: Scalar>(x: &Matrix<T>, gain: &[T], bias: &[T]) -> (Matrix<T>, LnCache<T>) {
    let n = T::from_usize_lossy(x.cols());
    let mut xhat = Matrix::zeros(x.rows(), x.cols());
    let mut inv_std = Vec::with_capacity(x.rows());
    for i in 0..x.rows() {
        let row = x.row(i);
        let mean = row.iter().copied().sum::<T>() / n;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
        let r = T::one() / (var + T::lit(LN_EPS)).sqrt();
        for (o, &v) in xhat.row_mut(i).iter_mut().zip(row) {
            *o = (v - mean) * r;
        }
        inv_std.push(r);
    }
    let y = Matrix::from_fn(x.rows(), x.cols(), |i, j| xhat[(i, j)] * gain[j] + bias[j]);
    (y, LnCache { xhat, inv_std })
}

/// Normalised rows before the affine map; exposed for tests.
#[cfg(test)]
pub(super) fn normalise<T: Scalar>(x: &Matrix<T>) -> Matrix<T> {
    let ones = vec![T::one(); x.cols()];
    let zeros = vec![T::zero(); x.cols()];
    layer_norm(x, &ones, &zeros).1.xhat
}

fn layer_norm_backward<T: Scalar>(c: &LnCache<T>, gain: &[T], dy: &Matrix<T>, dg: &mut [T], db: &mut [T]) -> Matrix<T> {
    let n = T::from_usize_lossy(dy.cols());
    let mut dx = Matrix::zeros(dy.rows(), dy.cols());
    for i in 0..dy.rows() {
        let (xh, g) = (c.xhat.row(i), dy.row(i));
        let mut sum = T::zero();
        let mut sum_x = T::zero();
        for j in 0..g.len() {
            dg[j] += g[j] * xh[j];
            db[j] += g[j];
            let d = g[j] * gain[j];
            sum += d;
            sum_x += d * xh[j];
        }
        let r = c.inv_std[i] / n;
        for j in 0..g.len() {
            dx[(i, j)] = r * (n * g[j] * gain[j] - sum - xh[j] * sum_x);
        }
    }
    dx
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // √(2/π)
const GELU_K: f64 = 0.044_715;

/// Tanh approximation of GELU.
#[inline]
pub(super) fn gelu<T: Scalar>(x: T) -> T {
    let u = T::lit(GELU_C) * (x + T::lit(GELU_K) * x * x * x);
    T::lit(0.5) * x * (T::one() + u.tanh())
}

#[inline]
pub(super) fn gelu_grad<T: Scalar>(x: T) -> T {
    let u = T::lit(GELU_C) * (x + T::lit(GELU_K) * x * x * x);
    let t = u.tanh();
    let du = T::lit(GELU_C) * (T::one() + T::lit(3.0 * GELU_K) * x * x);
    T::lit(0.5) * (T::one() + t) + T::lit(0.5) * x * (T::one() - t * t) * du
}

struct HeadTape<T> {
    q: Matrix<T>,
    k: Matrix<T>,
    v: Matrix<T>,
    probs: Option<Matrix<T>>,
}

struct LayerTape<T> {
    ln1: LnCache<T>,
    h1: Matrix<T>,
    heads: Vec<HeadTape<T>>,
    concat: Matrix<T>,
    ln2: LnCache<T>,
    h2: Matrix<T>,
    pre: Matrix<T>,
    act: Matrix<T>,
}

pub(super) struct Tape<T> {
    patches: Matrix<T>,
    layers: Vec<LayerTape<T>>,
    cls_out: Vec<T>,
}

fn affine<T: Scalar>(x: &Matrix<T>, w: &Matrix<T>, b: &[T]) -> Matrix<T> {
    let mut y = x.matmul(w);
    y.add_row(b);
    y
}

fn circuit_scores<T: Scalar>(
    kernel: &ScoreKernel<T>,
    q: &Matrix<T>,
    k: &Matrix<T>,
    depth: usize,
    mode: ScoreMode<T>,
    stats: Option<&mut ForwardStats<T>>,
) -> Result<Matrix<T>> {
    match (mode, stats) {
        (ScoreMode::Exact, None) => pairwise_scores(q, k, kernel, depth),
        (ScoreMode::Exact, Some(stats)) => {
            let a = pairwise_scores(q, k, kernel, depth)?;
            let total: T = a.as_slice().iter().copied().sum();
            stats.pairs += (q.rows() * k.rows() * depth) as u64;
            stats.clean_sum += total;
            stats.scored_sum += total;
            Ok(a)
        }
        (ScoreMode::Noisy { channel, gamma }, stats) => {
            NoiseChannel::check_strength(gamma)?;
            let cell = std::cell::RefCell::new(ForwardStats::<T>::default());
            let a = elementwise_scores(q, k, depth, |x, y| {
                let probs = kernel.probabilities(x, y);
                let p0 = channel.apply_to_probabilities(probs, gamma, 0).expect("strength checked");
                let noisy = agreement(channel.apply_to_probabilities(p0, gamma, 1).expect("strength checked"));
                let mut s = cell.borrow_mut();
                s.pairs += 1;
                let clean = agreement(probs);
                s.clean_sum += clean;
                s.scored_sum += noisy;
                s.abs_shift_sum += (noisy - clean).abs();
                noisy
            })?;
            if let Some(stats) = stats {
                stats.merge(&cell.into_inner());
            }
            Ok(a)
        }
    }
}

pub(super) fn forward<T: Scalar>(
    w: &Weights<'_, T>,
    image: &[T],
    mode: ScoreMode<T>,
    record: bool,
    mut stats: Option<&mut ForwardStats<T>>,
) -> Result<(Vec<T>, Option<Tape<T>>)> {
    let c = w.config;
    let (hidden, dh) = (c.hidden_size, c.head_dim());
    let patches = patches(c, image)?;
    let tokens = affine(&patches, &w.patch_w, w.vec(w.layout.patch_b));
    let mut x = Matrix::zeros(c.num_tokens(), hidden);
    x.row_mut(0).copy_from_slice(w.vec(w.layout.cls));
    for i in 0..tokens.rows() {
        x.row_mut(i + 1).copy_from_slice(tokens.row(i));
    }
    x.add_assign(&w.pos);

    let mut layer_tapes = Vec::new();
    for (lw, ls) in w.layers.iter().zip(w.layers_at) {
        let (h1, ln1) = layer_norm(&x, w.vec(ls.ln1_g), w.vec(ls.ln1_b));
        let q_all = affine(&h1, &lw.wq, w.vec(ls.bq));
        let k_all = affine(&h1, &lw.wk, w.vec(ls.bk));
        let v_all = affine(&h1, &lw.wv, w.vec(ls.bv));
        let mut concat = Matrix::zeros(x.rows(), hidden);
        let mut heads = Vec::new();
        for h in 0..c.heads {
            let (q, k, v) = (q_all.columns(h * dh, dh), k_all.columns(h * dh, dh), v_all.columns(h * dh, dh));
            let scores = match (&lw.scorer, c.scorer) {
                (_, ScorerKind::Linear) => None,
                (_, ScorerKind::Dot) => Some(dot_scores(&q, &k)?),
                (ScorerWeights::Kernel(kernel), _) => {
                    Some(circuit_scores(kernel, &q, &k, c.depth, mode, stats.as_deref_mut())?)
                }
                (ScorerWeights::Mlp(m), _) => Some(pairwise_scores(&q, &k, m, c.depth)?),
                (ScorerWeights::LogTau(t), _) => Some(cosine_scores_log(&q, &k, t[h])?),
                (ScorerWeights::None, kind) => unreachable!("{kind} scorer without weights"),
            };
            let (out, probs) = match scores {
                Some(a) => {
                    let p = softmax_rows(&a);
                    (p.matmul(&v), Some(p))
                }
                None => (linear_attention(&q, &k, &v)?, None),
            };
            concat.set_columns(h * dh, &out);
            if record {
                heads.push(HeadTape { q, k, v, probs });
            }
        }
        x.add_assign(&affine(&concat, &lw.wo, w.vec(ls.bo)));

        let (h2, ln2) = layer_norm(&x, w.vec(ls.ln2_g), w.vec(ls.ln2_b));
        let pre = affine(&h2, &lw.w1, w.vec(ls.b1));
        let act = pre.map(gelu);
        x.add_assign(&affine(&act, &lw.w2, w.vec(ls.b2)));
        if record {
            layer_tapes.push(LayerTape { ln1, h1, heads, concat, ln2, h2, pre, act });
        }
    }

    let cls_out = x.row(0).to_vec();
    let mut logits = w.vec(w.layout.head_b).to_vec();
    for (j, l) in logits.iter_mut().enumerate() {
        for (i, &xi) in cls_out.iter().enumerate() {
            *l += xi * w.head_w[(i, j)];
        }
    }
    let tape = record.then_some(Tape { patches, layers: layer_tapes, cls_out });
    Ok((logits, tape))
}

fn add_matrix<T: Scalar>(grad: &mut [T], slot: Slot, m: &Matrix<T>) {
    for (g, &v) in grad[slot.range()].iter_mut().zip(m.as_slice()) {
        *g += v;
    }
}

fn add_slice<T: Scalar>(grad: &mut [T], slot: Slot, v: &[T]) {
    for (g, &x) in grad[slot.range()].iter_mut().zip(v) {
        *g += x;
    }
}

pub(super) fn loss_and_grad<T: Scalar>(w: &Weights<'_, T>, image: &[T], label: usize) -> Result<(T, Vec<T>)> {
    let c = w.config;
    if label >= c.num_classes {
        return Err(invalid(format!("label {label} out of range for {} classes", c.num_classes)));
    }
    let (logits, tape) = forward(w, image, ScoreMode::Exact, true, None)?;
    let tape = tape.expect("recorded");
    let loss = cross_entropy(&logits, label)?;
    let mut grad = vec![T::zero(); w.layout.total()];
    let (hidden, dh) = (c.hidden_size, c.head_dim());

    let mut dlogits = softmax(&logits);
    dlogits[label] -= T::one();
    add_slice(&mut grad, w.layout.head_b, &dlogits);
    // Only the CLS row reaches the head.
    let mut dx = Matrix::zeros(c.num_tokens(), hidden);
    let head = w.layout.head_w.offset;
    for (i, &xi) in tape.cls_out.iter().enumerate() {
        let mut acc = T::zero();
        for (j, &g) in dlogits.iter().enumerate() {
            grad[head + i * c.num_classes + j] += xi * g;
            acc += w.head_w[(i, j)] * g;
        }
        dx[(0, i)] = acc;
    }

    for ((lw, ls), lt) in w.layers.iter().zip(w.layers_at).zip(&tape.layers).rev() {
        // x_out = x_mid + GELU(h2 W1 + b1) W2 + b2
        add_matrix(&mut grad, ls.w2, &lt.act.t_matmul(&dx));
        add_slice(&mut grad, ls.b2, &dx.sum_rows());
        let d_act = dx.matmul_t(&lw.w2);
        let d_pre = Matrix::from_fn(d_act.rows(), d_act.cols(), |i, j| d_act[(i, j)] * gelu_grad(lt.pre[(i, j)]));
        add_matrix(&mut grad, ls.w1, &lt.h2.t_matmul(&d_pre));
        add_slice(&mut grad, ls.b1, &d_pre.sum_rows());
        let dh2 = d_pre.matmul_t(&lw.w1);
        let (mut dg, mut db) = (vec![T::zero(); hidden], vec![T::zero(); hidden]);
        dx.add_assign(&layer_norm_backward(&lt.ln2, w.vec(ls.ln2_g), &dh2, &mut dg, &mut db));
        add_slice(&mut grad, ls.ln2_g, &dg);
        add_slice(&mut grad, ls.ln2_b, &db);

        // x_mid = x_in + concat Wo + bo
        add_matrix(&mut grad, ls.wo, &lt.concat.t_matmul(&dx));
        add_slice(&mut grad, ls.bo, &dx.sum_rows());
        let d_concat = dx.matmul_t(&lw.wo);
        let n = c.num_tokens();
        let (mut dq_all, mut dk_all, mut dv_all) =
            (Matrix::zeros(n, hidden), Matrix::zeros(n, hidden), Matrix::zeros(n, hidden));
        let mut d_scorer = vec![T::zero(); ls.scorer.len()];
        for (h, ht) in lt.heads.iter().enumerate() {
            let d_out = d_concat.columns(h * dh, dh);
            let (dq, dk, dv) = match &ht.probs {
                None => linear_attention_backward(&ht.q, &ht.k, &ht.v, &d_out),
                Some(p) => {
                    let (da, dv) = softmax_weighted_sum_backward(p, &ht.v, &d_out);
                    let (dq, dk) = match (&lw.scorer, c.scorer) {
                        (_, ScorerKind::Dot) => dot_backward(&ht.q, &ht.k, &da),
                        (ScorerWeights::Kernel(kernel), kind) => {
                            let (dq, dk, dp) = pairwise_backward(&ht.q, &ht.k, kernel, c.depth, &da)?;
                            if kind == ScorerKind::QpaInd {
                                // [θs, γd, γs, α, β] → [θs, α, β]
                                for (slot, idx) in [0usize, 3, 4].into_iter().enumerate() {
                                    d_scorer[slot] += dp[idx];
                                }
                            } else {
                                d_scorer.iter_mut().zip(&dp).for_each(|(a, &b)| *a += b);
                            }
                            (dq, dk)
                        }
                        (ScorerWeights::Mlp(m), _) => {
                            let (dq, dk, dp) = pairwise_backward(&ht.q, &ht.k, m, c.depth, &da)?;
                            d_scorer.iter_mut().zip(&dp).for_each(|(a, &b)| *a += b);
                            (dq, dk)
                        }
                        (ScorerWeights::LogTau(t), _) => {
                            let (dq, dk, dt) = cosine_backward(&ht.q, &ht.k, t[h], &da);
                            d_scorer[h] += dt;
                            (dq, dk)
                        }
                        (ScorerWeights::None, kind) => unreachable!("{kind} scorer without weights"),
                    };
                    (dq, dk, dv)
                }
            };
            dq_all.set_columns(h * dh, &dq);
            dk_all.set_columns(h * dh, &dk);
            dv_all.set_columns(h * dh, &dv);
        }
        add_slice(&mut grad, ls.scorer, &d_scorer);
        for (d, wslot, bslot) in [(&dq_all, ls.wq, ls.bq), (&dk_all, ls.wk, ls.bk), (&dv_all, ls.wv, ls.bv)] {
            add_matrix(&mut grad, wslot, &lt.h1.t_matmul(d));
            add_slice(&mut grad, bslot, &d.sum_rows());
        }
        let mut dh1 = dq_all.matmul_t(&lw.wq);
        dh1.add_assign(&dk_all.matmul_t(&lw.wk));
        dh1.add_assign(&dv_all.matmul_t(&lw.wv));
        let (mut dg, mut db) = (vec![T::zero(); hidden], vec![T::zero(); hidden]);
        dx.add_assign(&layer_norm_backward(&lt.ln1, w.vec(ls.ln1_g), &dh1, &mut dg, &mut db));
        add_slice(&mut grad, ls.ln1_g, &dg);
        add_slice(&mut grad, ls.ln1_b, &db);
    }

    // x0 = [cls; patches Wp + bp] + pos
    add_matrix(&mut grad, w.layout.pos, &dx);
    add_slice(&mut grad, w.layout.cls, dx.row(0));
    let d_tokens = Matrix::from_fn(c.num_patches(), hidden, |i, j| dx[(i + 1, j)]);
    add_matrix(&mut grad, w.layout.patch_w, &tape.patches.t_matmul(&d_tokens));
    add_slice(&mut grad, w.layout.patch_b, &d_tokens.sum_rows());
    Ok((loss, grad))
}
