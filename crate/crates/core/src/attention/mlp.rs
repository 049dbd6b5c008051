use rand::Rng;
use serde::{Deserialize, Serialize};

use super::PairScorer;
use crate::error::{invalid, Result};
use crate::Scalar;

/// Layer widths of the two classical pairwise scorers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MlpVariant {
    /// `4 → 8 → 1`: 49 scalars.
    Small,
    /// `4 → 64 → 4 → 1`: 585 scalars.
    Large,
}

impl MlpVariant {
    pub fn widths(self) -> &'static [usize] {
        match self {
            Self::Small => &[4, 8, 1],
            Self::Large => &[4, 64, 4, 1],
        }
    }

    pub fn param_count(self) -> usize {
        self.widths().windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

/// Pairwise MLP over the features `[q, k, q − k, q + k]` with tanh hidden
/// layers and a sigmoid output. Parameters are stored layer by layer as a
/// row-major weight matrix followed by its bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpScorer<T> {
    variant: MlpVariant,
    params: Vec<T>,
}

const MAX_WIDTH: usize = 64;

impl<T: Scalar> MlpScorer<T> {
    pub fn zeros(variant: MlpVariant) -> Self {
        Self { variant, params: vec![T::zero(); variant.param_count()] }
    }

    /// Weights and biases uniform in `±1/√fan_in`.
    pub fn init<R: Rng + ?Sized>(variant: MlpVariant, rng: &mut R) -> Self {
        let mut params = Vec::with_capacity(variant.param_count());
        for w in variant.widths().windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            params.extend((0..w[0] * w[1] + w[1]).map(|_| T::lit(rng.random_range(-bound..=bound))));
        }
        Self { variant, params }
    }

    pub fn from_params(variant: MlpVariant, params: Vec<T>) -> Result<Self> {
        if params.len() != variant.param_count() {
            return Err(invalid(format!(
                "{:?} scorer needs {} parameters, got {}",
                variant,
                variant.param_count(),
                params.len()
            )));
        }
        Ok(Self { variant, params })
    }

    pub fn variant(&self) -> MlpVariant {
        self.variant
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Activations of every layer; the last holds the pre-sigmoid logit.
    fn activations(&self, q: T, k: T) -> ([[T; MAX_WIDTH]; 4], T) {
        let widths = self.variant.widths();
        let mut acts = [[T::zero(); MAX_WIDTH]; 4];
        acts[0][..4].copy_from_slice(&[q, k, q - k, q + k]);
        let mut off = 0;
        let mut logit = T::zero();
        for l in 0..widths.len() - 1 {
            let (n_in, n_out) = (widths[l], widths[l + 1]);
            let (w, b) = self.params[off..off + n_in * n_out + n_out].split_at(n_in * n_out);
            let last = l + 2 == widths.len();
            for o in 0..n_out {
                let mut z = b[o];
                for i in 0..n_in {
                    z += w[o * n_in + i] * acts[l][i];
                }
                if last {
                    logit = z;
                } else {
                    acts[l + 1][o] = z.tanh();
                }
            }
            off += n_in * n_out + n_out;
        }
        (acts, logit)
    }
}

#[inline]
fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

impl<T: Scalar> PairScorer<T> for MlpScorer<T> {
    fn num_params(&self) -> usize {
        self.params.len()
    }

    fn score(&self, q: T, k: T) -> T {
        sigmoid(self.activations(q, k).1)
    }

    fn accumulate(&self, q: T, k: T, weight: T, param_grad: &mut [T]) -> (T, T) {
        let widths = self.variant.widths();
        let (acts, logit) = self.activations(q, k);
        let s = sigmoid(logit);
        let mut delta = [T::zero(); MAX_WIDTH];
        delta[0] = weight * s * (T::one() - s);

        let mut offsets = [0usize; 4];
        for l in 0..widths.len() - 1 {
            offsets[l + 1] = offsets[l] + widths[l] * widths[l + 1] + widths[l + 1];
        }
        for l in (0..widths.len() - 1).rev() {
            let (n_in, n_out) = (widths[l], widths[l + 1]);
            let off = offsets[l];
            let mut back = [T::zero(); MAX_WIDTH];
            for o in 0..n_out {
                let d = delta[o];
                param_grad[off + n_in * n_out + o] += d;
                for i in 0..n_in {
                    param_grad[off + o * n_in + i] += d * acts[l][i];
                    back[i] += d * self.params[off + o * n_in + i];
                }
            }
            if l > 0 {
                for i in 0..n_in {
                    let a = acts[l][i];
                    delta[i] = back[i] * (T::one() - a * a);
                }
            } else {
                delta[..4].copy_from_slice(&back[..4]);
            }
        }
        // Features are [q, k, q − k, q + k].
        (delta[0] + delta[2] + delta[3], delta[1] - delta[2] + delta[3])
    }
}
