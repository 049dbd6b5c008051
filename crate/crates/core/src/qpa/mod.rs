//! The two-qubit attention scoring circuit.
//!
//! For a scalar query component `q` and key component `k` the circuit prepares
//!
//! ```text
//! |ψ(q,k)> = [RX(2β) ⊗ RX(2β)] · CNOT(1→0) · [I ⊗ RY(α(q+k))] · CNOT(0→1) · [RY(φ0) ⊗ RY(φ1)] |00>
//! ```
//!
//! with `φ0 = π/4 + λ1 q + λ2 k`, `φ1 = π/4 + λ2 q + λ1 k`, `λ1 = θs + γd + γs` and
//! `λ2 = γs − γd`, and scores the pair by `μ = P(|00>) + P(|11>)`.
//!
//! Two evaluation routes exist. [`QpaCircuit::state`] and friends run the gates
//! through the generic complex simulator in [`crate::quantum`]; [`ScoreKernel`]
//! exploits the fact that the pre-mixer state is real and folds the mixer into a
//! fixed measurement observable, which is what attention layers use.

mod kernel;
mod params;

pub use kernel::{ScoreGradient, ScoreKernel};
pub use params::QpaParams;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::quantum::{rx, ry, DensityMatrix, NoiseChannel, QuantumState};
use crate::Scalar;

/// How query and key enter the first rotation layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Encoding {
    /// Initial, difference and sum rotations collapsed into one RY per qubit.
    #[default]
    ThreeStep,
    /// `RY(π/4 + θs q) ⊗ RY(π/4 + θs k)`; `γd` and `γs` are ignored.
    Independent,
}

/// Ordering of the two CNOTs around the entangling rotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum CnotOrder {
    /// `CNOT(0→1)` first, then `RY` on qubit 1, then `CNOT(1→0)`.
    #[default]
    QueryControlFirst,
    /// `CNOT(1→0)` first, then `RY` on qubit 1, then `CNOT(0→1)`.
    KeyControlFirst,
}

impl CnotOrder {
    /// `(control, target)` of the CNOT applied before and after the rotation.
    pub fn controls(self) -> [(usize, usize); 2] {
        match self {
            Self::QueryControlFirst => [(0, 1), (1, 0)],
            Self::KeyControlFirst => [(1, 0), (0, 1)],
        }
    }
}

/// Rotation angles of every parameterized gate, in circuit order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircuitAngles<T> {
    pub phi0: T,
    pub phi1: T,
    pub entangle: T,
    pub mix: T,
}

/// Structural configuration of the circuit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct QpaCircuit {
    pub encoding: Encoding,
    pub order: CnotOrder,
}

impl QpaCircuit {
    pub const fn new(encoding: Encoding, order: CnotOrder) -> Self {
        Self { encoding, order }
    }

    /// Equivalent single-layer encoding angles `(φ0, φ1)`.
    pub fn encoding_angles<T: Scalar>(&self, q: T, k: T, p: &QpaParams<T>) -> (T, T) {
        let offset = T::FRAC_PI_4();
        match self.encoding {
            Encoding::ThreeStep => {
                let (l1, l2) = p.lambdas();
                (offset + l1 * q + l2 * k, offset + l2 * q + l1 * k)
            }
            Encoding::Independent => (offset + p.theta_s * q, offset + p.theta_s * k),
        }
    }

    pub fn angles<T: Scalar>(&self, q: T, k: T, p: &QpaParams<T>) -> CircuitAngles<T> {
        let (phi0, phi1) = self.encoding_angles(q, k, p);
        CircuitAngles { phi0, phi1, entangle: p.alpha * (q + k), mix: T::lit(2.0) * p.beta }
    }

    /// Product state after the encoding layer only.
    pub fn encoding_state<T: Scalar>(&self, q: T, k: T, p: &QpaParams<T>) -> Result<QuantumState<T>> {
        let (phi0, phi1) = self.encoding_angles(q, k, p);
        QuantumState::zero().apply_single(&ry(phi0)?, 0)?.apply_single(&ry(phi1)?, 1)
    }

    /// Full statevector simulation of the circuit.
    pub fn state<T: Scalar>(&self, q: T, k: T, p: &QpaParams<T>) -> Result<QuantumState<T>> {
        let a = self.angles(q, k, p);
        let [(c1, t1), (c2, t2)] = self.order.controls();
        let mixer = rx(a.mix)?;
        self.encoding_state(q, k, p)?
            .apply_cnot(c1, t1)?
            .apply_single(&ry(a.entangle)?, 1)?
            .apply_cnot(c2, t2)?
            .apply_single(&mixer, 0)?
            .apply_single(&mixer, 1)
    }

    /// Same circuit evolved as a density operator.
    pub fn density<T: Scalar>(&self, q: T, k: T, p: &QpaParams<T>) -> Result<DensityMatrix<T>> {
        let a = self.angles(q, k, p);
        let [(c1, t1), (c2, t2)] = self.order.controls();
        let mixer = rx(a.mix)?;
        DensityMatrix::from_pure(&QuantumState::zero())
            .apply_single(&ry(a.phi0)?, 0)?
            .apply_single(&ry(a.phi1)?, 1)?
            .apply_cnot(c1, t1)?
            .apply_single(&ry(a.entangle)?, 1)?
            .apply_cnot(c2, t2)?
            .apply_single(&mixer, 0)?
            .apply_single(&mixer, 1)
    }

    pub fn score<T: Scalar>(&self, q: T, k: T, p: &QpaParams<T>) -> Result<T> {
        Ok(agreement(self.state(q, k, p)?.probabilities()))
    }

    /// Score with `channel` applied to each qubit right before measurement.
    pub fn score_noisy<T: Scalar>(&self, q: T, k: T, p: &QpaParams<T>, channel: NoiseChannel, gamma: T) -> Result<T> {
        let kraus = channel.kraus(gamma)?;
        let rho = self.density(q, k, p)?.apply_channel(&kraus, 0)?.apply_channel(&kraus, 1)?;
        Ok(agreement(rho.probabilities()))
    }

    /// Finite-shot estimate: the fraction of `shots` categorical draws from the
    /// measurement distribution that land in `|00>` or `|11>`.
    pub fn score_sampled<T: Scalar>(&self, q: T, k: T, p: &QpaParams<T>, shots: u64, seed: u64) -> Result<T> {
        if shots == 0 {
            return Err(invalid("shot count must be positive"));
        }
        let probs = self.state(q, k, p)?.probabilities().map(|x| x.as_f64());
        Ok(T::lit(sample_agreement(probs, shots, seed)))
    }
}

/// `P(|00>) + P(|11>)`.
#[inline]
pub fn agreement<T: Scalar>(probs: [T; 4]) -> T {
    probs[0] + probs[3]
}

pub(crate) fn sample_agreement(probs: [f64; 4], shots: u64, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c0 = probs[0];
    let c1 = c0 + probs[1];
    let c2 = c1 + probs[2];
    let mut hits = 0u64;
    for _ in 0..shots {
        let u: f64 = rng.random();
        if u < c0 || u >= c2 {
            hits += 1;
        }
    }
    hits as f64 / shots as f64
}

/// `(φ0, φ1)` for the default three-step encoding.
pub fn equivalent_angles<T: Scalar>(q: T, k: T, params: &QpaParams<T>) -> (T, T) {
    QpaCircuit::default().encoding_angles(q, k, params)
}

pub fn build_state<T: Scalar>(q: T, k: T, params: &QpaParams<T>) -> Result<QuantumState<T>> {
    QpaCircuit::default().state(q, k, params)
}

pub fn score<T: Scalar>(q: T, k: T, params: &QpaParams<T>) -> Result<T> {
    QpaCircuit::default().score(q, k, params)
}

/// Closed form of the encoding-only score:
/// `1/2 + 1/4 cos(ωd (q − k)) − 1/4 sin(ωs (q + k))`.
pub fn score_encoding_only<T: Scalar>(q: T, k: T, params: &QpaParams<T>) -> T {
    let (wd, ws) = params.frequencies();
    T::lit(0.5) + T::lit(0.25) * (wd * (q - k)).cos() - T::lit(0.25) * (ws * (q + k)).sin()
}

/// Exact gradient of the default circuit's score via the parameter-shift rule.
pub fn score_gradient<T: Scalar>(q: T, k: T, params: &QpaParams<T>) -> ScoreGradient<T> {
    ScoreKernel::new(QpaCircuit::default(), *params).gradient(q, k)
}

pub fn score_sampled<T: Scalar>(q: T, k: T, params: &QpaParams<T>, shots: u64, seed: u64) -> Result<T> {
    QpaCircuit::default().score_sampled(q, k, params, shots, seed)
}

pub fn score_noisy<T: Scalar>(q: T, k: T, params: &QpaParams<T>, channel: NoiseChannel, gamma: T) -> Result<T> {
    QpaCircuit::default().score_noisy(q, k, params, channel, gamma)
}
