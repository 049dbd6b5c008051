use num_complex::Complex;

use super::{agreement, CnotOrder, Encoding, QpaCircuit, QpaParams};
use crate::error::Result;
use crate::quantum::{kron, mat4_dagger, mat4_mul, rx, NoiseChannel};
use crate::Scalar;

/// Gradient of `μ(q, k)` with respect to the circuit parameters and both inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreGradient<T> {
    pub value: T,
    pub d_params: QpaParams<T>,
    pub d_q: T,
    pub d_k: T,
}

type Sym4<T> = [[T; 4]; 4];

/// Half-angle cosine/sine pair of an RY rotation.
#[derive(Clone, Copy)]
struct Half<T> {
    c: T,
    s: T,
}

impl<T: Scalar> Half<T> {
    #[inline]
    fn of(angle: T) -> Self {
        let (s, c) = (angle * T::lit(0.5)).sin_cos();
        Self { c, s }
    }

    /// Rotation angle shifted by `±π/2` (half-angle shifted by `±π/4`).
    #[inline]
    fn shifted(self, up: bool) -> Self {
        let r = T::FRAC_1_SQRT_2();
        if up {
            Self { c: (self.c - self.s) * r, s: (self.s + self.c) * r }
        } else {
            Self { c: (self.c + self.s) * r, s: (self.s - self.c) * r }
        }
    }
}

/// Fast evaluator for a fixed parameter set.
///
/// RY gates and CNOTs are real, so the state before the mixer is a real 4-vector
/// `ψ`. The mixer and the agreement projector fold into `M = Re(U† Π U)` and
/// `μ = ψᵀ M ψ`. Observables for the mixer angles shifted by `±π/2` on either
/// qubit are precomputed for the parameter-shift rule.
#[derive(Debug, Clone)]
pub struct ScoreKernel<T> {
    circuit: QpaCircuit,
    params: QpaParams<T>,
    mixer: [[Complex<T>; 4]; 4],
    observables: [Sym4<T>; 5],
}

fn observable<T: Scalar>(m0: T, m1: T) -> Sym4<T> {
    let u = kron(&rx(m0).expect("finite mixer angle"), &rx(m1).expect("finite mixer angle"));
    let mut proj = [[Complex::new(T::zero(), T::zero()); 4]; 4];
    proj[0][0] = Complex::new(T::one(), T::zero());
    proj[3][3] = Complex::new(T::one(), T::zero());
    let m = mat4_mul(&mat4_mul(&mat4_dagger(&u), &proj), &u);
    let mut out = [[T::zero(); 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = m[i][j].re;
        }
    }
    out
}

#[inline]
fn quadratic<T: Scalar>(m: &Sym4<T>, v: &[T; 4]) -> T {
    let mut acc = T::zero();
    for i in 0..4 {
        let mut row = T::zero();
        for j in 0..4 {
            row += m[i][j] * v[j];
        }
        acc += v[i] * row;
    }
    acc
}

impl<T: Scalar> ScoreKernel<T> {
    /// # Panics
    /// If `params.beta` is not finite.
    pub fn new(circuit: QpaCircuit, params: QpaParams<T>) -> Self {
        let m = T::lit(2.0) * params.beta;
        let h = T::FRAC_PI_2();
        let mixer = kron(&rx(m).expect("finite mixer angle"), &rx(m).expect("finite mixer angle"));
        let observables =
            [observable(m, m), observable(m + h, m), observable(m - h, m), observable(m, m + h), observable(m, m - h)];
        Self { circuit, params, mixer, observables }
    }

    pub fn params(&self) -> &QpaParams<T> {
        &self.params
    }

    pub fn circuit(&self) -> QpaCircuit {
        self.circuit
    }

    #[inline]
    fn pre_mixer(&self, a: Half<T>, b: Half<T>, e: Half<T>) -> [T; 4] {
        let mut v = [a.c * b.c, a.c * b.s, a.s * b.c, a.s * b.s];
        let ry1 = |v: &mut [T; 4]| {
            for (i0, i1) in [(0, 1), (2, 3)] {
                let (x0, x1) = (v[i0], v[i1]);
                v[i0] = e.c * x0 - e.s * x1;
                v[i1] = e.s * x0 + e.c * x1;
            }
        };
        match self.circuit.order {
            CnotOrder::QueryControlFirst => {
                v.swap(2, 3);
                ry1(&mut v);
                v.swap(1, 3);
            }
            CnotOrder::KeyControlFirst => {
                v.swap(1, 3);
                ry1(&mut v);
                v.swap(2, 3);
            }
        }
        v
    }

    #[inline]
    fn halves(&self, q: T, k: T) -> (Half<T>, Half<T>, Half<T>) {
        let a = self.circuit.angles(q, k, &self.params);
        (Half::of(a.phi0), Half::of(a.phi1), Half::of(a.entangle))
    }

    #[inline]
    pub fn score(&self, q: T, k: T) -> T {
        let (a, b, e) = self.halves(q, k);
        quadratic(&self.observables[0], &self.pre_mixer(a, b, e))
    }

    /// Full measurement distribution (mixer applied in complex arithmetic).
    pub fn probabilities(&self, q: T, k: T) -> [T; 4] {
        let (a, b, e) = self.halves(q, k);
        let v = self.pre_mixer(a, b, e);
        let mut out = [T::zero(); 4];
        for (i, p) in out.iter_mut().enumerate() {
            let mut amp = Complex::new(T::zero(), T::zero());
            for (j, x) in v.iter().enumerate() {
                amp += self.mixer[i][j] * *x;
            }
            *p = amp.norm_sqr();
        }
        out
    }

    /// Score after `channel` acts on both qubits before measurement.
    pub fn score_noisy(&self, q: T, k: T, channel: NoiseChannel, gamma: T) -> Result<T> {
        let p = channel.apply_to_probabilities(self.probabilities(q, k), gamma, 0)?;
        Ok(agreement(channel.apply_to_probabilities(p, gamma, 1)?))
    }

    /// Parameter-shift gradient: every gate angle is shifted by `±π/2` and the
    /// angle derivatives are chained through the linear maps from
    /// `(θs, γd, γs, α, q, k)` to the gate angles.
    pub fn gradient(&self, q: T, k: T) -> ScoreGradient<T> {
        let (a, b, e) = self.halves(q, k);
        let half = T::lit(0.5);
        let obs = &self.observables;
        let base = self.pre_mixer(a, b, e);
        let value = quadratic(&obs[0], &base);
        let shift = |va: [T; 4], vb: [T; 4]| half * (quadratic(&obs[0], &va) - quadratic(&obs[0], &vb));

        let g_phi0 = shift(self.pre_mixer(a.shifted(true), b, e), self.pre_mixer(a.shifted(false), b, e));
        let g_phi1 = shift(self.pre_mixer(a, b.shifted(true), e), self.pre_mixer(a, b.shifted(false), e));
        let g_ent = shift(self.pre_mixer(a, b, e.shifted(true)), self.pre_mixer(a, b, e.shifted(false)));
        let g_mix0 = half * (quadratic(&obs[1], &base) - quadratic(&obs[2], &base));
        let g_mix1 = half * (quadratic(&obs[3], &base) - quadratic(&obs[4], &base));

        let p = &self.params;
        let sum = q + k;
        let mut d = QpaParams::zeros();
        let (d_q, d_k);
        match self.circuit.encoding {
            Encoding::ThreeStep => {
                let (l1, l2) = p.lambdas();
                d.theta_s = g_phi0 * q + g_phi1 * k;
                d.gamma_d = (g_phi0 - g_phi1) * (q - k);
                d.gamma_s = (g_phi0 + g_phi1) * sum;
                d_q = g_phi0 * l1 + g_phi1 * l2 + g_ent * p.alpha;
                d_k = g_phi0 * l2 + g_phi1 * l1 + g_ent * p.alpha;
            }
            Encoding::Independent => {
                d.theta_s = g_phi0 * q + g_phi1 * k;
                d_q = g_phi0 * p.theta_s + g_ent * p.alpha;
                d_k = g_phi1 * p.theta_s + g_ent * p.alpha;
            }
        }
        d.alpha = g_ent * sum;
        d.beta = T::lit(2.0) * (g_mix0 + g_mix1);
        ScoreGradient { value, d_params: d, d_q, d_k }
    }
}
