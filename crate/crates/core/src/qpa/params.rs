use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::Scalar;

/// The five trainable circuit parameters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct QpaParams<T> {
    /// Initial encoding scale `θs`.
    pub theta_s: T,
    /// Difference encoding strength `γd`.
    pub gamma_d: T,
    /// Sum encoding strength `γs`.
    pub gamma_s: T,
    /// Entanglement strength `α`.
    pub alpha: T,
    /// Mixer angle `β`.
    pub beta: T,
}

impl<T: Scalar> QpaParams<T> {
    pub const COUNT: usize = 5;

    pub fn new(theta_s: T, gamma_d: T, gamma_s: T, alpha: T, beta: T) -> Self {
        Self { theta_s, gamma_d, gamma_s, alpha, beta }
    }

    pub fn zeros() -> Self {
        Self::from_array([T::zero(); 5])
    }

    /// `θs = 0.5`; `γd, γs, α, β ~ N(0, 0.1²)`.
    pub fn init<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let normal = Normal::new(0.0, 0.1).expect("valid std");
        let mut draw = || T::lit(normal.sample(rng));
        Self { theta_s: T::lit(0.5), gamma_d: draw(), gamma_s: draw(), alpha: draw(), beta: draw() }
    }

    /// `(λ1, λ2) = (θs + γd + γs, γs − γd)`.
    pub fn lambdas(&self) -> (T, T) {
        (self.theta_s + self.gamma_d + self.gamma_s, self.gamma_s - self.gamma_d)
    }

    /// `(ωd, ωs) = (θs + 2γd, θs + 2γs)`.
    pub fn frequencies(&self) -> (T, T) {
        let two = T::lit(2.0);
        (self.theta_s + two * self.gamma_d, self.theta_s + two * self.gamma_s)
    }

    pub fn to_array(&self) -> [T; 5] {
        [self.theta_s, self.gamma_d, self.gamma_s, self.alpha, self.beta]
    }

    pub fn from_array(a: [T; 5]) -> Self {
        Self::new(a[0], a[1], a[2], a[3], a[4])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}
