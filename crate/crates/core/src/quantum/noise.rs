use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{check_qubit, Gate2};
use crate::error::{invalid, Error, Result};
use crate::Scalar;

/// Single-qubit noise channels, parameterized by a strength `γ ∈ [0, 1]`.
///
/// Kraus sets:
/// * amplitude damping: `{[[1,0],[0,√(1−γ)]], [[0,√γ],[0,0]]}`
/// * depolarizing: `ρ → (1−γ)ρ + (γ/3)(XρX + YρY + ZρZ)`
/// * bit flip: `{√(1−γ) I, √γ X}`
/// * phase flip: `{√(1−γ) I, √γ Z}`
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseChannel {
    #[serde(rename = "ad")]
    AmplitudeDamping,
    #[serde(rename = "dp")]
    Depolarizing,
    #[serde(rename = "bf")]
    BitFlip,
    #[serde(rename = "pf")]
    PhaseFlip,
}

impl NoiseChannel {
    pub const ALL: [NoiseChannel; 4] = [Self::AmplitudeDamping, Self::Depolarizing, Self::BitFlip, Self::PhaseFlip];

    pub fn key(self) -> &'static str {
        match self {
            Self::AmplitudeDamping => "ad",
            Self::Depolarizing => "dp",
            Self::BitFlip => "bf",
            Self::PhaseFlip => "pf",
        }
    }

    pub fn check_strength<T: Scalar>(gamma: T) -> Result<()> {
        if !(gamma >= T::zero() && gamma <= T::one()) {
            return Err(invalid(format!("noise strength must lie in [0, 1], got {gamma}")));
        }
        Ok(())
    }

    pub fn kraus<T: Scalar>(self, gamma: T) -> Result<Vec<Gate2<T>>> {
        Self::check_strength(gamma)?;
        let keep = (T::one() - gamma).sqrt();
        let z = T::zero();
        Ok(match self {
            Self::AmplitudeDamping => {
                vec![Gate2::real([[T::one(), z], [z, keep]]), Gate2::real([[z, gamma.sqrt()], [z, z]])]
            }
            Self::Depolarizing => {
                let w = (gamma / T::lit(3.0)).sqrt();
                vec![
                    Gate2::identity().scale(keep),
                    Gate2::pauli_x().scale(w),
                    Gate2::pauli_y().scale(w),
                    Gate2::pauli_z().scale(w),
                ]
            }
            Self::BitFlip => vec![Gate2::identity().scale(keep), Gate2::pauli_x().scale(gamma.sqrt())],
            Self::PhaseFlip => vec![Gate2::identity().scale(keep), Gate2::pauli_z().scale(gamma.sqrt())],
        })
    }

    /// Classical transition probabilities `(P(0→1), P(1→0))` the channel induces on
    /// computational-basis populations. Off-diagonal coherences never feed the
    /// diagonal for these four channels, so this is exact for measurement statistics.
    pub fn basis_transitions<T: Scalar>(self, gamma: T) -> Result<(T, T)> {
        Self::check_strength(gamma)?;
        Ok(match self {
            Self::AmplitudeDamping => (T::zero(), gamma),
            Self::Depolarizing => {
                let f = T::lit(2.0) * gamma / T::lit(3.0);
                (f, f)
            }
            Self::BitFlip => (gamma, gamma),
            Self::PhaseFlip => (T::zero(), T::zero()),
        })
    }

    /// Applies the channel's population transfer on `qubit` to a basis distribution.
    pub fn apply_to_probabilities<T: Scalar>(self, probs: [T; 4], gamma: T, qubit: usize) -> Result<[T; 4]> {
        check_qubit(qubit)?;
        let (up, down) = self.basis_transitions(gamma)?;
        let pairs: [(usize, usize); 2] = if qubit == 0 { [(0, 2), (1, 3)] } else { [(0, 1), (2, 3)] };
        let mut out = probs;
        for (i0, i1) in pairs {
            let (p0, p1) = (probs[i0], probs[i1]);
            out[i0] = (T::one() - up) * p0 + down * p1;
            out[i1] = up * p0 + (T::one() - down) * p1;
        }
        Ok(out)
    }
}

impl fmt::Display for NoiseChannel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for NoiseChannel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ad" | "amplitude-damping" => Ok(Self::AmplitudeDamping),
            "dp" | "depolarizing" => Ok(Self::Depolarizing),
            "bf" | "bit-flip" => Ok(Self::BitFlip),
            "pf" | "phase-flip" => Ok(Self::PhaseFlip),
            other => Err(invalid(format!("unknown noise channel `{other}`"))),
        }
    }
}
