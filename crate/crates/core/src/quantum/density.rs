use num_complex::Complex;

use super::{embed, mat4_dagger, mat4_mul, Gate2, Op4, QuantumState};
use crate::error::{invalid, Result};
use crate::Scalar;

/// Tolerance on `Σ K†K = I` when accepting a Kraus set.
const COMPLETENESS_TOL: f64 = 1e-10;

/// Two-qubit density operator in the same basis order as [`QuantumState`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix<T> {
    pub entries: Op4<T>,
}

impl<T: Scalar> DensityMatrix<T> {
    pub fn from_pure(state: &QuantumState<T>) -> Self {
        let a = &state.amplitudes;
        let mut entries = [[Complex::new(T::zero(), T::zero()); 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                entries[i][j] = a[i] * a[j].conj();
            }
        }
        Self { entries }
    }

    /// The maximally mixed state `I/4`.
    pub fn maximally_mixed() -> Self {
        let mut entries = [[Complex::new(T::zero(), T::zero()); 4]; 4];
        for (i, row) in entries.iter_mut().enumerate() {
            row[i] = Complex::new(T::lit(0.25), T::zero());
        }
        Self { entries }
    }

    fn conjugate(&self, u: &Op4<T>) -> Op4<T> {
        mat4_mul(&mat4_mul(u, &self.entries), &mat4_dagger(u))
    }

    /// `ρ → U ρ U†` for a single-qubit unitary on `qubit`.
    pub fn apply_single(&self, gate: &Gate2<T>, qubit: usize) -> Result<Self> {
        let u = embed(gate, qubit)?;
        Ok(Self { entries: self.conjugate(&u) })
    }

    /// Conjugation by a CNOT, which permutes rows and columns.
    pub fn apply_cnot(&self, control: usize, target: usize) -> Result<Self> {
        // Validates the qubit pair with the same rules as the state-vector path.
        QuantumState::<T>::zero().apply_cnot(control, target)?;
        let mut map = [0usize, 1, 2, 3];
        if control == 0 {
            map.swap(2, 3);
        } else {
            map.swap(1, 3);
        }
        let mut out = self.entries;
        for i in 0..4 {
            for j in 0..4 {
                out[map[i]][map[j]] = self.entries[i][j];
            }
        }
        Ok(Self { entries: out })
    }

    /// Operator-sum application of a single-qubit channel on `qubit`.
    ///
    /// The Kraus set must satisfy `Σ K†K = I` within 1e-10.
    pub fn apply_channel(&self, kraus: &[Gate2<T>], qubit: usize) -> Result<Self> {
        if kraus.is_empty() {
            return Err(invalid("empty Kraus set"));
        }
        let mut sum = Gate2::real([[T::zero(), T::zero()], [T::zero(), T::zero()]]);
        for k in kraus {
            let kk = k.dagger().matmul(k);
            for i in 0..2 {
                for j in 0..2 {
                    sum.entries[i][j] += kk.entries[i][j];
                }
            }
        }
        if sum.max_abs_diff(&Gate2::identity()) > T::lit(COMPLETENESS_TOL) {
            return Err(invalid("Kraus operators are not trace preserving"));
        }
        let mut out = [[Complex::new(T::zero(), T::zero()); 4]; 4];
        for k in kraus {
            let term = self.conjugate(&embed(k, qubit)?);
            for i in 0..4 {
                for j in 0..4 {
                    out[i][j] += term[i][j];
                }
            }
        }
        Ok(Self { entries: out })
    }

    pub fn trace(&self) -> Complex<T> {
        (0..4).fold(Complex::new(T::zero(), T::zero()), |acc, i| acc + self.entries[i][i])
    }

    /// Diagonal in the computational basis: the measurement distribution.
    pub fn probabilities(&self) -> [T; 4] {
        [0, 1, 2, 3].map(|i| self.entries[i][i].re)
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        let mut worst = T::zero();
        for i in 0..4 {
            for j in 0..4 {
                worst = worst.max((self.entries[i][j] - other.entries[i][j]).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: T) -> bool {
        (0..4).all(|i| (0..4).all(|j| (self.entries[i][j] - self.entries[j][i].conj()).norm() <= tol))
    }
}
