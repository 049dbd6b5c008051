use num_complex::Complex;

use crate::error::{invalid, Result};
use crate::Scalar;

/// A 2x2 complex matrix. Rotation constructors return unitaries; Kraus
/// operators reuse the same type without the unitarity guarantee.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gate2<T> {
    pub entries: [[Complex<T>; 2]; 2],
}

fn c<T: Scalar>(re: T, im: T) -> Complex<T> {
    Complex::new(re, im)
}

fn check_angle<T: Scalar>(theta: T) -> Result<()> {
    if !theta.is_finite() {
        return Err(invalid(format!("rotation angle must be finite, got {theta}")));
    }
    Ok(())
}

/// `RY(θ) = [[cos θ/2, −sin θ/2], [sin θ/2, cos θ/2]]`.
pub fn ry<T: Scalar>(theta: T) -> Result<Gate2<T>> {
    check_angle(theta)?;
    let half = theta / T::lit(2.0);
    let (s, co) = half.sin_cos();
    let z = T::zero();
    Ok(Gate2::new([[c(co, z), c(-s, z)], [c(s, z), c(co, z)]]))
}

/// `RX(θ) = [[cos θ/2, −i sin θ/2], [−i sin θ/2, cos θ/2]]`.
pub fn rx<T: Scalar>(theta: T) -> Result<Gate2<T>> {
    check_angle(theta)?;
    let half = theta / T::lit(2.0);
    let (s, co) = half.sin_cos();
    let z = T::zero();
    Ok(Gate2::new([[c(co, z), c(z, -s)], [c(z, -s), c(co, z)]]))
}

impl<T: Scalar> Gate2<T> {
    pub const fn new(entries: [[Complex<T>; 2]; 2]) -> Self {
        Self { entries }
    }

    pub fn real(m: [[T; 2]; 2]) -> Self {
        let z = T::zero();
        Self::new([[c(m[0][0], z), c(m[0][1], z)], [c(m[1][0], z), c(m[1][1], z)]])
    }

    pub fn identity() -> Self {
        Self::real([[T::one(), T::zero()], [T::zero(), T::one()]])
    }

    pub fn pauli_x() -> Self {
        Self::real([[T::zero(), T::one()], [T::one(), T::zero()]])
    }

    pub fn pauli_y() -> Self {
        let z = T::zero();
        Self::new([[c(z, z), c(z, -T::one())], [c(z, T::one()), c(z, z)]])
    }

    pub fn pauli_z() -> Self {
        Self::real([[T::one(), T::zero()], [T::zero(), -T::one()]])
    }

    pub fn scale(&self, k: T) -> Self {
        let mut out = *self;
        for row in out.entries.iter_mut() {
            for v in row.iter_mut() {
                *v *= k;
            }
        }
        out
    }

    pub fn dagger(&self) -> Self {
        let e = &self.entries;
        Self::new([[e[0][0].conj(), e[1][0].conj()], [e[0][1].conj(), e[1][1].conj()]])
    }

    pub fn matmul(&self, other: &Self) -> Self {
        let (a, b) = (&self.entries, &other.entries);
        let mut out = [[c(T::zero(), T::zero()); 2]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        Self::new(out)
    }

    /// Largest entrywise modulus of `self − other`.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        let mut worst = T::zero();
        for i in 0..2 {
            for j in 0..2 {
                worst = worst.max((self.entries[i][j] - other.entries[i][j]).norm());
            }
        }
        worst
    }

    pub fn is_unitary(&self, tol: T) -> bool {
        self.dagger().matmul(self).max_abs_diff(&Self::identity()) <= tol
    }

    /// Applies the matrix to a single-qubit amplitude pair.
    #[inline]
    pub fn apply(&self, a0: Complex<T>, a1: Complex<T>) -> (Complex<T>, Complex<T>) {
        let e = &self.entries;
        (e[0][0] * a0 + e[0][1] * a1, e[1][0] * a0 + e[1][1] * a1)
    }
}
