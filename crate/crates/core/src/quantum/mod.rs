//! Exact two-qubit linear algebra.
//!
//! Basis index convention: `|q0 q1>` maps to `2*q0 + q1`, so qubit 0 is the most
//! significant bit. All types are small `Copy` values and every operation is a
//! pure function.

mod density;
mod gate;
mod noise;
mod state;

pub use density::DensityMatrix;
pub use gate::{rx, ry, Gate2};
pub use noise::NoiseChannel;
pub use state::QuantumState;

use num_complex::Complex;

use crate::error::{invalid, Result};
use crate::Scalar;

/// Full 4x4 complex operator on the two-qubit space.
pub type Op4<T> = [[Complex<T>; 4]; 4];

pub(crate) fn check_qubit(qubit: usize) -> Result<()> {
    if qubit > 1 {
        return Err(invalid(format!("qubit index {qubit} out of range (0 or 1)")));
    }
    Ok(())
}

/// Embeds a single-qubit operator as `op ⊗ I` (qubit 0) or `I ⊗ op` (qubit 1).
pub fn embed<T: Scalar>(op: &Gate2<T>, qubit: usize) -> Result<Op4<T>> {
    check_qubit(qubit)?;
    let mut out = [[Complex::new(T::zero(), T::zero()); 4]; 4];
    for (row, out_row) in out.iter_mut().enumerate() {
        for (col, cell) in out_row.iter_mut().enumerate() {
            let (r0, r1) = (row >> 1, row & 1);
            let (c0, c1) = (col >> 1, col & 1);
            *cell = if qubit == 0 {
                if r1 == c1 {
                    op.entries[r0][c0]
                } else {
                    Complex::new(T::zero(), T::zero())
                }
            } else if r0 == c0 {
                op.entries[r1][c1]
            } else {
                Complex::new(T::zero(), T::zero())
            };
        }
    }
    Ok(out)
}

/// Kronecker product `a ⊗ b`.
pub fn kron<T: Scalar>(a: &Gate2<T>, b: &Gate2<T>) -> Op4<T> {
    let mut out = [[Complex::new(T::zero(), T::zero()); 4]; 4];
    for (row, out_row) in out.iter_mut().enumerate() {
        for (col, cell) in out_row.iter_mut().enumerate() {
            *cell = a.entries[row >> 1][col >> 1] * b.entries[row & 1][col & 1];
        }
    }
    out
}

pub(crate) fn mat4_mul<T: Scalar>(a: &Op4<T>, b: &Op4<T>) -> Op4<T> {
    let mut out = [[Complex::new(T::zero(), T::zero()); 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            let mut acc = Complex::new(T::zero(), T::zero());
            for k in 0..4 {
                acc += a[i][k] * b[k][j];
            }
            out[i][j] = acc;
        }
    }
    out
}

pub(crate) fn mat4_dagger<T: Scalar>(a: &Op4<T>) -> Op4<T> {
    let mut out = [[Complex::new(T::zero(), T::zero()); 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = a[j][i].conj();
        }
    }
    out
}
