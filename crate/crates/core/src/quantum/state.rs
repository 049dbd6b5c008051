use num_complex::Complex;

use super::{check_qubit, Gate2};
use crate::error::{invalid, Result};
use crate::Scalar;

/// Pure two-qubit state, amplitudes ordered `|00>, |01>, |10>, |11>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantumState<T> {
    pub amplitudes: [Complex<T>; 4],
}

impl<T: Scalar> QuantumState<T> {
    pub fn zero() -> Self {
        let z = Complex::new(T::zero(), T::zero());
        Self { amplitudes: [Complex::new(T::one(), T::zero()), z, z, z] }
    }

    pub fn from_amplitudes(amplitudes: [Complex<T>; 4]) -> Self {
        Self { amplitudes }
    }

    /// Computational basis state `|index>`.
    pub fn basis(index: usize) -> Result<Self> {
        if index > 3 {
            return Err(invalid(format!("basis index {index} out of range")));
        }
        let mut amplitudes = [Complex::new(T::zero(), T::zero()); 4];
        amplitudes[index] = Complex::new(T::one(), T::zero());
        Ok(Self { amplitudes })
    }

    pub fn norm_sqr(&self) -> T {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Applies `gate ⊗ I` (qubit 0) or `I ⊗ gate` (qubit 1).
    pub fn apply_single(&self, gate: &Gate2<T>, qubit: usize) -> Result<Self> {
        check_qubit(qubit)?;
        let mut a = self.amplitudes;
        let pairs: [(usize, usize); 2] = if qubit == 0 { [(0, 2), (1, 3)] } else { [(0, 1), (2, 3)] };
        for (i0, i1) in pairs {
            let (x0, x1) = gate.apply(a[i0], a[i1]);
            a[i0] = x0;
            a[i1] = x1;
        }
        Ok(Self { amplitudes: a })
    }

    /// Applies a CNOT; the target is flipped on the branch where the control is 1.
    pub fn apply_cnot(&self, control: usize, target: usize) -> Result<Self> {
        check_qubit(control)?;
        check_qubit(target)?;
        if control == target {
            return Err(invalid("CNOT control and target must differ"));
        }
        let mut a = self.amplitudes;
        if control == 0 {
            a.swap(2, 3);
        } else {
            a.swap(1, 3);
        }
        Ok(Self { amplitudes: a })
    }

    /// Born-rule probabilities of the four basis outcomes.
    pub fn probabilities(&self) -> [T; 4] {
        self.amplitudes.map(|a| a.norm_sqr())
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &Self) -> Complex<T> {
        self.amplitudes
            .iter()
            .zip(other.amplitudes.iter())
            .fold(Complex::new(T::zero(), T::zero()), |acc, (a, b)| acc + a.conj() * b)
    }

    /// Product state `(a0, a1) ⊗ (b0, b1)`.
    pub fn product(q0: [Complex<T>; 2], q1: [Complex<T>; 2]) -> Self {
        Self { amplitudes: [q0[0] * q1[0], q0[0] * q1[1], q0[1] * q1[0], q0[1] * q1[1]] }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{rx, ry};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn close(a: [f64; 4], b: [f64; 4], tol: f64) -> bool {
        a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn identity_leaves_state() {
        let s = QuantumState::<f64>::basis(2).unwrap();
        assert_eq!(s.apply_single(&Gate2::identity(), 0).unwrap(), s);
        assert_eq!(s.apply_single(&Gate2::identity(), 1).unwrap(), s);
    }

    #[test]
    fn ry_quarter_on_qubit_zero() {
        let s = QuantumState::<f64>::zero().apply_single(&ry(PI / 2.0).unwrap(), 0).unwrap();
        let r = (PI / 4.0).cos();
        let expect = [r, 0.0, (PI / 4.0).sin(), 0.0];
        for (a, e) in s.amplitudes.iter().zip(expect) {
            assert!((a.re - e).abs() < 1e-15 && a.im == 0.0);
        }
    }

    #[test]
    fn cnot_truth_table() {
        let b = |i| QuantumState::<f64>::basis(i).unwrap();
        assert_eq!(b(2).apply_cnot(0, 1).unwrap(), b(3));
        assert_eq!(b(1).apply_cnot(1, 0).unwrap(), b(3));
        assert_eq!(b(0).apply_cnot(0, 1).unwrap(), b(0));
        assert_eq!(b(3).apply_cnot(0, 1).unwrap(), b(2));
        assert!(b(0).apply_cnot(1, 1).is_err());
        assert!(b(0).apply_single(&Gate2::identity(), 2).is_err());
    }

    #[test]
    fn measurement_probabilities() {
        assert_eq!(QuantumState::<f64>::zero().probabilities(), [1.0, 0.0, 0.0, 0.0]);
        let h = Complex::new(0.5, 0.0);
        let uniform = QuantumState::from_amplitudes([h; 4]);
        assert_eq!(uniform.probabilities(), [0.25; 4]);

        let s = QuantumState::<f64>::zero()
            .apply_single(&ry(PI / 4.0).unwrap(), 0)
            .unwrap()
            .apply_single(&ry(PI / 4.0).unwrap(), 1)
            .unwrap();
        let p = s.probabilities();
        assert!((p[0] - (PI / 8.0).cos().powi(4)).abs() < 1e-15);
        assert!((p[0] - 0.728_553).abs() < 1e-6);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn random_gate_sequences_preserve_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let mut s = QuantumState::<f64>::zero();
            for _ in 0..50 {
                let theta = rng.random_range(-10.0..10.0);
                let gate = if rng.random_bool(0.5) { ry(theta) } else { rx(theta) }.unwrap();
                s = match rng.random_range(0..3) {
                    0 => s.apply_single(&gate, 0).unwrap(),
                    1 => s.apply_single(&gate, 1).unwrap(),
                    _ => {
                        let control = rng.random_range(0..2);
                        s.apply_cnot(control, 1 - control).unwrap()
                    }
                };
            }
            assert!((s.norm_sqr() - 1.0).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn rotations_unitary(theta in -50.0f64..50.0) {
            prop_assert!(ry(theta).unwrap().is_unitary(1e-12));
            prop_assert!(rx(theta).unwrap().is_unitary(1e-12));
        }

        #[test]
        fn probabilities_sum_to_one(a in -6.0f64..6.0, b in -6.0f64..6.0) {
            let s = QuantumState::zero()
                .apply_single(&ry(a).unwrap(), 0).unwrap()
                .apply_single(&rx(b).unwrap(), 1).unwrap()
                .apply_cnot(0, 1).unwrap();
            let p = s.probabilities();
            prop_assert!(close([p.iter().sum::<f64>(), 0.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0], 1e-12));
        }
    }
}
