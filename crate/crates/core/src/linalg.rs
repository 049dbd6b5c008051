//! Singular values by one-sided Jacobi rotations.
//!
//! Columns are orthogonalised pairwise until every pair is numerically
//! orthogonal; the singular values are then the column norms. The method is
//! slow for large inputs but accurate to a few ulps relative to `σ_max`, which
//! is what sharp numerical-rank decisions need.

use crate::tensor::Matrix;
use crate::Scalar;

const MAX_SWEEPS: usize = 60;

/// Singular values of `a`, sorted in descending order. Length is `min(rows, cols)`.
pub fn singular_values<T: Scalar>(a: &Matrix<T>) -> Vec<T> {
    let work = if a.rows() >= a.cols() { a.clone() } else { a.transpose() };
    let (m, n) = work.shape();
    let mut cols: Vec<Vec<T>> = (0..n).map(|j| (0..m).map(|i| work[(i, j)]).collect()).collect();
    let eps = T::epsilon();

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (head, tail) = cols.split_at_mut(q);
                let (cp, cq) = (&mut head[p], &mut tail[0]);
                let alpha: T = cp.iter().map(|&x| x * x).sum();
                let beta: T = cq.iter().map(|&x| x * x).sum();
                let gamma: T = cp.iter().zip(cq.iter()).map(|(&x, &y)| x * y).sum();
                if gamma == T::zero() || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::lit(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
                    let (u, v) = (*x, *y);
                    *x = c * u - s * v;
                    *y = s * u + c * v;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let mut sv: Vec<T> = cols.iter().map(|c| c.iter().map(|&x| x * x).sum::<T>().sqrt()).collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    sv
}

/// Number of singular values strictly above `rel_tol · σ_max`.
pub fn numerical_rank<T: Scalar>(singular_values: &[T], rel_tol: T) -> usize {
    let Some(&max) = singular_values.first() else { return 0 };
    if max == T::zero() {
        return 0;
    }
    singular_values.iter().filter(|&&s| s > rel_tol * max).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn oracle(a: &Matrix<f64>) -> Vec<f64> {
        let m = DMatrix::from_row_slice(a.rows(), a.cols(), a.as_slice());
        let mut sv: Vec<f64> = m.singular_values().iter().copied().collect();
        sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
        sv
    }

    #[test]
    fn matches_reference_on_random_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let (r, c) = (rng.random_range(1..30), rng.random_range(1..8));
            let a = Matrix::from_fn(r, c, |_, _| rng.random_range(-3.0..3.0));
            let ours = singular_values(&a);
            let theirs = oracle(&a);
            assert_eq!(ours.len(), theirs.len());
            for (x, y) in ours.iter().zip(&theirs) {
                assert!((x - y).abs() <= 1e-12 * theirs[0].max(1.0), "{ours:?} vs {theirs:?}");
            }
        }
    }

    #[test]
    fn detects_rank_deficiency() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let u = Matrix::from_fn(25, 3, |_, _| rng.random_range(-1.0..1.0));
        let v = Matrix::from_fn(3, 5, |_, _| rng.random_range(-1.0..1.0));
        let sv = singular_values(&u.matmul(&v));
        assert_eq!(numerical_rank(&sv, 1e-8), 3);
        assert!(sv[3] < 1e-13 * sv[0]);
    }

    #[test]
    fn degenerate_inputs() {
        assert_eq!(numerical_rank(&singular_values(&Matrix::<f64>::zeros(4, 3)), 1e-8), 0);
        let sv = singular_values(&Matrix::<f64>::identity(4));
        assert!(sv.iter().all(|&s| (s - 1.0).abs() < 1e-15));
        let wide = Matrix::from_rows(&[vec![3.0, 0.0, 0.0], vec![0.0, 0.0, 4.0]]).unwrap();
        assert_eq!(singular_values(&wide), vec![4.0, 3.0]);
    }
}
