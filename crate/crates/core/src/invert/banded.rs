//! Gaussian elimination with partial pivoting restricted to a band.
//!
//! Fiber matrices couple a label only to its translates by the operator's
//! own labels, so in lexicographic order they are banded with bandwidth
//! proportional to the window's row length, not its area.

use num_complex::Complex64;

/// Band limits of a square matrix: nonzeros satisfy `i ≤ j + lower` and `j ≤ i + upper`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Band {
    pub lower: usize,
    pub upper: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingularPivot {
    pub column: usize,
}

/// Solves `A X = B` in place. `a` is `n×n` row-major, `b` is `n×r`
/// row-major and is overwritten with `X`. `a` is destroyed.
pub fn solve(a: &mut [Complex64], n: usize, band: Band, b: &mut [Complex64], r: usize) -> Result<(), SingularPivot> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n * r);
    // row swaps push fill-in up to lower + upper above the diagonal
    let reach = band.lower + band.upper;
    for k in 0..n {
        let last_row = (k + band.lower + 1).min(n);
        let mut p = k;
        let mut best = a[k * n + k].norm();
        for i in k + 1..last_row {
            let v = a[i * n + k].norm();
            if v > best {
                best = v;
                p = i;
            }
        }
        if best == 0.0 || !best.is_finite() {
            return Err(SingularPivot { column: k });
        }
        let last_col = (k + reach + 1).min(n);
        if p != k {
            for j in k..last_col {
                a.swap(k * n + j, p * n + j);
            }
            for j in 0..r {
                b.swap(k * r + j, p * r + j);
            }
        }
        let pivot = a[k * n + k];
        for i in k + 1..last_row {
            let f = a[i * n + k] / pivot;
            if f == Complex64::new(0.0, 0.0) {
                continue;
            }
            a[i * n + k] = Complex64::new(0.0, 0.0);
            for j in k + 1..last_col {
                let t = a[k * n + j];
                a[i * n + j] -= f * t;
            }
            for j in 0..r {
                let t = b[k * r + j];
                b[i * r + j] -= f * t;
            }
        }
    }
    for k in (0..n).rev() {
        let last_col = (k + reach + 1).min(n);
        for j in 0..r {
            let mut s = b[k * r + j];
            for c in k + 1..last_col {
                s -= a[k * n + c] * b[c * r + j];
            }
            b[k * r + j] = s / a[k * n + k];
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};

    fn random_banded(seed: u64, n: usize, band: Band) -> Vec<Complex64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut a = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..n {
            for j in 0..n {
                if j + band.lower >= i && i + band.upper >= j {
                    a[i * n + j] = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                }
            }
            // keep random triangular cases well conditioned
            a[i * n + i] += Complex64::new(2.0, 0.0);
        }
        a
    }

    #[test]
    fn matches_dense_lu() {
        for (seed, n, lower, upper) in [(1u64, 30usize, 3usize, 2usize), (2, 40, 7, 0), (3, 17, 0, 5), (4, 12, 11, 11)] {
            let band = Band { lower, upper };
            let a = random_banded(seed, n, band);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed + 99);
            let b: Vec<Complex64> = (0..n * 2).map(|_| Complex64::new(rng.random_range(-1.0..1.0), 0.0)).collect();
            let dense = DMatrix::from_row_slice(n, n, &a);
            let rhs = DMatrix::from_row_slice(n, 2, &b);
            let expect = dense.clone().lu().solve(&rhs).unwrap();
            let mut a2 = a.clone();
            let mut x = b.clone();
            solve(&mut a2, n, band, &mut x, 2).unwrap();
            for i in 0..n {
                for j in 0..2 {
                    assert!((x[i * 2 + j] - expect[(i, j)]).norm() < 1e-9, "n={n} ({i},{j})");
                }
            }
        }
    }

    #[test]
    fn zero_column_is_singular() {
        let n = 4;
        let mut a = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..n {
            a[i * n + i] = Complex64::new(1.0, 0.0);
            a[i * n + 2] = Complex64::new(0.0, 0.0);
        }
        let mut b = vec![Complex64::new(1.0, 0.0); n];
        let band = Band { lower: 3, upper: 3 };
        assert_eq!(solve(&mut a, n, band, &mut b, 1), Err(SingularPivot { column: 2 }));
    }
}
