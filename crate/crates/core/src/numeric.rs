//! Small numerical helpers shared by the operator modules: deterministic
//! reductions, d×d block norms, and N-d FFT passes.

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};
use std::sync::Arc;

/// Pairwise summation in slice order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Sorts ascending, then sums pairwise. The result does not depend on the
/// order in which the terms were produced.
pub fn sorted_sum(mut values: Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    pairwise_sum(&values)
}

/// Spectral norm of a row-major d×d complex block, d ∈ {1, 2}.
pub fn block_norm(block: &[Complex64], d: usize) -> f64 {
    match d {
        1 => block[0].norm(),
        2 => {
            // largest eigenvalue of B = A^H A, closed form for 2×2 Hermitian
            let (a, b, c, e) = (block[0], block[1], block[2], block[3]);
            let b11 = a.norm_sqr() + c.norm_sqr();
            let b22 = b.norm_sqr() + e.norm_sqr();
            let b12 = a.conj() * b + c.conj() * e;
            let tr = b11 + b22;
            let det = b11 * b22 - b12.norm_sqr();
            let disc = (tr * tr - 4.0 * det).max(0.0).sqrt();
            (0.5 * (tr + disc)).max(0.0).sqrt()
        }
        _ => panic!("block_norm supports d in {{1, 2}}, got {d}"),
    }
}

/// Euclidean norm of a complex vector.
pub fn vec_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Smallest 2^a 3^b 5^c that is at least `n`.
pub fn fft_len(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

/// Row-major N-d complex array with per-axis FFT passes.
pub struct FftNd {
    shape: Vec<usize>,
    plans_fwd: Vec<Arc<dyn Fft<f64>>>,
    plans_inv: Vec<Arc<dyn Fft<f64>>>,
}

impl FftNd {
    pub fn new(planner: &mut FftPlanner<f64>, shape: &[usize]) -> Self {
        FftNd {
            shape: shape.to_vec(),
            plans_fwd: shape.iter().map(|&n| planner.plan_fft(n, FftDirection::Forward)).collect(),
            plans_inv: shape.iter().map(|&n| planner.plan_fft(n, FftDirection::Inverse)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(data, &self.plans_fwd);
    }

    /// Unnormalized inverse transform.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, &self.plans_inv);
    }

    fn run(&self, data: &mut [Complex64], plans: &[Arc<dyn Fft<f64>>]) {
        assert_eq!(data.len(), self.len());
        let rank = self.shape.len();
        for axis in 0..rank {
            let n = self.shape[axis];
            let inner: usize = self.shape[axis + 1..].iter().product();
            let outer: usize = self.shape[..axis].iter().product();
            if inner == 1 {
                plans[axis].process(data);
                continue;
            }
            let mut line = vec![Complex64::new(0.0, 0.0); n];
            for o in 0..outer {
                for i in 0..inner {
                    let base = o * n * inner + i;
                    for k in 0..n {
                        line[k] = data[base + k * inner];
                    }
                    plans[axis].process(&mut line);
                    for k in 0..n {
                        data[base + k * inner] = line[k];
                    }
                }
            }
        }
    }
}

/// Row-major strides for a shape.
pub fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for k in (0..shape.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * shape[k + 1];
    }
    s
}

/// Visits every multi-index of `shape` in row-major order.
pub fn for_each_index(shape: &[usize], mut f: impl FnMut(usize, &[usize])) {
    let total: usize = shape.iter().product();
    let mut idx = vec![0usize; shape.len()];
    for flat in 0..total {
        f(flat, &idx);
        for k in (0..shape.len()).rev() {
            idx[k] += 1;
            if idx[k] < shape[k] {
                break;
            }
            idx[k] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fft_len_is_smooth() {
        assert_eq!(fft_len(1), 1);
        assert_eq!(fft_len(7), 8);
        assert_eq!(fft_len(11), 12);
        assert_eq!(fft_len(121), 125);
    }

    #[test]
    fn block_norm_2x2_matches_known_values() {
        let c = |re: f64| Complex64::new(re, 0.0);
        // diag(3, -4)
        let b = [c(3.0), c(0.0), c(0.0), c(-4.0)];
        assert!((block_norm(&b, 2) - 4.0).abs() < 1e-14);
        // [[1,1],[0,1]]: sigma_max = golden ratio
        let b = [c(1.0), c(1.0), c(0.0), c(1.0)];
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((block_norm(&b, 2) - phi).abs() < 1e-14);
    }

    #[test]
    fn sorted_sum_is_order_independent() {
        let a = vec![1e-3, 1.0, -0.5, 3.25, 1e-9];
        let mut b = a.clone();
        b.reverse();
        assert_eq!(sorted_sum(a).to_bits(), sorted_sum(b).to_bits());
    }

    #[test]
    fn fft_roundtrip_2d() {
        let mut planner = FftPlanner::new();
        let f = FftNd::new(&mut planner, &[3, 4]);
        let orig: Vec<Complex64> = (0..12).map(|k| Complex64::new(k as f64, -(k as f64) / 3.0)).collect();
        let mut x = orig.clone();
        f.forward(&mut x);
        f.inverse(&mut x);
        for (a, b) in x.iter().zip(&orig) {
            assert!((a / 12.0 - b).norm() < 1e-12);
        }
    }
}
