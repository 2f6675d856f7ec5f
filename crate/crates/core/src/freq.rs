//! Exact labels on a finitely generated frequency module
//! `{Σ a_i ω_i : a ∈ ℤ^m}` and characters of the module.
//!
//! With rationally independent generators, the dual of the module (with
//! the discrete topology) is the torus 𝕋^m: the character attached to
//! `θ ∈ [0,1)^m` maps `ω_a` to `e^{2πi a·θ}`, and Haar integration is
//! plain averaging over `θ`.

use crate::error::{ApwError, Result};
use num_complex::Complex64;
use std::f64::consts::PI;
use std::fmt;

/// Generators `ω_1 … ω_m ∈ ℝ^c` of a frequency module.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyBasis {
    generators: Vec<Vec<f64>>,
    declared_independent: bool,
}

impl FrequencyBasis {
    pub fn new(generators: Vec<Vec<f64>>, declared_independent: bool) -> Result<Self> {
        let m = generators.len();
        if !(1..=3).contains(&m) {
            return Err(ApwError::InvalidBasis(format!("rank must be 1..=3, got {m}")));
        }
        let c = generators[0].len();
        if !(1..=2).contains(&c) {
            return Err(ApwError::InvalidBasis(format!("generators must live in R^1 or R^2, got R^{c}")));
        }
        for (i, g) in generators.iter().enumerate() {
            if g.len() != c {
                return Err(ApwError::InvalidBasis(format!("generator {i} has dimension {}", g.len())));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(ApwError::InvalidBasis(format!("generator {i} is not finite")));
            }
            if g.iter().all(|&v| v == 0.0) {
                return Err(ApwError::InvalidBasis(format!("generator {i} is zero")));
            }
            if generators[..i].iter().any(|h| h == g) {
                return Err(ApwError::InvalidBasis(format!("generator {i} repeats an earlier one")));
            }
        }
        Ok(FrequencyBasis { generators, declared_independent })
    }

    /// Single generator on the real line.
    pub fn line(omega: f64) -> Result<Self> {
        Self::new(vec![vec![omega]], true)
    }

    pub fn rank(&self) -> usize {
        self.generators.len()
    }

    pub fn space_dim(&self) -> usize {
        self.generators[0].len()
    }

    pub fn generators(&self) -> &[Vec<f64>] {
        &self.generators
    }

    pub fn declared_independent(&self) -> bool {
        self.declared_independent
    }

    /// `ω_a = Σ a_i ω_i`, recomputed from the integer coordinates.
    pub fn vector(&self, a: &FreqLabel) -> Result<Vec<f64>> {
        self.check_rank(a)?;
        let mut out = vec![0.0; self.space_dim()];
        for (ai, g) in a.0.iter().zip(&self.generators) {
            for (o, gk) in out.iter_mut().zip(g) {
                *o += *ai as f64 * gk;
            }
        }
        Ok(out)
    }

    pub fn check_rank(&self, a: &FreqLabel) -> Result<()> {
        if a.rank() != self.rank() {
            return Err(ApwError::RankMismatch { left: self.rank(), right: a.rank() });
        }
        Ok(())
    }

    /// Smallest distance `|ω_a - ω_b|` over distinct labels with
    /// `|a_i|, |b_i| ≤ window_radius`. A failing verdict is data, not an
    /// error; passing is a sanity check, not a proof of independence.
    pub fn verify_injectivity(&self, window_radius: usize, tol: f64) -> InjectivityReport {
        let m = self.rank();
        let span = 2 * window_radius as i64;
        let mut best = f64::INFINITY;
        let mut witness = None;
        // a - b ranges over the box |e_i| ≤ 2R
        for e in LabelBox::new(m, span) {
            if e.is_zero() {
                continue;
            }
            let v = self.vector(&e).expect("rank checked");
            let gap = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if gap < best {
                best = gap;
                let a: Vec<i64> = e.0.iter().map(|&x| (x as f64 / 2.0).ceil() as i64).collect();
                let b: Vec<i64> = a.iter().zip(&e.0).map(|(x, y)| x - y).collect();
                witness = Some((FreqLabel(a), FreqLabel(b)));
            }
        }
        InjectivityReport { window_radius, tol, min_gap: best, witness, passed: best > tol }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InjectivityReport {
    pub window_radius: usize,
    pub tol: f64,
    pub min_gap: f64,
    /// A pair of labels attaining the minimum gap.
    pub witness: Option<(FreqLabel, FreqLabel)>,
    pub passed: bool,
}

/// Integer coordinates `a ∈ ℤ^m` of a module element. Ordered
/// lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FreqLabel(Vec<i64>);

impl FreqLabel {
    pub fn new(coords: Vec<i64>) -> Self {
        FreqLabel(coords)
    }

    pub fn zero(rank: usize) -> Self {
        FreqLabel(vec![0; rank])
    }

    pub fn coords(&self) -> &[i64] {
        &self.0
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&x| x == 0)
    }

    /// Componentwise sum; the module's group law.
    pub fn add(&self, other: &FreqLabel) -> Result<FreqLabel> {
        if self.rank() != other.rank() {
            return Err(ApwError::RankMismatch { left: self.rank(), right: other.rank() });
        }
        Ok(FreqLabel(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect()))
    }

    pub fn sub(&self, other: &FreqLabel) -> Result<FreqLabel> {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> FreqLabel {
        FreqLabel(self.0.iter().map(|a| -a).collect())
    }

    pub fn max_abs(&self) -> i64 {
        self.0.iter().map(|a| a.abs()).max().unwrap_or(0)
    }

    pub fn abs_sum(&self) -> i64 {
        self.0.iter().map(|a| a.abs()).sum()
    }
}

impl fmt::Display for FreqLabel {
    /// Semicolon-joined coordinates, e.g. `1;-2`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(i64::to_string).collect();
        f.write_str(&parts.join(";"))
    }
}

/// All labels with `|a_i| ≤ radius`, in lexicographic order.
#[derive(Debug, Clone)]
pub struct LabelBox {
    radius: i64,
    next: Option<Vec<i64>>,
}

impl LabelBox {
    pub fn new(rank: usize, radius: i64) -> Self {
        LabelBox { radius, next: Some(vec![-radius; rank]) }
    }
}

impl Iterator for LabelBox {
    type Item = FreqLabel;

    fn next(&mut self) -> Option<FreqLabel> {
        let cur = self.next.take()?;
        let mut n = cur.clone();
        let mut k = n.len();
        let mut advanced = false;
        while k > 0 {
            k -= 1;
            if n[k] < self.radius {
                n[k] += 1;
                advanced = true;
                break;
            }
            n[k] = -self.radius;
        }
        if advanced {
            self.next = Some(n);
        }
        Some(FreqLabel(cur))
    }
}

/// A point `θ ∈ [0,1)^m` naming the character `ω_a ↦ e^{2πi a·θ}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TorusPoint(Vec<f64>);

impl TorusPoint {
    /// Wraps each coordinate into `[0, 1)`.
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(ApwError::InvalidConfig("torus coordinates must be finite".into()));
        }
        Ok(TorusPoint(theta.into_iter().map(wrap_unit).collect()))
    }

    pub fn origin(rank: usize) -> Self {
        TorusPoint(vec![0.0; rank])
    }

    /// The character induced by the real shift `h`: `θ_i = ⟨ω_i, h⟩ / 2π mod 1`.
    pub fn from_shift(basis: &FrequencyBasis, h: &[f64]) -> Result<Self> {
        if h.len() != basis.space_dim() {
            return Err(ApwError::SpaceDimMismatch { left: basis.space_dim(), right: h.len() });
        }
        let theta = basis
            .generators()
            .iter()
            .map(|g| g.iter().zip(h).map(|(a, b)| a * b).sum::<f64>() / (2.0 * PI))
            .collect();
        TorusPoint::new(theta)
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    /// `e^{2πi a·θ}`.
    pub fn character(&self, a: &FreqLabel) -> Result<Complex64> {
        if a.rank() != self.rank() {
            return Err(ApwError::RankMismatch { left: self.rank(), right: a.rank() });
        }
        // reduce each product mod 1 before the exponential
        let turns: f64 = a.0.iter().zip(&self.0).map(|(&k, &t)| wrap_unit(k as f64 * t)).sum();
        Ok(Complex64::from_polar(1.0, 2.0 * PI * wrap_unit(turns)))
    }
}

fn wrap_unit(t: f64) -> f64 {
    let w = t.rem_euclid(1.0);
    if w >= 1.0 {
        0.0
    } else {
        w
    }
}

/// The uniform grid `θ_j = j / n` on 𝕋^m, enumerated row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TorusGrid {
    rank: usize,
    n: usize,
}

impl TorusGrid {
    pub fn new(rank: usize, n: usize) -> Result<Self> {
        if rank == 0 || n == 0 {
            return Err(ApwError::InvalidConfig("torus grid needs positive rank and size".into()));
        }
        Ok(TorusGrid { rank, n })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.rank as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Integer coordinates `j` of the flat index.
    pub fn index(&self, flat: usize) -> Vec<usize> {
        let mut out = vec![0; self.rank];
        let mut r = flat;
        for k in (0..self.rank).rev() {
            out[k] = r % self.n;
            r /= self.n;
        }
        out
    }

    pub fn point(&self, flat: usize) -> TorusPoint {
        TorusPoint(self.index(flat).into_iter().map(|j| j as f64 / self.n as f64).collect())
    }

    /// `e^{2πi a·θ_j}` computed from the integer residue `a·j mod n`.
    pub fn character(&self, flat: usize, a: &FreqLabel) -> Complex64 {
        let n = self.n as i64;
        let r = self
            .index(flat)
            .iter()
            .zip(a.coords())
            .map(|(&j, &k)| (j as i64 * k).rem_euclid(n))
            .sum::<i64>()
            .rem_euclid(n);
        Complex64::from_polar(1.0, 2.0 * PI * r as f64 / n as f64)
    }

    /// Errors unless every `|a_i| < n/2`.
    pub fn check_alias(&self, a: &FreqLabel) -> Result<()> {
        if a.rank() != self.rank {
            return Err(ApwError::RankMismatch { left: self.rank, right: a.rank() });
        }
        for (axis, &v) in a.coords().iter().enumerate() {
            if 2 * v.unsigned_abs() as usize >= self.n {
                return Err(ApwError::Alias { axis, value: v, n: self.n });
            }
        }
        Ok(())
    }
}

/// Values that can be averaged over the torus.
pub trait HaarIntegrand: Sized {
    fn zero_like(&self) -> Self;
    fn add_scaled(&mut self, other: &Self, w: Complex64);
}

impl HaarIntegrand for Complex64 {
    fn zero_like(&self) -> Self {
        Complex64::new(0.0, 0.0)
    }

    fn add_scaled(&mut self, other: &Self, w: Complex64) {
        *self += other * w;
    }
}

impl HaarIntegrand for Vec<Complex64> {
    fn zero_like(&self) -> Self {
        vec![Complex64::new(0.0, 0.0); self.len()]
    }

    fn add_scaled(&mut self, other: &Self, w: Complex64) {
        self.iter_mut().zip(other).for_each(|(a, b)| *a += b * w);
    }
}

/// Normalized Haar integral `(1/n^m) Σ_j e^{2πi a·θ_j} f(θ_j)` of samples
/// given on the full torus grid. Extracts the Fourier coefficient of `f`
/// at `-a`; exact for trigonometric polynomials with `|a_i| < n/2`.
pub fn haar_average<T: HaarIntegrand>(grid: &TorusGrid, values: &[T], a: &FreqLabel) -> Result<T> {
    grid.check_alias(a)?;
    if values.len() != grid.len() {
        return Err(ApwError::TorusShape { got: values.len(), expected: grid.len() });
    }
    let mut acc = values[0].zero_like();
    for (j, v) in values.iter().enumerate() {
        acc.add_scaled(v, grid.character(j, a));
    }
    let norm = Complex64::new(1.0 / grid.len() as f64, 0.0);
    let mut out = acc.zero_like();
    out.add_scaled(&acc, norm);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn l(v: &[i64]) -> FreqLabel {
        FreqLabel::new(v.to_vec())
    }

    #[test]
    fn basis_validation() {
        assert!(FrequencyBasis::new(vec![], true).is_err());
        assert!(FrequencyBasis::new(vec![vec![0.0]], true).is_err());
        assert!(FrequencyBasis::new(vec![vec![1.0], vec![1.0]], true).is_err());
        assert!(FrequencyBasis::new(vec![vec![1.0], vec![1.0, 2.0]], true).is_err());
        assert!(FrequencyBasis::new(vec![vec![1.0]; 4], true).is_err());
    }

    #[test]
    fn label_group_laws() {
        let a = l(&[3, -2]);
        assert_eq!(a.add(&FreqLabel::zero(2)).unwrap(), a);
        assert!(a.add(&a.neg()).unwrap().is_zero());
        assert!(matches!(a.add(&l(&[1])), Err(ApwError::RankMismatch { .. })));
    }

    #[test]
    fn direct_sum_vector() {
        let basis = FrequencyBasis::new(vec![vec![1.0], vec![2f64.sqrt()]], true).unwrap();
        let s = l(&[1, 0]).add(&l(&[0, 1])).unwrap();
        assert_eq!(s, l(&[1, 1]));
        assert_eq!(basis.vector(&s).unwrap(), vec![1.0 + 2f64.sqrt()]);
    }

    #[test]
    fn trivial_characters() {
        let zero = TorusPoint::origin(2);
        assert_eq!(zero.character(&l(&[5, -7])).unwrap(), Complex64::new(1.0, 0.0));
        let t = TorusPoint::new(vec![0.3, 0.77]).unwrap();
        assert_eq!(t.character(&l(&[0, 0])).unwrap(), Complex64::new(1.0, 0.0));
        assert!(t.character(&l(&[1])).is_err());
    }

    #[test]
    fn torus_point_wraps() {
        let t = TorusPoint::new(vec![-0.25, 1.5]).unwrap();
        assert_eq!(t.coords(), &[0.75, 0.5]);
    }

    #[test]
    fn haar_average_lemma_branches() {
        let g = TorusGrid::new(2, 8).unwrap();
        let ones = vec![Complex64::new(1.0, 0.0); g.len()];
        let zero = haar_average(&g, &ones, &l(&[0, 0])).unwrap();
        assert!((zero - 1.0).norm() < 1e-15);
        let off = haar_average(&g, &ones, &l(&[1, 0])).unwrap();
        assert!(off.norm() < 1e-12);
        let f: Vec<Complex64> = (0..g.len()).map(|j| g.point(j).character(&l(&[2, 1])).unwrap().conj()).collect();
        let hit = haar_average(&g, &f, &l(&[2, 1])).unwrap();
        assert!((hit - 1.0).norm() < 1e-12);
    }

    #[test]
    fn haar_average_rejects_aliasing() {
        let g = TorusGrid::new(1, 8).unwrap();
        let f = vec![Complex64::new(1.0, 0.0); 8];
        assert!(matches!(haar_average(&g, &f, &l(&[4])), Err(ApwError::Alias { value: 4, n: 8, .. })));
        assert!(haar_average(&g, &f, &l(&[3])).is_ok());
        assert!(matches!(haar_average(&g, &f[..7], &l(&[0])), Err(ApwError::TorusShape { .. })));
    }

    /// Oracle: all pairs in the window, compared directly.
    fn brute_force_gap(basis: &FrequencyBasis, r: i64) -> f64 {
        let labels: Vec<FreqLabel> = LabelBox::new(basis.rank(), r).collect();
        let mut best = f64::INFINITY;
        for (i, a) in labels.iter().enumerate() {
            for b in &labels[i + 1..] {
                let va = basis.vector(a).unwrap();
                let vb = basis.vector(b).unwrap();
                let d = va.iter().zip(&vb).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
                best = best.min(d);
            }
        }
        best
    }

    #[test]
    fn injectivity_examples() {
        let one = FrequencyBasis::line(1.0).unwrap();
        let r = one.verify_injectivity(10, 1e-3);
        assert!(r.passed);
        assert_eq!(r.min_gap, 1.0);

        let irr = FrequencyBasis::new(vec![vec![1.0], vec![2f64.sqrt()]], true).unwrap();
        let r = irr.verify_injectivity(6, 1e-3);
        assert!(r.passed);
        assert!((r.min_gap - brute_force_gap(&irr, 6)).abs() < 1e-12);

        let dep = FrequencyBasis::new(vec![vec![1.0], vec![0.5]], true).unwrap();
        let r = dep.verify_injectivity(2, 1e-3);
        assert!(!r.passed);
        assert_eq!(brute_force_gap(&dep, 2), 0.0);
        let (a, b) = r.witness.unwrap();
        assert!(a.max_abs() <= 2 && b.max_abs() <= 2 && a != b);
        assert_eq!(dep.vector(&a).unwrap(), dep.vector(&b).unwrap());
    }

    #[test]
    fn shift_character_matches_phase() {
        let basis = FrequencyBasis::new(vec![vec![1.0], vec![2f64.sqrt()]], true).unwrap();
        let h = [3.7];
        let t = TorusPoint::from_shift(&basis, &h).unwrap();
        let a = l(&[2, -3]);
        let w = basis.vector(&a).unwrap()[0];
        let expect = Complex64::from_polar(1.0, w * h[0]);
        assert!((t.character(&a).unwrap() - expect).norm() < 1e-12);
    }

    proptest! {
        #[test]
        fn character_is_homomorphism(a in prop::collection::vec(-50i64..50, 2), b in prop::collection::vec(-50i64..50, 2),
                                     t0 in 0.0f64..1.0, t1 in 0.0f64..1.0) {
            let t = TorusPoint::new(vec![t0, t1]).unwrap();
            let (a, b) = (FreqLabel::new(a), FreqLabel::new(b));
            let lhs = t.character(&a.add(&b).unwrap()).unwrap();
            let rhs = t.character(&a).unwrap() * t.character(&b).unwrap();
            prop_assert!((lhs - rhs).norm() <= 1e-12);
            prop_assert!((lhs.norm() - 1.0).abs() <= 1e-14);
        }

        #[test]
        fn label_add_never_drifts(steps in prop::collection::vec(prop::collection::vec(-1000i64..1000, 3), 1..50)) {
            let mut acc = FreqLabel::zero(3);
            let mut exact = [0i64; 3];
            for s in &steps {
                acc = acc.add(&FreqLabel::new(s.clone())).unwrap();
                for k in 0..3 { exact[k] += s[k]; }
            }
            prop_assert_eq!(acc.coords(), &exact[..]);
        }
    }

    #[test]
    fn discrete_orthogonality_exhaustive() {
        for m in 1..=2 {
            let g = TorusGrid::new(m, 16).unwrap();
            for a in LabelBox::new(m, 7) {
                for b in LabelBox::new(m, 7) {
                    let f: Vec<Complex64> = (0..g.len()).map(|j| g.character(j, &b).conj()).collect();
                    let v = haar_average(&g, &f, &a).unwrap();
                    let expect = if a == b { 1.0 } else { 0.0 };
                    assert!((v - expect).norm() <= 1e-12);
                }
            }
        }
    }
}
