//! The unitalized algebra of operators `λ·1 + Σ_ω Ψ_ω G_{g_ω}`.
//!
//! Coefficients are keyed by exact integer labels over a
//! [`FrequencyBasis`]; frequency bookkeeping in products never compares
//! floats. All reductions run in lexicographic label order, so results are
//! reproducible bit for bit regardless of thread count.

use crate::error::{ApwError, Result};
use crate::freq::{FreqLabel, FrequencyBasis, TorusPoint};
use crate::grid::{Grid, SampledFunction};
use crate::kernel::Kernel;
use crate::numeric::sorted_sum;
use num_complex::Complex64;
use rayon::prelude::*;
use std::collections::BTreeMap;

/// Kernels with `L_1` norm at or below this are dropped into the slack.
pub const DEFAULT_DROP_THRESHOLD: f64 = 1e-14;

/// An operator `λ + Σ_a Ψ_{ω_a} G_{g_a}` acting on functions ℝ^c → ℂ^d.
///
/// `grid` is the working grid: the centered grid on which inverse kernels
/// are reconstructed and to which long products may be truncated. Term
/// kernels may have any centered support with the same steps.
#[derive(Debug, Clone, PartialEq)]
pub struct ApwOperator {
    basis: FrequencyBasis,
    grid: Grid,
    dim: usize,
    lambda: Complex64,
    terms: BTreeMap<FreqLabel, Kernel>,
    slack: f64,
    drop_threshold: f64,
}

/// `|λ| + Σ_a ‖g_a‖_{L_1}` broken down by label.
#[derive(Debug, Clone, PartialEq)]
pub struct ApwNormBreakdown {
    pub unit: f64,
    pub per_label: Vec<(FreqLabel, f64)>,
    pub total: f64,
    /// Mass dropped by pruning or truncation; not part of `total`.
    pub slack: f64,
}

impl ApwOperator {
    pub fn new(basis: FrequencyBasis, grid: Grid, dim: usize, lambda: Complex64) -> Result<Self> {
        if !grid.is_centered() {
            return Err(ApwError::InvalidGrid("working grid must be centered with odd counts".into()));
        }
        if grid.dim() != basis.space_dim() {
            return Err(ApwError::SpaceDimMismatch { left: basis.space_dim(), right: grid.dim() });
        }
        if dim == 0 || dim > 2 {
            return Err(ApwError::InvalidKernel(format!("matrix dimension must be 1 or 2, got {dim}")));
        }
        if !lambda.re.is_finite() || !lambda.im.is_finite() {
            return Err(ApwError::InvalidConfig("unit coefficient must be finite".into()));
        }
        Ok(ApwOperator {
            basis,
            grid,
            dim,
            lambda,
            terms: BTreeMap::new(),
            slack: 0.0,
            drop_threshold: DEFAULT_DROP_THRESHOLD,
        })
    }

    pub fn identity(basis: FrequencyBasis, grid: Grid, dim: usize) -> Result<Self> {
        Self::new(basis, grid, dim, Complex64::new(1.0, 0.0))
    }

    /// Adds a coefficient at a label not yet present.
    pub fn insert_term(&mut self, label: FreqLabel, kernel: Kernel) -> Result<()> {
        self.basis.check_rank(&label)?;
        self.grid.check_same_step(kernel.grid())?;
        if kernel.dim() != self.dim {
            return Err(ApwError::ValueDimMismatch { left: self.dim, right: kernel.dim() });
        }
        if self.terms.contains_key(&label) {
            return Err(ApwError::DuplicateLabel(label.to_string()));
        }
        if kernel.l1_norm() <= self.drop_threshold {
            self.slack += kernel.l1_norm();
        } else {
            self.terms.insert(label, kernel);
        }
        Ok(())
    }

    pub fn with_term(mut self, label: FreqLabel, kernel: Kernel) -> Result<Self> {
        self.insert_term(label, kernel)?;
        Ok(self)
    }

    pub fn basis(&self) -> &FrequencyBasis {
        &self.basis
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lambda(&self) -> Complex64 {
        self.lambda
    }

    pub fn terms(&self) -> &BTreeMap<FreqLabel, Kernel> {
        &self.terms
    }

    pub fn term(&self, label: &FreqLabel) -> Option<&Kernel> {
        self.terms.get(label)
    }

    pub fn slack(&self) -> f64 {
        self.slack
    }

    pub fn drop_threshold(&self) -> f64 {
        self.drop_threshold
    }

    pub fn set_drop_threshold(&mut self, threshold: f64) {
        self.drop_threshold = threshold;
    }

    /// Same operator with a different working grid (same steps).
    pub fn with_grid(mut self, grid: Grid) -> Result<Self> {
        self.grid.check_same_step(&grid)?;
        if !grid.is_centered() {
            return Err(ApwError::InvalidGrid("working grid must be centered with odd counts".into()));
        }
        self.grid = grid;
        Ok(self)
    }

    pub fn with_lambda(mut self, lambda: Complex64) -> Self {
        self.lambda = lambda;
        self
    }

    /// The `N` part: same terms, zero unit coefficient.
    pub fn without_unit(&self) -> Self {
        self.clone().with_lambda(Complex64::new(0.0, 0.0))
    }

    pub fn norm(&self) -> ApwNormBreakdown {
        let per_label: Vec<(FreqLabel, f64)> = self.terms.iter().map(|(l, k)| (l.clone(), k.l1_norm())).collect();
        let unit = self.lambda.norm();
        let total = unit + sorted_sum(per_label.iter().map(|(_, v)| *v).collect());
        ApwNormBreakdown { unit, per_label, total, slack: self.slack }
    }

    /// `|λ| + Σ ‖g_a‖_{L_1}`.
    pub fn apw_norm(&self) -> f64 {
        self.norm().total
    }

    /// `(apw_norm - |λ|) / |λ|`, the Neumann contraction ratio.
    pub fn neumann_ratio(&self) -> f64 {
        let n = self.norm();
        (n.total - n.unit) / n.unit
    }

    fn check_compatible(&self, other: &ApwOperator) -> Result<()> {
        if self.basis != other.basis {
            return Err(ApwError::BasisMismatch);
        }
        self.grid.check_same_step(&other.grid)?;
        if self.dim != other.dim {
            return Err(ApwError::ValueDimMismatch { left: self.dim, right: other.dim });
        }
        Ok(())
    }

    pub(crate) fn prune(&mut self) {
        let threshold = self.drop_threshold;
        let mut dropped = Vec::new();
        self.terms.retain(|_, k| {
            let keep = k.l1_norm() > threshold;
            if !keep {
                dropped.push(k.l1_norm());
            }
            keep
        });
        self.slack += sorted_sum(dropped);
    }

    /// Folds `(label, kernel)` contributions in the given order.
    fn accumulate(&mut self, parts: Vec<(FreqLabel, Kernel)>) -> Result<()> {
        for (label, k) in parts {
            match self.terms.get_mut(&label) {
                Some(existing) => *existing = existing.add(&k)?,
                None => {
                    self.terms.insert(label, k);
                }
            }
        }
        Ok(())
    }

    pub fn add(&self, other: &ApwOperator) -> Result<ApwOperator> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        out.grid = self.grid.centered_union(&other.grid)?;
        out.lambda += other.lambda;
        out.slack += other.slack;
        out.accumulate(other.terms.iter().map(|(l, k)| (l.clone(), k.clone())).collect())?;
        out.prune();
        Ok(out)
    }

    pub fn scale(&self, alpha: Complex64) -> ApwOperator {
        let mut out = self.clone();
        out.lambda *= alpha;
        out.slack *= alpha.norm();
        if alpha == Complex64::new(0.0, 0.0) {
            out.terms.clear();
            out.slack = 0.0;
            return out;
        }
        for k in out.terms.values_mut() {
            *k = k.scale(alpha);
        }
        out.prune();
        out
    }

    pub fn sub(&self, other: &ApwOperator) -> Result<ApwOperator> {
        self.add(&other.scale(Complex64::new(-1.0, 0.0)))
    }

    /// Product `self ∘ other`, using
    /// `(Ψ_ω G_g)(Ψ_ν G_h) = Ψ_{ω+ν} G_{(g e^{-i⟨ν,·⟩}) * h}`.
    pub fn compose(&self, other: &ApwOperator) -> Result<ApwOperator> {
        self.check_compatible(other)?;
        let mut out = ApwOperator::new(
            self.basis.clone(),
            self.grid.centered_union(&other.grid)?,
            self.dim,
            self.lambda * other.lambda,
        )?;
        out.drop_threshold = self.drop_threshold.min(other.drop_threshold);
        let (na, nb) = (self.apw_norm(), other.apw_norm());
        out.slack = self.slack * nb + na * other.slack + self.slack * other.slack;

        let mut parts: Vec<(FreqLabel, Kernel)> = Vec::new();
        if self.lambda != Complex64::new(0.0, 0.0) {
            parts.extend(other.terms.iter().map(|(l, h)| (l.clone(), h.scale(self.lambda))));
        }
        if other.lambda != Complex64::new(0.0, 0.0) {
            parts.extend(self.terms.iter().map(|(l, g)| (l.clone(), g.scale(other.lambda))));
        }
        let pairs: Vec<(&FreqLabel, &Kernel, &FreqLabel, &Kernel)> = self
            .terms
            .iter()
            .flat_map(|(lw, g)| other.terms.iter().map(move |(ln, h)| (lw, g, ln, h)))
            .collect();
        let products: Vec<(FreqLabel, Kernel)> = pairs
            .par_iter()
            .map(|&(lw, g, ln, h)| {
                let nu = self.basis.vector(ln)?;
                let k = g.modulate(&nu).convolve(h)?;
                Ok((lw.add(ln)?, k))
            })
            .collect::<Result<_>>()?;
        parts.extend(products);
        out.accumulate(parts)?;
        out.prune();
        Ok(out)
    }

    /// `λ u + Σ_a Ψ_{ω_a} G_{g_a} u` on u's grid.
    pub fn apply(&self, u: &SampledFunction) -> Result<SampledFunction> {
        self.grid.check_same_step(u.grid())?;
        if u.dim() != self.dim {
            return Err(ApwError::ValueDimMismatch { left: self.dim, right: u.dim() });
        }
        let terms: Vec<(&FreqLabel, &Kernel)> = self.terms.iter().collect();
        let pieces: Vec<SampledFunction> = terms
            .par_iter()
            .map(|(l, g)| Ok(g.apply_conv(u)?.modulate(&self.basis.vector(l)?)))
            .collect::<Result<_>>()?;
        let mut out = u.scale(self.lambda);
        for p in &pieces {
            out.add_assign_unchecked(p);
        }
        Ok(out)
    }

    /// `K{h} = S_h K S_{-h} = λ + Σ e^{-i⟨ω_a,h⟩} Ψ_{ω_a} G_{g_a}`. The shift
    /// need not be grid-aligned.
    pub fn conjugate_shift(&self, h: &[f64]) -> Result<ApwOperator> {
        if h.len() != self.basis.space_dim() {
            return Err(ApwError::SpaceDimMismatch { left: self.basis.space_dim(), right: h.len() });
        }
        self.rotate(|l| {
            let w = self.basis.vector(l)?;
            let phase: f64 = w.iter().zip(h).map(|(a, b)| a * b).sum();
            Ok(Complex64::from_polar(1.0, -phase))
        })
    }

    /// `K{θ}`: the term at label `a` picks up `e^{-2πi a·θ}`. Agrees with
    /// [`ApwOperator::conjugate_shift`] when `θ` is the image of a real shift.
    pub fn evaluate_character(&self, theta: &TorusPoint) -> Result<ApwOperator> {
        if theta.rank() != self.basis.rank() {
            return Err(ApwError::RankMismatch { left: self.basis.rank(), right: theta.rank() });
        }
        self.rotate(|l| Ok(theta.character(l)?.conj()))
    }

    fn rotate(&self, phase: impl Fn(&FreqLabel) -> Result<Complex64>) -> Result<ApwOperator> {
        let mut out = self.clone();
        for (l, k) in out.terms.iter_mut() {
            let z = phase(l)?;
            let l1 = k.l1_norm();
            *k = k.scale(z);
            debug_assert!((k.l1_norm() - l1).abs() <= 1e-12 * l1.max(1.0));
        }
        Ok(out)
    }

    /// The slice `y ↦ Σ_a e^{i⟨ω_a,x⟩} g_a(y)` of the two-variable kernel
    /// `n(x, y)`, so that `(A u)(x) = λ u(x) + ∫ n(x, x - y) u(y) dy`.
    /// The unit part is not included.
    pub fn kernel_of(&self, x: &[f64]) -> Result<Kernel> {
        if x.len() != self.basis.space_dim() {
            return Err(ApwError::SpaceDimMismatch { left: self.basis.space_dim(), right: x.len() });
        }
        let mut grid = Grid::centered(&self.grid.steps(), &vec![3; x.len()])?;
        for k in self.terms.values() {
            grid = grid.centered_union(k.grid())?;
        }
        let mut acc = Kernel::zeros(grid.clone(), self.dim)?;
        for (l, k) in &self.terms {
            let w = self.basis.vector(l)?;
            let phase: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum();
            acc = acc.add(&k.scale(Complex64::from_polar(1.0, phase)).embed(&grid)?)?;
        }
        Ok(acc)
    }

    /// Cuts every kernel to the working grid, moving the removed mass into
    /// the slack.
    pub fn truncate_support(&self) -> Result<ApwOperator> {
        let half: Vec<usize> = self.grid.axes().iter().map(|a| a.center()).collect();
        let mut out = self.clone();
        let mut removed = Vec::new();
        for k in out.terms.values_mut() {
            let (t, r) = k.truncate(&half)?;
            removed.push(r);
            *k = t;
        }
        out.slack += sorted_sum(removed);
        out.prune();
        Ok(out)
    }

    /// Labels carrying a coefficient, in lexicographic order.
    pub fn labels(&self) -> Vec<FreqLabel> {
        self.terms.keys().cloned().collect()
    }
}
