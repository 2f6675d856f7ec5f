//! Fiber matrices `T(α,β) = λ δ_{αβ} + e^{-2πi(α-β)·θ} ĝ_{α-β}(ξ + ω_β)`
//! over a label window `|α_i| ≤ R`.
//!
//! The central column of `T^{-1}` at `θ = 0` gives the symbols of the
//! inverse coefficients; sampling `ξ` on the dual grid of the working grid
//! lets an inverse FFT land the kernels back on that grid. Since
//! `T_θ = D_θ T_0 D_θ^{-1}` with `D_θ(α) = e^{-2πiα·θ}` unitary, singular
//! values do not depend on `θ` and all sweeps run at `θ = 0`.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use super::banded::{self, Band};
use super::{Diagnostics, FiberDiagnostics, InverseResult, Method};
use crate::apw::ApwOperator;
use crate::error::{ApwError, Result};
use crate::freq::{haar_average, FreqLabel, LabelBox, TorusGrid, TorusPoint};
use crate::grid::Grid;
use crate::kernel::{dual_frequencies, Kernel};
use crate::numeric::{sorted_sum, strides};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// A fiber is treated as singular when `σ_min < SINGULAR_RELATIVE · (|λ| + ‖A‖)`.
pub const SINGULAR_RELATIVE: f64 = 1e-8;
/// Invertible but with `σ_min` below this fraction of `|λ| + ‖A‖` is flagged.
pub const NEAR_CRITICAL_RELATIVE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct FiberConfig {
    /// Fixed window radius. `None` starts from the operator's own labels
    /// plus 2 and grows by 2 until the result is stable.
    pub window_radius: Option<usize>,
    /// Largest radius the adaptive search may reach; `None` picks by rank.
    pub max_window_radius: Option<usize>,
    /// Odd sample count per axis of the `ξ` grid (and of the output
    /// kernels). Defaults to the working grid.
    pub xi_count: Option<usize>,
    /// Torus grid size for Bohr extraction; must exceed `2R`.
    pub torus_n: Option<usize>,
    pub condition_cap: f64,
    /// Window stability tolerance on per-label `L_1` drift.
    pub tol: f64,
    /// Skip the invertibility certificate before inverting.
    pub skip_certificate: bool,
}

impl Default for FiberConfig {
    fn default() -> Self {
        FiberConfig {
            window_radius: None,
            max_window_radius: None,
            xi_count: None,
            torus_n: None,
            condition_cap: 1e10,
            tol: 1e-6,
            skip_certificate: false,
        }
    }
}

impl FiberConfig {
    fn validate(&self) -> Result<()> {
        if self.window_radius == Some(0) {
            return Err(ApwError::InvalidConfig("window radius must be at least 1".into()));
        }
        if let Some(n) = self.xi_count {
            if n < 3 || n % 2 == 0 {
                return Err(ApwError::InvalidConfig(format!("xi count must be odd and at least 3, got {n}")));
            }
        }
        if !(self.condition_cap > 1.0) {
            return Err(ApwError::InvalidConfig("condition cap must exceed 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(ApwError::InvalidConfig("window tolerance must be positive".into()));
        }
        Ok(())
    }

    fn max_radius(&self, rank: usize) -> usize {
        self.max_window_radius.unwrap_or(match rank {
            1 => 64,
            2 => 24,
            _ => 6,
        })
    }
}

/// Default starting radius: the operator's labels plus a margin of 2.
pub(crate) fn initial_radius(a: &ApwOperator) -> usize {
    let span = a.terms().keys().map(|l| l.max_abs()).max().unwrap_or(0);
    span as usize + 2
}

struct Window {
    rank: usize,
    radius: usize,
    labels: Vec<FreqLabel>,
}

impl Window {
    fn new(rank: usize, radius: usize) -> Self {
        Window { rank, radius, labels: LabelBox::new(rank, radius as i64).collect() }
    }

    fn len(&self) -> usize {
        self.labels.len()
    }

    fn side(&self) -> i64 {
        2 * self.radius as i64 + 1
    }

    fn index(&self, a: &FreqLabel) -> Option<usize> {
        let r = self.radius as i64;
        let mut idx = 0i64;
        for &v in a.coords() {
            if v.abs() > r {
                return None;
            }
            idx = idx * self.side() + (v + r);
        }
        Some(idx as usize)
    }

    fn zero(&self) -> usize {
        self.index(&FreqLabel::zero(self.rank)).unwrap()
    }

    /// Change of lexicographic index under translation by `nu`.
    fn offset(&self, nu: &FreqLabel) -> i64 {
        nu.coords().iter().fold(0, |acc, &v| acc * self.side() + v)
    }
}

/// A single fiber matrix, `|W|d × |W|d`, with block `(α,β)` at rows
/// `α d..` and columns `β d..` in lexicographic label order.
#[derive(Debug, Clone, PartialEq)]
pub struct FiberMatrix {
    pub xi: Vec<f64>,
    pub theta: TorusPoint,
    pub labels: Vec<FreqLabel>,
    pub dim: usize,
    pub matrix: DMatrix<Complex64>,
}

impl FiberMatrix {
    pub fn block(&self, alpha: usize, beta: usize) -> DMatrix<Complex64> {
        self.matrix.view((alpha * self.dim, beta * self.dim), (self.dim, self.dim)).into_owned()
    }

    /// Singular values in descending order.
    pub fn singular_values(&self) -> Vec<f64> {
        let mut s: Vec<f64> = self.matrix.singular_values().iter().copied().collect();
        s.sort_by(|a, b| b.total_cmp(a));
        s
    }

    /// Block column `T^{-1}(·, 0)`, `|W|d × d` row-major.
    pub fn central_column(&self) -> Result<Vec<Complex64>> {
        let n = self.matrix.nrows();
        let d = self.dim;
        let zero = self.labels.iter().position(|l| l.is_zero()).expect("window contains zero");
        let mut rhs = DMatrix::<Complex64>::zeros(n, d);
        for i in 0..d {
            rhs[(zero * d + i, i)] = Complex64::new(1.0, 0.0);
        }
        let x = self.matrix.clone().lu().solve(&rhs).ok_or_else(|| ApwError::SingularFiber {
            xi: self.xi.clone(),
            condition: f64::INFINITY,
        })?;
        let mut out = vec![ZERO; n * d];
        for r in 0..n {
            for c in 0..d {
                out[r * d + c] = x[(r, c)];
            }
        }
        if out.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(ApwError::SingularFiber { xi: self.xi.clone(), condition: f64::INFINITY });
        }
        Ok(out)
    }
}

/// Builds `T(ξ, θ)` on the window of radius `radius` by direct symbol
/// evaluation.
pub fn build_fiber(a: &ApwOperator, xi: &[f64], theta: &TorusPoint, radius: usize) -> Result<FiberMatrix> {
    let basis = a.basis();
    if xi.len() != basis.space_dim() {
        return Err(ApwError::SpaceDimMismatch { left: basis.space_dim(), right: xi.len() });
    }
    if theta.rank() != basis.rank() {
        return Err(ApwError::RankMismatch { left: basis.rank(), right: theta.rank() });
    }
    if radius == 0 {
        return Err(ApwError::InvalidConfig("window radius must be at least 1".into()));
    }
    let w = Window::new(basis.rank(), radius);
    let d = a.dim();
    let n = w.len() * d;
    let mut m = DMatrix::<Complex64>::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = a.lambda();
    }
    for (bi, beta) in w.labels.iter().enumerate() {
        let omega_beta = basis.vector(beta)?;
        let shifted: Vec<f64> = xi.iter().zip(&omega_beta).map(|(x, o)| x + o).collect();
        for (nu, g) in a.terms() {
            let alpha = beta.add(nu)?;
            let Some(ai) = w.index(&alpha) else { continue };
            let phase = theta.character(nu)?.conj();
            let s = g.symbol(&shifted).value;
            for r in 0..d {
                for c in 0..d {
                    m[(ai * d + r, bi * d + c)] += phase * s[r * d + c];
                }
            }
        }
    }
    Ok(FiberMatrix { xi: xi.to_vec(), theta: theta.clone(), labels: w.labels, dim: d, matrix: m })
}

/// Dual-grid symbol tables `ĝ_ν(ξ_q + ω_β)` for every term and every
/// window label `β` whose translate stays in the window.
struct SymbolTables {
    xi_shape: Vec<usize>,
    xi_axes: Vec<Vec<f64>>,
    window: Window,
    dim: usize,
    lambda: Complex64,
    /// `(row label, column label, symbols over ξ)`.
    entries: Vec<(usize, usize, Vec<Complex64>)>,
    band: Band,
}

impl SymbolTables {
    fn new(a: &ApwOperator, radius: usize, xi_shape: &[usize]) -> Result<Self> {
        let basis = a.basis();
        let window = Window::new(basis.rank(), radius);
        let d = a.dim();
        let steps = a.grid().steps();
        let mut planner = FftPlanner::new();
        let mut entries = Vec::new();
        let (mut lower, mut upper) = (0i64, 0i64);
        for (nu, g) in a.terms() {
            let off = window.offset(nu);
            let mut used = false;
            for (bi, beta) in window.labels.iter().enumerate() {
                let alpha = beta.add(nu)?;
                let Some(ai) = window.index(&alpha) else { continue };
                used = true;
                let omega_beta = basis.vector(beta)?;
                entries.push((ai, bi, g.dual_symbols(&omega_beta, xi_shape, &mut planner)));
            }
            if used {
                lower = lower.max(off);
                upper = upper.max(-off);
            }
        }
        let band = Band {
            lower: lower as usize * d + d - 1,
            upper: upper as usize * d + d - 1,
        };
        let xi_axes = steps.iter().zip(xi_shape).map(|(&h, &n)| dual_frequencies(h, n)).collect();
        Ok(SymbolTables { xi_shape: xi_shape.to_vec(), xi_axes, window, dim: d, lambda: a.lambda(), entries, band })
    }

    fn points(&self) -> usize {
        self.xi_shape.iter().product()
    }

    fn xi(&self, q: usize) -> Vec<f64> {
        let st = strides(&self.xi_shape);
        self.xi_axes.iter().zip(&st).zip(&self.xi_shape).map(|((ax, &s), &n)| ax[(q / s) % n]).collect()
    }

    /// Row-major `T(ξ_q, 0)`.
    fn assemble(&self, q: usize) -> Vec<Complex64> {
        let d = self.dim;
        let n = self.window.len() * d;
        let b = d * d;
        let mut m = vec![ZERO; n * n];
        for i in 0..n {
            m[i * n + i] = self.lambda;
        }
        for (ai, bi, sym) in &self.entries {
            let blk = &sym[q * b..(q + 1) * b];
            for r in 0..d {
                for c in 0..d {
                    m[(ai * d + r) * n + bi * d + c] += blk[r * d + c];
                }
            }
        }
        m
    }

    fn singular_extremes(&self, q: usize) -> (f64, f64) {
        let n = self.window.len() * self.dim;
        let m = DMatrix::from_row_slice(n, n, &self.assemble(q));
        let s = m.singular_values();
        let max = s.iter().copied().fold(0.0, f64::max);
        let min = s.iter().copied().fold(f64::INFINITY, f64::min);
        (min, max)
    }

    fn central_column(&self, q: usize) -> Result<Vec<Complex64>> {
        let d = self.dim;
        let n = self.window.len() * d;
        let mut m = self.assemble(q);
        let mut rhs = vec![ZERO; n * d];
        let z = self.window.zero();
        for i in 0..d {
            rhs[(z * d + i) * d + i] = Complex64::new(1.0, 0.0);
        }
        banded::solve(&mut m, n, self.band, &mut rhs, d)
            .map_err(|_| ApwError::SingularFiber { xi: self.xi(q), condition: f64::INFINITY })?;
        if rhs.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(ApwError::SingularFiber { xi: self.xi(q), condition: f64::INFINITY });
        }
        Ok(rhs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    EvidenceInvertible,
    EvidenceSingular,
}

impl Verdict {
    pub fn name(self) -> &'static str {
        match self {
            Verdict::EvidenceInvertible => "evidence-invertible",
            Verdict::EvidenceSingular => "evidence-singular",
        }
    }
}

/// Numerical evidence of invertibility from fiber singular values over the
/// `ξ` grid. Not a proof: it samples finitely many truncated fibers.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub window_radius: usize,
    pub xi_shape: Vec<usize>,
    pub scale: f64,
    pub threshold: f64,
    pub condition_cap: f64,
    pub min_sigma: f64,
    pub min_sigma_xi: Vec<f64>,
    pub max_condition: f64,
    pub max_condition_xi: Vec<f64>,
    /// Per `ξ` sample, row-major over the grid.
    pub sigma_min: Vec<f64>,
    pub sigma_max: Vec<f64>,
    pub verdict: Verdict,
    pub near_critical: bool,
}

impl Certificate {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::EvidenceInvertible
    }
}

impl fmt::Display for Certificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "verdict: {}", self.verdict.name())?;
        writeln!(f, "window_radius: {}", self.window_radius)?;
        let shape: Vec<String> = self.xi_shape.iter().map(|n| n.to_string()).collect();
        writeln!(f, "xi_samples: {}", shape.join("x"))?;
        writeln!(f, "theta_samples: 1 (theta = 0)")?;
        writeln!(f, "min_singular_value: {:e}", self.min_sigma)?;
        writeln!(f, "min_singular_value_at_xi: {:?}", self.min_sigma_xi)?;
        writeln!(f, "max_condition_number: {:e}", self.max_condition)?;
        writeln!(f, "max_condition_at_xi: {:?}", self.max_condition_xi)?;
        writeln!(f, "singular_threshold: {:e} (= {:e} * (|lambda| + apw_norm))", self.threshold, SINGULAR_RELATIVE)?;
        writeln!(f, "condition_cap: {:e}", self.condition_cap)?;
        writeln!(
            f,
            "note: the theta sweep is redundant; T(xi, theta) = D T(xi, 0) D^-1 with D diagonal unitary, \
             so singular values are the same for every theta"
        )?;
        writeln!(
            f,
            "note: this is numerical evidence from finitely many truncated fibers, not a proof of invertibility"
        )?;
        if self.near_critical {
            writeln!(f, "warning: near-critical; smallest singular value is within {NEAR_CRITICAL_RELATIVE:e} of the operator scale")?;
        }
        Ok(())
    }
}

fn xi_shape(a: &ApwOperator, config: &FiberConfig) -> Vec<usize> {
    match config.xi_count {
        Some(n) => vec![n; a.grid().dim()],
        None => a.grid().shape(),
    }
}

fn certify_tables(a: &ApwOperator, tables: &SymbolTables, cap: f64) -> Certificate {
    let extremes: Vec<(f64, f64)> = (0..tables.points()).into_par_iter().map(|q| tables.singular_extremes(q)).collect();
    let scale = a.lambda().norm() + a.apw_norm();
    let threshold = SINGULAR_RELATIVE * scale;
    let (mut min_q, mut cond_q) = (0, 0);
    let mut max_condition: f64 = 0.0;
    for (q, &(lo, hi)) in extremes.iter().enumerate() {
        if lo < extremes[min_q].0 {
            min_q = q;
        }
        let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        if cond > max_condition {
            max_condition = cond;
            cond_q = q;
        }
    }
    let min_sigma = extremes[min_q].0;
    let verdict = if min_sigma < threshold { Verdict::EvidenceSingular } else { Verdict::EvidenceInvertible };
    Certificate {
        window_radius: tables.window.radius,
        xi_shape: tables.xi_shape.clone(),
        scale,
        threshold,
        condition_cap: cap,
        min_sigma,
        min_sigma_xi: tables.xi(min_q),
        max_condition,
        max_condition_xi: tables.xi(cond_q),
        sigma_min: extremes.iter().map(|e| e.0).collect(),
        sigma_max: extremes.iter().map(|e| e.1).collect(),
        verdict,
        near_critical: verdict == Verdict::EvidenceInvertible && min_sigma < NEAR_CRITICAL_RELATIVE * scale,
    }
}

/// Sweeps `ξ` over the dual grid at `θ = 0` and records fiber singular
/// values.
pub fn certify_invertibility(a: &ApwOperator, config: &FiberConfig) -> Result<Certificate> {
    config.validate()?;
    let radius = config.window_radius.unwrap_or_else(|| initial_radius(a));
    let tables = SymbolTables::new(a, radius, &xi_shape(a, config))?;
    Ok(certify_tables(a, &tables, config.condition_cap))
}

/// Inverse coefficients from one window: label -> kernel on the output grid.
fn solve_window(a: &ApwOperator, radius: usize, shape: &[usize]) -> Result<BTreeMap<FreqLabel, Kernel>> {
    let tables = SymbolTables::new(a, radius, shape)?;
    let columns: Vec<Vec<Complex64>> =
        (0..tables.points()).into_par_iter().map(|q| tables.central_column(q)).collect::<Result<_>>()?;
    let d = a.dim();
    let b = d * d;
    let mu = Complex64::new(1.0, 0.0) / a.lambda();
    let steps = a.grid().steps();
    let labels = &tables.window.labels;
    let kernels: Vec<(FreqLabel, Kernel)> = labels
        .par_iter()
        .enumerate()
        .map(|(ai, label)| {
            let mut sym = vec![ZERO; columns.len() * b];
            for (q, col) in columns.iter().enumerate() {
                for r in 0..d {
                    for c in 0..d {
                        let mut v = col[(ai * d + r) * d + c];
                        if label.is_zero() && r == c {
                            v -= mu;
                        }
                        sym[q * b + r * d + c] = v;
                    }
                }
            }
            let mut planner = FftPlanner::new();
            Ok((label.clone(), Kernel::from_dual_symbols(&steps, shape, d, &sym, &mut planner)?))
        })
        .collect::<Result<_>>()?;
    Ok(kernels.into_iter().collect())
}

fn total_mass(terms: &BTreeMap<FreqLabel, Kernel>) -> f64 {
    sorted_sum(terms.values().map(|k| k.l1_norm()).collect())
}

/// Largest per-label `L_1` distance; missing labels count as zero kernels.
fn window_drift(small: &BTreeMap<FreqLabel, Kernel>, large: &BTreeMap<FreqLabel, Kernel>) -> Result<f64> {
    let mut drift: f64 = 0.0;
    for (label, k) in large {
        let diff = match small.get(label) {
            Some(s) => k.add(&s.scale(Complex64::new(-1.0, 0.0)))?.l1_norm(),
            None => k.l1_norm(),
        };
        drift = drift.max(diff);
    }
    for (label, k) in small {
        if !large.contains_key(label) {
            drift = drift.max(k.l1_norm());
        }
    }
    Ok(drift)
}

/// `(λ + N)^{-1} = μ + M` from the central columns of inverted fibers.
///
/// With no fixed radius the window starts at the operator's labels plus 2
/// and grows by 2 until two consecutive windows agree to `config.tol`; the
/// larger window's result is returned.
pub fn invert_fiber(a: &ApwOperator, config: &FiberConfig) -> Result<InverseResult> {
    config.validate()?;
    if a.lambda() == ZERO {
        return Err(ApwError::ZeroUnit);
    }
    let shape = xi_shape(a, config);
    let rank = a.basis().rank();
    let start = config.window_radius.unwrap_or_else(|| initial_radius(a));
    let mut warnings = Vec::new();

    let certificate = if config.skip_certificate {
        None
    } else {
        let tables = SymbolTables::new(a, start, &shape)?;
        let cert = certify_tables(a, &tables, config.condition_cap);
        if cert.max_condition > config.condition_cap || !cert.passed() {
            return Err(ApwError::SingularFiber { xi: cert.max_condition_xi.clone(), condition: cert.max_condition });
        }
        if cert.near_critical {
            warnings.push(format!(
                "near-critical operator: smallest fiber singular value {:e} at xi = {:?}",
                cert.min_sigma, cert.min_sigma_xi
            ));
        }
        Some(cert)
    };
    // near-critical inverses decay slowly; loosen the window test accordingly
    let tol = if certificate.as_ref().is_some_and(|c| c.near_critical) { config.tol * 100.0 } else { config.tol };

    let adaptive = config.window_radius.is_none();
    let max_radius = config.max_radius(rank).max(start + 2);
    let mut radius = start;
    let mut current = solve_window(a, radius, &shape)?;
    let (result, drift, mass_drift) = loop {
        let next = solve_window(a, radius + 2, &shape)?;
        let drift = window_drift(&current, &next)?;
        if drift < tol {
            let mass_drift = (total_mass(&next) - total_mass(&current)).abs();
            break (next, drift, mass_drift);
        }
        if !adaptive || radius + 4 > max_radius {
            return Err(ApwError::WindowTooSmall { radius, drift, tol });
        }
        radius += 2;
        current = next;
    };

    let grid = Grid::centered(&a.grid().steps(), &shape)?;
    let mut inverse = ApwOperator::new(a.basis().clone(), grid, a.dim(), Complex64::new(1.0, 0.0) / a.lambda())?;
    inverse.set_drop_threshold(a.drop_threshold());
    for (label, k) in result {
        inverse.insert_term(label, k)?;
    }
    let diagnostics = FiberDiagnostics {
        window_radius: radius + 2,
        compared_radius: radius,
        drift,
        mass_drift,
        xi_shape: shape,
        certificate,
        warnings,
    };
    Ok(InverseResult::new(inverse, Method::Fiber, Diagnostics::Fiber(diagnostics)))
}

/// Central columns of `T(ξ, θ_j)^{-1}` for every point of a torus grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TorusFibers {
    pub xi: Vec<f64>,
    pub grid: TorusGrid,
    pub labels: Vec<FreqLabel>,
    pub dim: usize,
    pub columns: Vec<Vec<Complex64>>,
}

pub fn invert_fibers_on_torus(a: &ApwOperator, xi: &[f64], radius: usize, torus_n: usize) -> Result<TorusFibers> {
    if torus_n <= 2 * radius {
        return Err(ApwError::InvalidConfig(format!(
            "torus grid size {torus_n} must exceed twice the window radius {radius}"
        )));
    }
    let grid = TorusGrid::new(a.basis().rank(), torus_n)?;
    let columns: Vec<Vec<Complex64>> = (0..grid.len())
        .into_par_iter()
        .map(|j| build_fiber(a, xi, &grid.point(j), radius)?.central_column())
        .collect::<Result<_>>()?;
    let labels = LabelBox::new(a.basis().rank(), radius as i64).collect();
    Ok(TorusFibers { xi: xi.to_vec(), grid, labels, dim: a.dim(), columns })
}

fn column_block(labels: &[FreqLabel], dim: usize, column: &[Complex64], label: &FreqLabel) -> Vec<Complex64> {
    match labels.iter().position(|l| l == label) {
        Some(ai) => column[ai * dim * dim..(ai + 1) * dim * dim].to_vec(),
        None => vec![ZERO; dim * dim],
    }
}

/// `d×d` block `S(a, 0)` recovered as the Haar average of
/// `e^{2πi a·θ} S_θ(·, 0)` over the torus grid. For `a = 0` this includes
/// the unit part `μ`.
pub fn extract_coefficient_bohr(fibers: &TorusFibers, label: &FreqLabel) -> Result<Vec<Complex64>> {
    let avg = haar_average(&fibers.grid, &fibers.columns, label)?;
    Ok(column_block(&fibers.labels, fibers.dim, &avg, label))
}

/// The same block read directly from the `θ = 0` fiber.
pub fn direct_coefficient(a: &ApwOperator, xi: &[f64], radius: usize, label: &FreqLabel) -> Result<Vec<Complex64>> {
    let fiber = build_fiber(a, xi, &TorusPoint::origin(a.basis().rank()), radius)?;
    let col = fiber.central_column()?;
    Ok(column_block(&fiber.labels, fiber.dim, &col, label))
}
