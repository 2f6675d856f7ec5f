//! Inversion of `λ + N` within the class, by Neumann series or by
//! truncated fiber matrices, plus residual checks.

mod banded;
mod fiber;
mod neumann;
mod verify;

use std::fmt;

use num_complex::Complex64;

use crate::apw::ApwOperator;
use crate::error::{ApwError, Result};
use crate::freq::FreqLabel;

pub use fiber::{
    build_fiber, certify_invertibility, direct_coefficient, extract_coefficient_bohr, invert_fiber,
    invert_fibers_on_torus, Certificate, FiberConfig, FiberMatrix, TorusFibers, Verdict,
};
pub use neumann::{invert_neumann, neumann_terms};
pub use verify::{verify_inverse, ResidualReport, VerifyConfig};

/// Above this contraction ratio `auto` switches from Neumann to fibers.
pub const AUTO_NEUMANN_LIMIT: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Neumann,
    Fiber,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Neumann => "neumann",
            Method::Fiber => "fiber",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodChoice {
    Auto,
    Neumann,
    Fiber,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayRow {
    pub label: FreqLabel,
    pub l1_norm: f64,
    pub cumulative: f64,
}

/// Coefficient norms ordered by `|a|_1`, then lexicographically.
pub fn decay_table(op: &ApwOperator) -> Vec<DecayRow> {
    let mut rows: Vec<(FreqLabel, f64)> = op.terms().iter().map(|(l, k)| (l.clone(), k.l1_norm())).collect();
    rows.sort_by(|a, b| a.0.abs_sum().cmp(&b.0.abs_sum()).then_with(|| a.0.cmp(&b.0)));
    let mut cumulative = 0.0;
    rows.into_iter()
        .map(|(label, l1_norm)| {
            cumulative += l1_norm;
            DecayRow { label, l1_norm, cumulative }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeumannDiagnostics {
    pub q: f64,
    pub terms: usize,
    /// `q^{J+1} / ((1 - q)|λ|)`.
    pub tail_bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiberDiagnostics {
    pub window_radius: usize,
    /// Radius of the smaller window the result was compared against.
    pub compared_radius: usize,
    /// Largest `‖m_a^{R} - m_a^{R-2}‖_{L_1}` over labels.
    pub drift: f64,
    /// `|Σ_a ‖m_a^{R}‖ - Σ_a ‖m_a^{R-2}‖|`.
    pub mass_drift: f64,
    pub xi_shape: Vec<usize>,
    pub certificate: Option<Certificate>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Diagnostics {
    Neumann(NeumannDiagnostics),
    Fiber(FiberDiagnostics),
}

/// `μ + M` with its method and decay table.
#[derive(Debug, Clone, PartialEq)]
pub struct InverseResult {
    pub inverse: ApwOperator,
    pub method: Method,
    pub decay: Vec<DecayRow>,
    pub diagnostics: Diagnostics,
}

impl InverseResult {
    pub(crate) fn new(inverse: ApwOperator, method: Method, diagnostics: Diagnostics) -> Self {
        let decay = decay_table(&inverse);
        InverseResult { inverse, method, decay, diagnostics }
    }

    pub fn mu(&self) -> Complex64 {
        self.inverse.lambda()
    }

    pub fn warnings(&self) -> &[String] {
        match &self.diagnostics {
            Diagnostics::Neumann(_) => &[],
            Diagnostics::Fiber(f) => &f.warnings,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvertOptions {
    pub method: MethodChoice,
    /// Neumann tail target.
    pub tol: f64,
    pub max_terms: usize,
    pub fiber: FiberConfig,
}

impl Default for InvertOptions {
    fn default() -> Self {
        InvertOptions { method: MethodChoice::Auto, tol: 1e-10, max_terms: 500, fiber: FiberConfig::default() }
    }
}

/// Dispatches on `options.method`; `Auto` uses Neumann when
/// `q < AUTO_NEUMANN_LIMIT`.
pub fn invert(a: &ApwOperator, options: &InvertOptions) -> Result<InverseResult> {
    if a.lambda() == Complex64::new(0.0, 0.0) {
        return Err(ApwError::ZeroUnit);
    }
    let method = match options.method {
        MethodChoice::Neumann => Method::Neumann,
        MethodChoice::Fiber => Method::Fiber,
        MethodChoice::Auto if a.neumann_ratio() < AUTO_NEUMANN_LIMIT => Method::Neumann,
        MethodChoice::Auto => Method::Fiber,
    };
    match method {
        Method::Neumann => invert_neumann(a, options.tol, options.max_terms),
        Method::Fiber => invert_fiber(a, &options.fiber),
    }
}
