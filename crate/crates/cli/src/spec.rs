//! Operator spec files (JSON).
//!
//! ```json
//! {
//!   "format_version": 1,
//!   "c": 1,
//!   "d": 1,
//!   "basis": [[1.0]],
//!   "grid": { "step": 0.03125, "half_width": 32.0 },
//!   "lambda": [1.0, 0.0],
//!   "terms": [
//!     { "label": [0], "kernel": { "kind": "exp-one-sided", "gamma": 0.5, "rate": 1.0 } }
//!   ]
//! }
//! ```
//!
//! Numbers are written in shortest round-trip decimal form, so reading a
//! written file reproduces every `f64` exactly. `samples` kernels list
//! `re`/`im` row-major over the grid with a row-major d×d block per sample.

use std::fs;
use std::path::Path;

use apw_core::invert::FiberConfig;
use apw_core::{ApwOperator, Complex64, FreqLabel, FrequencyBasis, Grid, Kernel, KernelSource, Profile};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const FORMAT_VERSION: u32 = 1;

/// Gap below which two window labels are considered the same frequency.
pub const INJECTIVITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorSpec {
    pub format_version: u32,
    pub c: usize,
    pub d: usize,
    pub basis: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub declared_independent: bool,
    pub grid: GridSpec,
    pub lambda: [f64; 2],
    #[serde(default)]
    pub terms: Vec<TermSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fiber: Option<FiberOverrides>,
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub step: f64,
    pub half_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    pub label: Vec<i64>,
    pub kernel: KernelSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum KernelSpec {
    Gaussian {
        mass: f64,
        width: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        coeff: Option<Vec<[f64; 2]>>,
    },
    ExpOneSided {
        gamma: f64,
        rate: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        coeff: Option<Vec<[f64; 2]>>,
    },
    RaisedCosine {
        mass: f64,
        width: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        coeff: Option<Vec<[f64; 2]>>,
    },
    Samples {
        grid: SampleGrid,
        re: Vec<f64>,
        im: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleGrid {
    pub step: f64,
    /// Odd sample count per axis.
    pub count: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub torus_n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition_cap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
}

impl FiberOverrides {
    pub fn apply(&self, config: &mut FiberConfig) {
        if self.window.is_some() {
            config.window_radius = self.window;
        }
        if self.xi_count.is_some() {
            config.xi_count = self.xi_count;
        }
        if self.torus_n.is_some() {
            config.torus_n = self.torus_n;
        }
        if let Some(cap) = self.condition_cap {
            config.condition_cap = cap;
        }
        if let Some(tol) = self.tol {
            config.tol = tol;
        }
    }
}

impl OperatorSpec {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let spec: OperatorSpec = serde_json::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
        if spec.format_version != FORMAT_VERSION {
            return Err(CliError::Parse(format!(
                "field format_version: unsupported version {} (expected {FORMAT_VERSION})",
                spec.format_version
            )));
        }
        Ok(spec)
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Parse(msg) => CliError::Parse(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Canonical text: pretty JSON with a trailing newline.
    pub fn to_text(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("spec serializes");
        s.push('\n');
        s
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        fs::write(path, self.to_text()).map_err(|e| CliError::io(path, e))
    }

    pub fn to_operator(&self) -> Result<ApwOperator, CliError> {
        let invalid = |msg: String| CliError::Validation(msg);
        if self.c == 0 || self.c > 2 {
            return Err(invalid(format!("field c: spatial dimension must be 1 or 2, got {}", self.c)));
        }
        for (i, v) in self.basis.iter().enumerate() {
            if v.len() != self.c {
                return Err(invalid(format!("field basis[{i}]: expected {} components, got {}", self.c, v.len())));
            }
        }
        let basis = FrequencyBasis::new(self.basis.clone(), self.declared_independent)?;
        let grid = Grid::centered_half_width(self.c, self.grid.step, self.grid.half_width)?;
        let lambda = Complex64::new(self.lambda[0], self.lambda[1]);
        let mut op = ApwOperator::new(basis, grid, self.d, lambda)?;
        let steps = vec![self.grid.step; self.c];
        for (i, term) in self.terms.iter().enumerate() {
            if term.label.len() != op.basis().rank() {
                return Err(invalid(format!(
                    "field terms[{i}].label: expected {} integers, got {}",
                    op.basis().rank(),
                    term.label.len()
                )));
            }
            let kernel = term
                .kernel
                .to_kernel(&steps, self.d)
                .map_err(|e| invalid(format!("field terms[{i}].kernel: {e}")))?;
            op.insert_term(FreqLabel::new(term.label.clone()), kernel)?;
        }
        let norm = op.apw_norm();
        if !norm.is_finite() {
            return Err(invalid("operator norm is not finite".into()));
        }
        let radius = default_window(&op);
        let report = op.basis().verify_injectivity(radius, INJECTIVITY_TOL);
        if !report.passed {
            let (a, b) = report.witness.expect("failing report has a witness");
            return Err(invalid(format!(
                "basis is not injective on the label window of radius {radius}: labels {a} and {b} \
                 give frequencies {:e} apart",
                report.min_gap
            )));
        }
        Ok(op)
    }

    pub fn from_operator(op: &ApwOperator, fiber: Option<FiberOverrides>) -> Result<Self, CliError> {
        let steps = op.grid().steps();
        let step = uniform_step(&steps)?;
        let centre = op.grid().axis(0).center();
        let terms = op
            .terms()
            .iter()
            .map(|(label, k)| Ok(TermSpec { label: label.coords().to_vec(), kernel: KernelSpec::from_kernel(k)? }))
            .collect::<Result<_, CliError>>()?;
        Ok(OperatorSpec {
            format_version: FORMAT_VERSION,
            c: op.grid().dim(),
            d: op.dim(),
            basis: op.basis().generators().to_vec(),
            declared_independent: op.basis().declared_independent(),
            grid: GridSpec { step, half_width: centre as f64 * step },
            lambda: [op.lambda().re, op.lambda().im],
            terms,
            fiber,
        })
    }
}

/// Radius of the default fiber window: the operator's labels plus 2.
pub fn default_window(op: &ApwOperator) -> usize {
    op.terms().keys().map(|l| l.max_abs()).max().unwrap_or(0) as usize + 2
}

fn uniform_step(steps: &[f64]) -> Result<f64, CliError> {
    if steps.iter().any(|&s| s != steps[0]) {
        return Err(CliError::Validation(format!("grid steps differ between axes: {steps:?}")));
    }
    Ok(steps[0])
}

fn coeff_from(pairs: &Option<Vec<[f64; 2]>>) -> Option<Vec<Complex64>> {
    pairs.as_ref().map(|v| v.iter().map(|p| Complex64::new(p[0], p[1])).collect())
}

fn coeff_to(values: &Option<Vec<Complex64>>) -> Option<Vec<[f64; 2]>> {
    values.as_ref().map(|v| v.iter().map(|z| [z.re, z.im]).collect())
}

impl KernelSpec {
    pub fn to_kernel(&self, steps: &[f64], dim: usize) -> Result<Kernel, CliError> {
        let kernel = match self {
            KernelSpec::Gaussian { mass, width, coeff } => {
                Kernel::analytic(Profile::Gaussian { mass: *mass, width: *width }, steps, dim, coeff_from(coeff))?
            }
            KernelSpec::ExpOneSided { gamma, rate, coeff } => {
                Kernel::analytic(Profile::ExpOneSided { gamma: *gamma, rate: *rate }, steps, dim, coeff_from(coeff))?
            }
            KernelSpec::RaisedCosine { mass, width, coeff } => {
                Kernel::analytic(Profile::RaisedCosine { mass: *mass, width: *width }, steps, dim, coeff_from(coeff))?
            }
            KernelSpec::Samples { grid, re, im } => {
                if grid.count.len() != steps.len() {
                    return Err(CliError::Validation(format!(
                        "samples grid has {} axes, expected {}",
                        grid.count.len(),
                        steps.len()
                    )));
                }
                if grid.step != steps[0] {
                    return Err(CliError::Validation(format!(
                        "samples grid step {} differs from the operator grid step {}",
                        grid.step, steps[0]
                    )));
                }
                if re.len() != im.len() {
                    return Err(CliError::Validation(format!("re has {} values but im has {}", re.len(), im.len())));
                }
                let g = Grid::centered(steps, &grid.count)?;
                let values = re.iter().zip(im).map(|(&a, &b)| Complex64::new(a, b)).collect();
                Kernel::from_samples(g, dim, values)?
            }
        };
        Ok(kernel)
    }

    pub fn from_kernel(k: &Kernel) -> Result<Self, CliError> {
        Ok(match k.source() {
            KernelSource::Analytic { profile, coeff } => match *profile {
                Profile::Gaussian { mass, width } => KernelSpec::Gaussian { mass, width, coeff: coeff_to(coeff) },
                Profile::ExpOneSided { gamma, rate } => KernelSpec::ExpOneSided { gamma, rate, coeff: coeff_to(coeff) },
                Profile::RaisedCosine { mass, width } => KernelSpec::RaisedCosine { mass, width, coeff: coeff_to(coeff) },
            },
            KernelSource::Samples => KernelSpec::Samples {
                grid: SampleGrid { step: uniform_step(&k.grid().steps())?, count: k.grid().shape() },
                re: k.values().iter().map(|z| z.re).collect(),
                im: k.values().iter().map(|z| z.im).collect(),
            },
        })
    }
}
