use thiserror::Error;

pub type Result<T> = std::result::Result<T, ApwError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ApwError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("invalid frequency basis: {0}")]
    InvalidBasis(String),

    #[error("grid step mismatch on axis {axis}: {left} vs {right}")]
    StepMismatch { axis: usize, left: f64, right: f64 },

    #[error("spatial dimension mismatch: {left} vs {right}")]
    SpaceDimMismatch { left: usize, right: usize },

    #[error("value dimension mismatch: {left} vs {right}")]
    ValueDimMismatch { left: usize, right: usize },

    #[error("shift component {value} on axis {axis} is not a multiple of the grid step {step}")]
    Misaligned { axis: usize, value: f64, step: f64 },

    #[error("rank mismatch: {left} vs {right}")]
    RankMismatch { left: usize, right: usize },

    #[error("operators are built over different frequency bases")]
    BasisMismatch,

    #[error("duplicate label {0}")]
    DuplicateLabel(String),

    #[error("label coordinate {value} on axis {axis} aliases on a torus grid of size {n} (need |a_i| < n/2)")]
    Alias { axis: usize, value: i64, n: usize },

    #[error("torus data has {got} samples, expected {expected}")]
    TorusShape { got: usize, expected: usize },

    #[error("unit part is zero; the operator has no inverse of the form mu + M")]
    ZeroUnit,

    #[error("Neumann series not applicable: q = {q} >= 1 (use the fiber method)")]
    NeumannNotApplicable { q: f64 },

    #[error("Neumann series needs {needed} terms but the budget is {max_terms}; achievable tolerance {achievable:e}")]
    NeumannBudget {
        needed: usize,
        max_terms: usize,
        achievable: f64,
    },

    #[error("fiber at xi = {xi:?} is numerically singular (condition number {condition:e})")]
    SingularFiber { xi: Vec<f64>, condition: f64 },

    #[error("window radius {radius} too small: enlarging by 2 moved a coefficient by {drift:e} (tolerance {tol:e})")]
    WindowTooSmall { radius: usize, drift: f64, tol: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
