//! Almost-periodic integral operators with absolutely convergent Fourier
//! series,
//!
//! ```text
//! (A u)(x) = λ u(x) + Σ_ω e^{i⟨ω,x⟩} ∫ g_ω(x - y) u(y) dy,   Σ_ω ‖g_ω‖_{L_1} < ∞,
//! ```
//!
//! with frequencies drawn from a finitely generated module. The crate
//! provides the Banach-algebra operations on such operators and two
//! independent inversion routes (Neumann series and frequency-lattice
//! fibers with torus coefficient extraction).

pub mod apw;
pub mod error;
pub mod grid;
pub mod invert;
pub mod freq;
pub mod kernel;
mod numeric;
pub mod signal;

pub use error::{ApwError, Result};
pub use grid::{Axis, Grid, Lp, SampledFunction};
pub use kernel::{Kernel, KernelSource, Profile, SymbolSample};
pub use num_complex::Complex64;
pub use apw::{ApwNormBreakdown, ApwOperator};
pub use freq::{FreqLabel, FrequencyBasis, TorusGrid, TorusPoint};
pub use invert::{invert, InverseResult, InvertOptions, Method, MethodChoice};
