//! Uniform grids over ℝ^c, sampled vector-valued functions on them, and the
//! shift / modulation primitives.

use crate::error::{ApwError, Result};
use crate::numeric::{for_each_index, pairwise_sum, sorted_sum, strides, vec_norm};
use num_complex::Complex64;

/// Relative tolerance used when comparing grid steps.
const STEP_RTOL: f64 = 1e-12;

/// One axis of a uniform grid: samples at `origin + i * step`, `i < count`.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    origin: f64,
    step: f64,
    count: usize,
}

impl Axis {
    pub fn new(origin: f64, step: f64, count: usize) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(ApwError::InvalidGrid(format!("step must be positive and finite, got {step}")));
        }
        if count < 2 {
            return Err(ApwError::InvalidGrid(format!("count must be at least 2, got {count}")));
        }
        if !origin.is_finite() {
            return Err(ApwError::InvalidGrid("origin must be finite".into()));
        }
        Ok(Axis { origin, step, count })
    }

    /// Axis symmetric about zero.
    pub fn centered(step: f64, count: usize) -> Result<Self> {
        Self::new(-step * (count as f64 - 1.0) / 2.0, step, count)
    }

    pub fn origin(&self) -> f64 {
        self.origin
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn coord(&self, i: usize) -> f64 {
        self.origin + i as f64 * self.step
    }

    /// Odd count with the middle sample at exactly zero.
    pub fn is_centered(&self) -> bool {
        self.count % 2 == 1 && {
            let half = (self.count - 1) / 2;
            (self.origin + half as f64 * self.step).abs() <= 1e-9 * self.step
        }
    }

    /// Index of the zero sample for centered axes.
    pub fn center(&self) -> usize {
        (self.count - 1) / 2
    }
}

/// Tensor-product uniform grid in dimension c ∈ {1, 2}, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    axes: Vec<Axis>,
}

impl Grid {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() || axes.len() > 2 {
            return Err(ApwError::InvalidGrid(format!(
                "spatial dimension must be 1 or 2, got {}",
                axes.len()
            )));
        }
        Ok(Grid { axes })
    }

    pub fn centered(steps: &[f64], counts: &[usize]) -> Result<Self> {
        if steps.len() != counts.len() {
            return Err(ApwError::InvalidGrid("steps and counts differ in length".into()));
        }
        let axes = steps
            .iter()
            .zip(counts)
            .map(|(&s, &n)| Axis::centered(s, n))
            .collect::<Result<Vec<_>>>()?;
        Grid::new(axes)
    }

    /// Centered grid covering `[-half_width, half_width]^c` with an odd
    /// number of samples per axis.
    pub fn centered_half_width(c: usize, step: f64, half_width: f64) -> Result<Self> {
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(ApwError::InvalidGrid(format!("half width must be positive, got {half_width}")));
        }
        if !(step > 0.0) {
            return Err(ApwError::InvalidGrid(format!("step must be positive, got {step}")));
        }
        let half = (half_width / step).round().max(1.0) as usize;
        Grid::centered(&vec![step; c], &vec![2 * half + 1; c])
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn axis(&self, k: usize) -> &Axis {
        &self.axes[k]
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(Axis::count).collect()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(Axis::count).product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn steps(&self) -> Vec<f64> {
        self.axes.iter().map(Axis::step).collect()
    }

    /// Quadrature weight `step^c`.
    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(Axis::step).product()
    }

    pub fn is_centered(&self) -> bool {
        self.axes.iter().all(Axis::is_centered)
    }

    pub fn point(&self, idx: &[usize]) -> Vec<f64> {
        self.axes.iter().zip(idx).map(|(a, &i)| a.coord(i)).collect()
    }

    /// Coordinates of every sample in row-major order.
    pub fn points(&self) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(self.len());
        for_each_index(&self.shape(), |_, idx| out.push(self.point(idx)));
        out
    }

    pub fn strides(&self) -> Vec<usize> {
        strides(&self.shape())
    }

    pub fn check_same_step(&self, other: &Grid) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(ApwError::SpaceDimMismatch { left: self.dim(), right: other.dim() });
        }
        for (k, (a, b)) in self.axes.iter().zip(&other.axes).enumerate() {
            if !same_step(a.step, b.step) {
                return Err(ApwError::StepMismatch { axis: k, left: a.step, right: b.step });
            }
        }
        Ok(())
    }

    /// Smallest centered grid containing both centered grids.
    pub fn centered_union(&self, other: &Grid) -> Result<Grid> {
        self.check_same_step(other)?;
        let counts: Vec<usize> = self
            .axes
            .iter()
            .zip(&other.axes)
            .map(|(a, b)| a.count.max(b.count))
            .collect();
        Grid::centered(&self.steps(), &counts)
    }
}

pub(crate) fn same_step(a: f64, b: f64) -> bool {
    (a - b).abs() <= STEP_RTOL * a.abs().max(b.abs())
}

/// Exponent selector for the discrete `L_p` seminorm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Lp {
    One,
    Two,
    Inf,
}

impl Lp {
    pub const ALL: [Lp; 3] = [Lp::One, Lp::Two, Lp::Inf];

    pub fn label(self) -> &'static str {
        match self {
            Lp::One => "1",
            Lp::Two => "2",
            Lp::Inf => "inf",
        }
    }
}

/// Samples of a function ℝ^c → ℂ^d on a grid. Values are stored sample by
/// sample, `d` consecutive components each.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledFunction {
    grid: Grid,
    dim: usize,
    values: Vec<Complex64>,
}

impl SampledFunction {
    pub fn new(grid: Grid, dim: usize, values: Vec<Complex64>) -> Result<Self> {
        if dim == 0 || dim > 2 {
            return Err(ApwError::InvalidGrid(format!("value dimension must be 1 or 2, got {dim}")));
        }
        if values.len() != grid.len() * dim {
            return Err(ApwError::InvalidGrid(format!(
                "expected {} values, got {}",
                grid.len() * dim,
                values.len()
            )));
        }
        if values.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(ApwError::InvalidGrid("non-finite sample".into()));
        }
        Ok(SampledFunction { grid, dim, values })
    }

    pub fn zeros(grid: Grid, dim: usize) -> Self {
        let n = grid.len() * dim;
        SampledFunction { grid, dim, values: vec![Complex64::new(0.0, 0.0); n] }
    }

    /// Samples `f(x, out)` at every grid point.
    pub fn from_fn(grid: Grid, dim: usize, mut f: impl FnMut(&[f64], &mut [Complex64])) -> Result<Self> {
        let mut values = vec![Complex64::new(0.0, 0.0); grid.len() * dim];
        for_each_index(&grid.shape(), |flat, idx| {
            let x = grid.point(idx);
            f(&x, &mut values[flat * dim..(flat + 1) * dim]);
        });
        SampledFunction::new(grid, dim, values)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    #[cfg(test)]
    pub(crate) fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    /// The ℂ^d value at flat sample index `i`.
    pub fn sample(&self, i: usize) -> &[Complex64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    /// Discrete `L_p` seminorm with the Euclidean norm on ℂ^d.
    pub fn lp_seminorm(&self, p: Lp) -> f64 {
        let pointwise: Vec<f64> = self.values.chunks(self.dim).map(vec_norm).collect();
        let w = self.grid.cell_volume();
        match p {
            Lp::One => sorted_sum(pointwise) * w,
            Lp::Two => (sorted_sum(pointwise.into_iter().map(|v| v * v).collect()) * w).sqrt(),
            Lp::Inf => pointwise.into_iter().fold(0.0, f64::max),
        }
    }

    /// `(S_h u)(x) = u(x - h)` for grid-aligned `h`; vacated samples are zero.
    pub fn shift(&self, h: &[f64]) -> Result<Self> {
        let offsets = self.aligned_offsets(h)?;
        let shape = self.grid.shape();
        let st = self.grid.strides();
        let d = self.dim;
        let mut out = vec![Complex64::new(0.0, 0.0); self.values.len()];
        for_each_index(&shape, |flat, idx| {
            let mut src = 0usize;
            for k in 0..idx.len() {
                let j = idx[k] as i64 - offsets[k];
                if j < 0 || j >= shape[k] as i64 {
                    return;
                }
                src += j as usize * st[k];
            }
            out[flat * d..(flat + 1) * d].copy_from_slice(&self.values[src * d..(src + 1) * d]);
        });
        Ok(SampledFunction { grid: self.grid.clone(), dim: d, values: out })
    }

    fn aligned_offsets(&self, h: &[f64]) -> Result<Vec<i64>> {
        if h.len() != self.grid.dim() {
            return Err(ApwError::SpaceDimMismatch { left: self.grid.dim(), right: h.len() });
        }
        h.iter()
            .zip(self.grid.axes())
            .enumerate()
            .map(|(k, (&hk, ax))| {
                let n = (hk / ax.step()).round();
                if (hk - n * ax.step()).abs() > 1e-9 * ax.step() || !n.is_finite() {
                    Err(ApwError::Misaligned { axis: k, value: hk, step: ax.step() })
                } else {
                    Ok(n as i64)
                }
            })
            .collect()
    }

    /// `(Ψ_ω u)(x) = e^{i⟨ω,x⟩} u(x)` at exact grid coordinates.
    pub fn modulate(&self, omega: &[f64]) -> Self {
        assert_eq!(omega.len(), self.grid.dim(), "frequency dimension must match grid");
        let mut out = self.clone();
        if omega.iter().all(|&w| w == 0.0) {
            return out;
        }
        let d = self.dim;
        let grid = &self.grid;
        for_each_index(&grid.shape(), |flat, idx| {
            let phase: f64 = grid.point(idx).iter().zip(omega).map(|(x, w)| x * w).sum();
            let z = Complex64::from_polar(1.0, phase);
            for v in &mut out.values[flat * d..(flat + 1) * d] {
                *v *= z;
            }
        });
        out
    }

    pub fn scale(&self, alpha: Complex64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= alpha);
        out
    }

    pub fn add(&self, other: &SampledFunction) -> Result<Self> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        out.values.iter_mut().zip(&other.values).for_each(|(a, b)| *a += b);
        Ok(out)
    }

    pub fn sub(&self, other: &SampledFunction) -> Result<Self> {
        self.add(&other.scale(Complex64::new(-1.0, 0.0)))
    }

    pub(crate) fn add_assign_unchecked(&mut self, other: &SampledFunction) {
        self.values.iter_mut().zip(&other.values).for_each(|(a, b)| *a += b);
    }

    pub fn check_compatible(&self, other: &SampledFunction) -> Result<()> {
        if self.grid != other.grid {
            return Err(ApwError::InvalidGrid("functions live on different grids".into()));
        }
        if self.dim != other.dim {
            return Err(ApwError::ValueDimMismatch { left: self.dim, right: other.dim });
        }
        Ok(())
    }

    /// Largest pointwise Euclidean distance to `other`.
    pub fn max_distance(&self, other: &SampledFunction) -> Result<f64> {
        self.check_compatible(other)?;
        let diffs: Vec<f64> = self
            .values
            .chunks(self.dim)
            .zip(other.values.chunks(self.dim))
            .map(|(a, b)| {
                let d: Vec<Complex64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
                vec_norm(&d)
            })
            .collect();
        Ok(diffs.into_iter().fold(0.0, f64::max))
    }

    /// Riemann sum of the components.
    pub fn integral(&self) -> Vec<Complex64> {
        let w = self.grid.cell_volume();
        (0..self.dim)
            .map(|c| {
                let re: Vec<f64> = self.values.iter().skip(c).step_by(self.dim).map(|z| z.re).collect();
                let im: Vec<f64> = self.values.iter().skip(c).step_by(self.dim).map(|z| z.im).collect();
                Complex64::new(pairwise_sum(&re), pairwise_sum(&im)) * w
            })
            .collect()
    }
}
