//! Matrix-valued `L_1` kernels on centered grids: norms, convolution,
//! twisting by a character, Fourier symbols and convolution operators.

use crate::error::{ApwError, Result};
use crate::grid::{Grid, SampledFunction};
use crate::numeric::{block_norm, fft_len, for_each_index, sorted_sum, strides, FftNd};
use num_complex::Complex64;
use rustfft::FftPlanner;
use std::f64::consts::PI;

/// Truncation tail targeted by the analytic constructors.
pub const ANALYTIC_TAIL: f64 = 1e-12;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Scalar profile of an analytic kernel family.
#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    /// `mass · Π_i exp(-y_i² / 2σ²) / (σ √(2π))`
    Gaussian { mass: f64, width: f64 },
    /// `gamma · Π_i exp(-rate · y_i) 1{y_i ≥ 0}`
    ExpOneSided { gamma: f64, rate: f64 },
    /// `mass · Π_i (1 + cos(π y_i / w)) / 2w` on `|y_i| ≤ w`
    RaisedCosine { mass: f64, width: f64 },
}

impl Profile {
    /// Exact integral over ℝ^c.
    pub fn mass(&self, c: usize) -> f64 {
        match *self {
            Profile::Gaussian { mass, .. } | Profile::RaisedCosine { mass, .. } => mass,
            Profile::ExpOneSided { gamma, rate } => gamma / rate.powi(c as i32),
        }
    }

    fn validate(&self) -> Result<()> {
        let (name, a, b) = match *self {
            Profile::Gaussian { mass, width } => ("gaussian width", mass, width),
            Profile::ExpOneSided { gamma, rate } => ("exp-one-sided rate", gamma, rate),
            Profile::RaisedCosine { mass, width } => ("raised-cosine width", mass, width),
        };
        if !a.is_finite() || !(b > 0.0 && b.is_finite()) {
            return Err(ApwError::InvalidKernel(format!("{name} must be positive and parameters finite")));
        }
        Ok(())
    }

    /// Support radius meeting the tail target.
    fn radius(&self, c: usize, target: f64) -> f64 {
        let cf = c as f64;
        match *self {
            Profile::Gaussian { mass, width } => {
                let r = (cf * mass.abs() / target).max(1.0);
                width * (2.0 * r.ln()).sqrt()
            }
            Profile::ExpOneSided { gamma, rate } => {
                let r = (cf * gamma.abs() / (rate.powi(c as i32) * target)).max(1.0);
                r.ln() / rate
            }
            Profile::RaisedCosine { width, .. } => width,
        }
    }

    /// Upper bound on the `L_1` mass outside `[-l, l]^c`.
    fn tail(&self, c: usize, l: f64) -> f64 {
        let cf = c as f64;
        // erfc(t) <= exp(-t²) bounds the Gaussian tail per axis
        match *self {
            Profile::Gaussian { mass, width } => cf * mass.abs() * (-(l * l) / (2.0 * width * width)).exp(),
            Profile::ExpOneSided { gamma, rate } => cf * gamma.abs() / rate.powi(c as i32) * (-rate * l).exp(),
            Profile::RaisedCosine { width, .. } => {
                if l >= width {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// Sample value at `y`; jump points of the one-sided family take the
    /// mean of the one-sided limits.
    fn eval(&self, y: &[f64]) -> f64 {
        match *self {
            Profile::Gaussian { mass, width } => {
                let norm = 1.0 / (width * (2.0 * PI).sqrt());
                mass * y.iter().map(|t| norm * (-(t * t) / (2.0 * width * width)).exp()).product::<f64>()
            }
            Profile::ExpOneSided { gamma, rate } => {
                gamma
                    * y.iter()
                        .map(|&t| {
                            if t > 0.0 {
                                (-rate * t).exp()
                            } else if t == 0.0 {
                                0.5
                            } else {
                                0.0
                            }
                        })
                        .product::<f64>()
            }
            Profile::RaisedCosine { mass, width } => {
                mass * y
                    .iter()
                    .map(|&t| if t.abs() <= width { (1.0 + (PI * t / width).cos()) / (2.0 * width) } else { 0.0 })
                    .product::<f64>()
            }
        }
    }
}

/// Where a kernel's samples came from.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelSource {
    /// Built from a profile times a constant d×d coefficient (`None` is the identity).
    Analytic { profile: Profile, coeff: Option<Vec<Complex64>> },
    /// Explicit samples, or the result of an algebra operation.
    Samples,
}

/// A kernel `g: ℝ^c → ℂ^{d×d}` sampled on a centered grid.
///
/// Values are stored sample by sample as row-major d×d blocks. The `L_1`
/// norm (spectral norm pointwise) is cached at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    grid: Grid,
    dim: usize,
    values: Vec<Complex64>,
    l1: f64,
    tail_bound: f64,
    source: KernelSource,
}

/// `ĝ(ξ)` at one frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolSample {
    pub xi: Vec<f64>,
    pub value: Vec<Complex64>,
}

impl SymbolSample {
    pub fn norm(&self) -> f64 {
        let d = (self.value.len() as f64).sqrt() as usize;
        block_norm(&self.value, d)
    }
}

impl Kernel {
    pub fn from_samples(grid: Grid, dim: usize, values: Vec<Complex64>) -> Result<Self> {
        Self::build(grid, dim, values, 0.0, KernelSource::Samples)
    }

    fn build(grid: Grid, dim: usize, values: Vec<Complex64>, tail_bound: f64, source: KernelSource) -> Result<Self> {
        if !grid.is_centered() {
            return Err(ApwError::InvalidKernel("kernel grids must be centered with odd counts".into()));
        }
        if dim == 0 || dim > 2 {
            return Err(ApwError::InvalidKernel(format!("matrix dimension must be 1 or 2, got {dim}")));
        }
        if values.len() != grid.len() * dim * dim {
            return Err(ApwError::InvalidKernel(format!(
                "expected {} values, got {}",
                grid.len() * dim * dim,
                values.len()
            )));
        }
        if values.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(ApwError::InvalidKernel("non-finite sample".into()));
        }
        let l1 = l1_of(&grid, dim, &values);
        Ok(Kernel { grid, dim, values, l1, tail_bound, source })
    }

    pub fn zeros(grid: Grid, dim: usize) -> Result<Self> {
        let n = grid.len() * dim * dim;
        Self::from_samples(grid, dim, vec![ZERO; n])
    }

    /// Single central sample of height `1/step^c` times the identity: the
    /// unit of discrete convolution.
    pub fn delta(steps: &[f64], dim: usize) -> Result<Self> {
        let grid = Grid::centered(steps, &vec![3; steps.len()])?;
        let mut values = vec![ZERO; grid.len() * dim * dim];
        let centre = (grid.len() - 1) / 2;
        let h = 1.0 / grid.cell_volume();
        for i in 0..dim {
            values[centre * dim * dim + i * dim + i] = Complex64::new(h, 0.0);
        }
        Self::from_samples(grid, dim, values)
    }

    /// Samples an analytic family on a grid of the given step, choosing the
    /// support radius so the discarded `L_1` tail stays below
    /// [`ANALYTIC_TAIL`]. Samples are rescaled so the Riemann sum of the
    /// profile equals its exact integral.
    pub fn analytic(profile: Profile, steps: &[f64], dim: usize, coeff: Option<Vec<Complex64>>) -> Result<Self> {
        profile.validate()?;
        let c = steps.len();
        if let Some(m) = &coeff {
            if m.len() != dim * dim {
                return Err(ApwError::InvalidKernel(format!("coefficient must have {} entries", dim * dim)));
            }
        }
        let radius = profile.radius(c, ANALYTIC_TAIL);
        let counts: Vec<usize> = steps.iter().map(|&h| 2 * (radius / h).ceil().max(1.0) as usize + 1).collect();
        let grid = Grid::centered(steps, &counts)?;
        let kept_radius = steps
            .iter()
            .zip(&counts)
            .map(|(h, n)| h * ((n - 1) / 2) as f64)
            .fold(f64::INFINITY, f64::min);
        let tail_bound = profile.tail(c, kept_radius);

        let mut scalar = Vec::with_capacity(grid.len());
        for_each_index(&grid.shape(), |_, idx| scalar.push(profile.eval(&grid.point(idx))));
        let riemann: f64 = crate::numeric::pairwise_sum(&scalar) * grid.cell_volume();
        let exact = profile.mass(c);
        let rescale = if riemann != 0.0 && exact != 0.0 { exact / riemann } else { 1.0 };

        let coeff_block: Vec<Complex64> = match &coeff {
            Some(m) => m.clone(),
            None => (0..dim * dim)
                .map(|e| if e / dim == e % dim { Complex64::new(1.0, 0.0) } else { ZERO })
                .collect(),
        };
        let mut values = Vec::with_capacity(grid.len() * dim * dim);
        for s in scalar {
            let s = s * rescale;
            values.extend(coeff_block.iter().map(|m| m * s));
        }
        Self::build(grid, dim, values, tail_bound, KernelSource::Analytic { profile, coeff })
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

    pub fn block(&self, i: usize) -> &[Complex64] {
        let b = self.dim * self.dim;
        &self.values[i * b..(i + 1) * b]
    }

    pub fn l1_norm(&self) -> f64 {
        self.l1
    }

    /// `L_1` mass discarded when the kernel was truncated.
    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }

    pub fn source(&self) -> &KernelSource {
        &self.source
    }

    /// Recomputes `Σ ‖g(y)‖ step^c` without the cache.
    pub fn recompute_l1(&self) -> f64 {
        l1_of(&self.grid, self.dim, &self.values)
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|z| *z == ZERO)
    }

    fn derived(&self, grid: Grid, values: Vec<Complex64>) -> Kernel {
        let l1 = l1_of(&grid, self.dim, &values);
        Kernel { grid, dim: self.dim, values, l1, tail_bound: self.tail_bound, source: KernelSource::Samples }
    }

    pub fn scale(&self, alpha: Complex64) -> Kernel {
        if alpha == Complex64::new(1.0, 0.0) {
            return self.clone();
        }
        let values = self.values.iter().map(|v| v * alpha).collect();
        let mut k = self.derived(self.grid.clone(), values);
        k.tail_bound = self.tail_bound * alpha.norm();
        k
    }

    fn check_compatible(&self, other: &Kernel) -> Result<()> {
        self.grid.check_same_step(&other.grid)?;
        if self.dim != other.dim {
            return Err(ApwError::ValueDimMismatch { left: self.dim, right: other.dim });
        }
        Ok(())
    }

    /// Zero-pads onto a larger centered grid with the same steps.
    pub fn embed(&self, grid: &Grid) -> Result<Kernel> {
        self.grid.check_same_step(grid)?;
        if !grid.is_centered() {
            return Err(ApwError::InvalidKernel("target grid must be centered".into()));
        }
        if grid.shape() == self.grid.shape() {
            return Ok(self.clone());
        }
        let big = grid.shape();
        let small = self.grid.shape();
        if small.iter().zip(&big).any(|(s, b)| s > b) {
            return Err(ApwError::InvalidKernel("embedding target is smaller than the kernel".into()));
        }
        let offs: Vec<usize> = small.iter().zip(&big).map(|(s, b)| (b - s) / 2).collect();
        let st = strides(&big);
        let b = self.dim * self.dim;
        let mut values = vec![ZERO; grid.len() * b];
        for_each_index(&small, |flat, idx| {
            let dst: usize = idx.iter().zip(&offs).zip(&st).map(|((i, o), s)| (i + o) * s).sum();
            values[dst * b..(dst + 1) * b].copy_from_slice(&self.values[flat * b..(flat + 1) * b]);
        });
        let mut k = self.derived(grid.clone(), values);
        k.source = self.source.clone();
        Ok(k)
    }

    pub fn add(&self, other: &Kernel) -> Result<Kernel> {
        self.check_compatible(other)?;
        let grid = self.grid.centered_union(&other.grid)?;
        let a = self.embed(&grid)?;
        let b = other.embed(&grid)?;
        let values = a.values.iter().zip(&b.values).map(|(x, y)| x + y).collect();
        let mut k = self.derived(grid, values);
        k.tail_bound = self.tail_bound + other.tail_bound;
        Ok(k)
    }

    /// Keeps samples with `|index - centre| ≤ half_counts[k]` per axis.
    /// Returns the truncated kernel and the `L_1` mass removed.
    pub fn truncate(&self, half_counts: &[usize]) -> Result<(Kernel, f64)> {
        if half_counts.len() != self.grid.dim() {
            return Err(ApwError::SpaceDimMismatch { left: self.grid.dim(), right: half_counts.len() });
        }
        let shape = self.grid.shape();
        let new_counts: Vec<usize> = shape.iter().zip(half_counts).map(|(&n, &h)| n.min(2 * h + 1)).collect();
        if new_counts == shape {
            return Ok((self.clone(), 0.0));
        }
        let grid = Grid::centered(&self.grid.steps(), &new_counts)?;
        let offs: Vec<usize> = shape.iter().zip(&new_counts).map(|(n, m)| (n - m) / 2).collect();
        let b = self.dim * self.dim;
        let mut values = vec![ZERO; grid.len() * b];
        let mut dropped = Vec::new();
        let st_new = strides(&new_counts);
        let w = self.grid.cell_volume();
        for_each_index(&shape, |flat, idx| {
            let inside = idx.iter().zip(&offs).zip(&new_counts).all(|((i, o), m)| *i >= *o && i - o < *m);
            let blk = &self.values[flat * b..(flat + 1) * b];
            if inside {
                let dst: usize = idx.iter().zip(&offs).zip(&st_new).map(|((i, o), s)| (i - o) * s).sum();
                values[dst * b..(dst + 1) * b].copy_from_slice(blk);
            } else {
                dropped.push(block_norm(blk, self.dim) * w);
            }
        });
        let removed = sorted_sum(dropped);
        let mut k = self.derived(grid, values);
        k.tail_bound = self.tail_bound + removed;
        Ok((k, removed))
    }

    /// `x ↦ g(x) e^{-i⟨ν,x⟩}`.
    pub fn modulate(&self, nu: &[f64]) -> Kernel {
        assert_eq!(nu.len(), self.grid.dim(), "frequency dimension must match grid");
        if nu.iter().all(|&v| v == 0.0) {
            return self.clone();
        }
        let b = self.dim * self.dim;
        let mut values = self.values.clone();
        let grid = &self.grid;
        for_each_index(&grid.shape(), |flat, idx| {
            let phase: f64 = grid.point(idx).iter().zip(nu).map(|(x, v)| x * v).sum();
            let z = Complex64::from_polar(1.0, -phase);
            values[flat * b..(flat + 1) * b].iter_mut().for_each(|v| *v *= z);
        });
        let mut k = self.derived(self.grid.clone(), values);
        // the twist does not change pointwise norms
        k.l1 = self.l1;
        k
    }

    /// `ĝ(ξ) = Σ_y g(y) e^{-i⟨ξ,y⟩} step^c`.
    pub fn symbol(&self, xi: &[f64]) -> SymbolSample {
        assert_eq!(xi.len(), self.grid.dim(), "frequency dimension must match grid");
        let b = self.dim * self.dim;
        let mut acc = vec![ZERO; b];
        let grid = &self.grid;
        for_each_index(&grid.shape(), |flat, idx| {
            let blk = &self.values[flat * b..(flat + 1) * b];
            if blk.iter().all(|z| *z == ZERO) {
                return;
            }
            let phase: f64 = grid.point(idx).iter().zip(xi).map(|(y, x)| y * x).sum();
            let z = Complex64::from_polar(1.0, -phase);
            acc.iter_mut().zip(blk).for_each(|(a, v)| *a += v * z);
        });
        let w = grid.cell_volume();
        SymbolSample { xi: xi.to_vec(), value: acc.into_iter().map(|a| a * w).collect() }
    }

    /// `(g * h)(x) = ∫ g(x - y) h(y) dy` as a full (non-circular) discrete
    /// convolution. The output support is the Minkowski sum of the inputs.
    pub fn convolve(&self, other: &Kernel) -> Result<Kernel> {
        self.check_compatible(other)?;
        let d = self.dim;
        let sa = self.grid.shape();
        let sb = other.grid.shape();
        let a = components(&self.values, d * d);
        let bcomp = components(&other.values, d * d);
        let mut pairs = Vec::new();
        for i in 0..d {
            for k in 0..d {
                for j in 0..d {
                    pairs.push((i * d + k, i * d + j, j * d + k));
                }
            }
        }
        let (out_shape, out) = linear_convolve(&a, &sa, &bcomp, &sb, &pairs, d * d);
        let grid = Grid::centered(&self.grid.steps(), &out_shape)?;
        let w = grid.cell_volume();
        let values = interleave(&out, |z| z * w);
        let mut k = self.derived(grid, values);
        k.tail_bound = self.tail_bound * other.l1 + other.tail_bound * self.l1;
        Ok(k)
    }

    /// `(G_g u)(x) = ∫ g(x - y) u(y) dy` evaluated on u's grid.
    pub fn apply_conv(&self, u: &SampledFunction) -> Result<SampledFunction> {
        self.grid.check_same_step(u.grid())?;
        if u.dim() != self.dim {
            return Err(ApwError::ValueDimMismatch { left: self.dim, right: u.dim() });
        }
        let d = self.dim;
        let su = u.grid().shape();
        let sg = self.grid.shape();
        let a = components(&self.values, d * d);
        let ucomp = components(u.values(), d);
        let mut pairs = Vec::new();
        for i in 0..d {
            for j in 0..d {
                pairs.push((i, i * d + j, j));
            }
        }
        let (full_shape, full) = linear_convolve(&a, &sg, &ucomp, &su, &pairs, d);
        let centre: Vec<usize> = self.grid.axes().iter().map(|ax| ax.center()).collect();
        let fst = strides(&full_shape);
        let w = u.grid().cell_volume();
        let mut values = vec![ZERO; u.grid().len() * d];
        for_each_index(&su, |flat, idx| {
            let src: usize = idx.iter().zip(&centre).zip(&fst).map(|((i, c), s)| (i + c) * s).sum();
            for (comp, arr) in full.iter().enumerate() {
                values[flat * d + comp] = arr[src] * w;
            }
        });
        SampledFunction::new(u.grid().clone(), d, values)
    }

    /// `ĝ(ξ_k + shift)` on the dual grid `ξ_k = 2π k / (n step)`,
    /// `k = -(n-1)/2 ..= (n-1)/2` per axis, for odd `shape`. The samples are
    /// exact DTFT values: the kernel is periodized to `n` samples first.
    /// Output is row-major over the dual grid, d×d blocks per point.
    pub fn dual_symbols(&self, shift: &[f64], shape: &[usize], planner: &mut FftPlanner<f64>) -> Vec<Complex64> {
        let g = self.modulate(shift);
        let b = self.dim * self.dim;
        let total: usize = shape.iter().product();
        let st = strides(shape);
        let centre: Vec<i64> = self.grid.axes().iter().map(|ax| ax.center() as i64).collect();
        let mut comps = vec![vec![ZERO; total]; b];
        for_each_index(&self.grid.shape(), |flat, idx| {
            let blk = &g.values[flat * b..(flat + 1) * b];
            let dst: usize = idx
                .iter()
                .zip(&centre)
                .zip(shape)
                .zip(&st)
                .map(|(((&i, &c), &n), &s)| ((i as i64 - c).rem_euclid(n as i64)) as usize * s)
                .sum();
            for (e, v) in blk.iter().enumerate() {
                comps[e][dst] += v;
            }
        });
        let fft = FftNd::new(planner, shape);
        for comp in &mut comps {
            fft.forward(comp);
        }
        let w = self.grid.cell_volume();
        let mut out = vec![ZERO; total * b];
        for_each_index(shape, |flat, idx| {
            let src: usize = idx
                .iter()
                .zip(shape)
                .zip(&st)
                .map(|((&q, &n), &s)| ((q as i64 - ((n - 1) / 2) as i64).rem_euclid(n as i64)) as usize * s)
                .sum();
            for e in 0..b {
                out[flat * b + e] = comps[e][src] * w;
            }
        });
        out
    }

    /// Inverse of [`Kernel::dual_symbols`] (without shift): rebuilds kernel
    /// samples on the centered grid with `steps` and the same shape as the
    /// symbol data.
    pub fn from_dual_symbols(
        steps: &[f64],
        shape: &[usize],
        dim: usize,
        symbols: &[Complex64],
        planner: &mut FftPlanner<f64>,
    ) -> Result<Kernel> {
        let grid = Grid::centered(steps, shape)?;
        let b = dim * dim;
        let total: usize = shape.iter().product();
        let st = strides(shape);
        let mut comps = vec![vec![ZERO; total]; b];
        for_each_index(shape, |flat, idx| {
            let dst: usize = idx
                .iter()
                .zip(shape)
                .zip(&st)
                .map(|((&q, &n), &s)| ((q as i64 - ((n - 1) / 2) as i64).rem_euclid(n as i64)) as usize * s)
                .sum();
            for e in 0..b {
                comps[e][dst] = symbols[flat * b + e];
            }
        });
        let fft = FftNd::new(planner, shape);
        for comp in &mut comps {
            fft.inverse(comp);
        }
        let scale = 1.0 / (total as f64 * grid.cell_volume());
        let mut values = vec![ZERO; total * b];
        for_each_index(shape, |flat, idx| {
            let src: usize = idx
                .iter()
                .zip(shape)
                .zip(&st)
                .map(|((&j, &n), &s)| ((j as i64 - ((n - 1) / 2) as i64).rem_euclid(n as i64)) as usize * s)
                .sum();
            for e in 0..b {
                values[flat * b + e] = comps[e][src] * scale;
            }
        });
        Kernel::from_samples(grid, dim, values)
    }
}

/// Dual-grid frequencies `2π k / (n step)` for one axis of odd count `n`.
pub fn dual_frequencies(step: f64, n: usize) -> Vec<f64> {
    let c = ((n - 1) / 2) as f64;
    (0..n).map(|q| 2.0 * PI * (q as f64 - c) / (n as f64 * step)).collect()
}

fn l1_of(grid: &Grid, dim: usize, values: &[Complex64]) -> f64 {
    let b = dim * dim;
    let norms: Vec<f64> = values.chunks(b).map(|blk| block_norm(blk, dim)).collect();
    sorted_sum(norms) * grid.cell_volume()
}

fn components(values: &[Complex64], width: usize) -> Vec<Vec<Complex64>> {
    (0..width)
        .map(|e| values.iter().skip(e).step_by(width).copied().collect())
        .collect()
}

fn interleave(comps: &[Vec<Complex64>], f: impl Fn(Complex64) -> Complex64) -> Vec<Complex64> {
    let n = comps[0].len();
    let mut out = Vec::with_capacity(n * comps.len());
    for i in 0..n {
        for comp in comps {
            out.push(f(comp[i]));
        }
    }
    out
}

/// Full linear convolution of component arrays. `pairs` lists
/// `(output, a, b)` triples summed into each output component.
fn linear_convolve(
    a: &[Vec<Complex64>],
    sa: &[usize],
    b: &[Vec<Complex64>],
    sb: &[usize],
    pairs: &[(usize, usize, usize)],
    n_out: usize,
) -> (Vec<usize>, Vec<Vec<Complex64>>) {
    let out_shape: Vec<usize> = sa.iter().zip(sb).map(|(x, y)| x + y - 1).collect();
    let pad: Vec<usize> = out_shape.iter().map(|&n| fft_len(n)).collect();
    let mut planner = FftPlanner::new();
    let fft = FftNd::new(&mut planner, &pad);
    let total = fft.len();
    let pst = strides(&pad);

    let spectrum = |arr: &Vec<Complex64>, shape: &[usize]| -> Option<Vec<Complex64>> {
        if arr.iter().all(|z| *z == ZERO) {
            return None;
        }
        let mut buf = vec![ZERO; total];
        for_each_index(shape, |flat, idx| {
            let dst: usize = idx.iter().zip(&pst).map(|(i, s)| i * s).sum();
            buf[dst] = arr[flat];
        });
        fft.forward(&mut buf);
        Some(buf)
    };
    let fa: Vec<Option<Vec<Complex64>>> = a.iter().map(|x| spectrum(x, sa)).collect();
    let fb: Vec<Option<Vec<Complex64>>> = b.iter().map(|x| spectrum(x, sb)).collect();

    let out_total: usize = out_shape.iter().product();
    let mut out = vec![vec![ZERO; out_total]; n_out];
    for (o, slot) in out.iter_mut().enumerate() {
        let mut acc: Option<Vec<Complex64>> = None;
        for &(oo, ia, ib) in pairs {
            if oo != o {
                continue;
            }
            if let (Some(x), Some(y)) = (&fa[ia], &fb[ib]) {
                let acc = acc.get_or_insert_with(|| vec![ZERO; total]);
                acc.iter_mut().zip(x.iter().zip(y)).for_each(|(s, (p, q))| *s += p * q);
            }
        }
        if let Some(mut acc) = acc {
            fft.inverse(&mut acc);
            let inv = 1.0 / total as f64;
            for_each_index(&out_shape, |flat, idx| {
                let src: usize = idx.iter().zip(&pst).map(|(i, s)| i * s).sum();
                slot[flat] = acc[src] * inv;
            });
        }
    }
    (out_shape, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Lp;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    /// Composite Simpson rule on [a, b] with n (even) panels.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    pub(crate) fn random_kernel(seed: u64, step: f64, count: usize, dim: usize) -> Kernel {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let grid = Grid::centered(&[step], &[count]).unwrap();
        let n = grid.len() * dim * dim;
        let vals = (0..n).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        Kernel::from_samples(grid, dim, vals).unwrap()
    }

    fn volterra(step: f64) -> Kernel {
        Kernel::analytic(Profile::ExpOneSided { gamma: 0.5, rate: 1.0 }, &[step], 1, None).unwrap()
    }

    #[test]
    fn zero_kernel_norm() {
        let k = Kernel::zeros(Grid::centered(&[0.1], &[11]).unwrap(), 2).unwrap();
        assert_eq!(k.l1_norm(), 0.0);
        assert!(k.is_zero());
    }

    #[test]
    fn non_centered_grid_rejected() {
        let g = Grid::centered(&[0.1], &[10]).unwrap();
        assert!(Kernel::zeros(g, 1).is_err());
    }

    #[test]
    fn one_sided_exponential_mass() {
        // oracle: Simpson on the analytic profile over [0, 30]
        let oracle = simpson(|y| 0.5 * (-y).exp(), 0.0, 30.0, 6000);
        assert!((oracle - 0.5).abs() < 1e-9);
        let k = volterra(2f64.powi(-8));
        assert!((k.l1_norm() - oracle).abs() < 1e-3);
        assert!(k.tail_bound() < 1e-8);
        assert!((k.recompute_l1() - k.l1_norm()).abs() <= 1e-12 * k.l1_norm());
    }

    #[test]
    fn gaussian_mass() {
        // oracle: 0.3 · erf(12/√2) evaluated by Simpson of the density
        let oracle = 0.3 * simpson(|y| (-(y * y) / 2.0).exp() / (2.0 * PI).sqrt(), -12.0, 12.0, 24000);
        let k = Kernel::analytic(Profile::Gaussian { mass: 0.3, width: 1.0 }, &[2f64.powi(-6)], 1, None).unwrap();
        assert!((k.l1_norm() - oracle).abs() < 1e-6);
        assert!(k.tail_bound() < 1e-8);
    }

    #[test]
    fn raised_cosine_is_compact() {
        let k = Kernel::analytic(Profile::RaisedCosine { mass: 0.7, width: 2.0 }, &[0.125, 0.125], 1, None).unwrap();
        assert_eq!(k.tail_bound(), 0.0);
        assert!((k.l1_norm() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn delta_is_convolution_unit() {
        let g = random_kernel(3, 0.25, 21, 2);
        let delta = Kernel::delta(&[0.25], 2).unwrap();
        let gd = g.convolve(&delta).unwrap();
        let back = gd.truncate(&[10]).unwrap().0;
        for (a, b) in back.values().iter().zip(g.values()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn exponential_self_convolution() {
        let step = 2f64.powi(-6);
        let g = volterra(step);
        let gg = g.convolve(&g).unwrap();
        let ax = gg.grid().axis(0).clone();
        let mut worst: f64 = 0.0;
        for i in 0..ax.count() {
            let x = ax.coord(i);
            if x > 0.0 && x < 25.0 {
                let exact = 0.25 * x * (-x).exp();
                worst = worst.max((gg.values()[i].re - exact).abs());
            }
        }
        assert!(worst < 1e-4, "worst {worst}");
    }

    #[test]
    fn zero_kernel_operator() {
        let g = Kernel::zeros(Grid::centered(&[0.1], &[5]).unwrap(), 1).unwrap();
        let u = SampledFunction::from_fn(Grid::centered(&[0.1], &[40]).unwrap(), 1, |x, o| o[0] = c(x[0].sin())).unwrap();
        assert_eq!(g.apply_conv(&u).unwrap().lp_seminorm(Lp::Inf), 0.0);
    }

    #[test]
    fn delta_operator_is_identity_on_interior() {
        let grid = Grid::centered(&[0.1], &[40]).unwrap();
        let u = SampledFunction::from_fn(grid, 1, |x, o| o[0] = Complex64::new(x[0].cos(), x[0])).unwrap();
        let out = Kernel::delta(&[0.1], 1).unwrap().apply_conv(&u).unwrap();
        for i in 1..39 {
            assert!((out.values()[i] - u.values()[i]).norm() < 1e-12);
        }
    }

    #[test]
    fn apply_conv_matches_direct_quadrature() {
        for (seed, n) in [(1u64, 64usize), (2, 200), (3, 512)] {
            let step = 0.05;
            let g = random_kernel(seed, step, 41, 2);
            let grid = Grid::centered(&[step], &[n]).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed + 100);
            let vals = (0..2 * n).map(|_| Complex64::new(rng.random_range(-1.0..1.0), 0.0)).collect();
            let u = SampledFunction::new(grid.clone(), 2, vals).unwrap();
            let fast = g.apply_conv(&u).unwrap();
            // direct O(n²) sum over x_i - x_j offsets
            let cg = 20i64;
            let mut worst: f64 = 0.0;
            let mut scale: f64 = 0.0;
            for i in 0..n {
                let mut acc = [Complex64::new(0.0, 0.0); 2];
                for j in 0..n {
                    let off = i as i64 - j as i64 + cg;
                    if off < 0 || off >= 41 {
                        continue;
                    }
                    let blk = g.block(off as usize);
                    for r in 0..2 {
                        for s in 0..2 {
                            acc[r] += blk[r * 2 + s] * u.sample(j)[s] * step;
                        }
                    }
                }
                for r in 0..2 {
                    worst = worst.max((acc[r] - fast.sample(i)[r]).norm());
                    scale = scale.max(acc[r].norm());
                }
            }
            assert!(worst <= 1e-10 * scale, "n={n}: {worst} vs {scale}");
        }
    }

    #[test]
    fn one_sided_symbol_matches_closed_form() {
        let g = volterra(2f64.powi(-8));
        for k in -16..=16 {
            let xi = k as f64 * 0.5;
            let s = g.symbol(&[xi]);
            let exact = Complex64::new(0.5, 0.0) / Complex64::new(1.0, xi);
            assert!((s.value[0] - exact).norm() < 1e-3, "xi={xi}");
        }
        let zero = g.symbol(&[0.0]).value[0];
        assert!((zero.re - 0.5).abs() < 1e-12);
    }

    #[test]
    fn dual_symbols_match_direct_symbol() {
        let mut planner = FftPlanner::new();
        // kernel wider than the dual grid exercises periodization
        let g = random_kernel(5, 0.2, 31, 2);
        for n in [11usize, 31, 45] {
            let shift = [0.731];
            let table = g.dual_symbols(&shift, &[n], &mut planner);
            for (q, xi) in dual_frequencies(0.2, n).into_iter().enumerate() {
                let s = g.symbol(&[xi + shift[0]]);
                for e in 0..4 {
                    assert!((table[q * 4 + e] - s.value[e]).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn dual_symbols_roundtrip() {
        let mut planner = FftPlanner::new();
        let g = random_kernel(9, 0.1, 25, 1);
        let table = g.dual_symbols(&[0.0], &[25], &mut planner);
        let back = Kernel::from_dual_symbols(&[0.1], &[25], 1, &table, &mut planner).unwrap();
        for (a, b) in back.values().iter().zip(g.values()) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn two_dimensional_convolution_matches_direct() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let grid = Grid::centered(&[0.5, 0.25], &[5, 3]).unwrap();
        let rand_kernel = |rng: &mut rand_chacha::ChaCha8Rng| {
            let v = (0..15).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
            Kernel::from_samples(grid.clone(), 1, v).unwrap()
        };
        let g = rand_kernel(&mut rng);
        let h = rand_kernel(&mut rng);
        let gh = g.convolve(&h).unwrap();
        assert_eq!(gh.grid().shape(), vec![9, 5]);
        let w = 0.125;
        for i0 in 0..9i64 {
            for i1 in 0..5i64 {
                let mut acc = Complex64::new(0.0, 0.0);
                for j0 in 0..5i64 {
                    for j1 in 0..3i64 {
                        let (k0, k1) = (i0 - j0, i1 - j1);
                        if (0..5).contains(&k0) && (0..3).contains(&k1) {
                            acc += g.values()[(k0 * 3 + k1) as usize] * h.values()[(j0 * 3 + j1) as usize] * w;
                        }
                    }
                }
                assert!((acc - gh.values()[(i0 * 5 + i1) as usize]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn step_and_dimension_mismatch() {
        let a = random_kernel(1, 0.1, 5, 1);
        let b = random_kernel(1, 0.2, 5, 1);
        assert!(matches!(a.convolve(&b), Err(ApwError::StepMismatch { .. })));
        let b = random_kernel(1, 0.1, 5, 2);
        assert!(matches!(a.convolve(&b), Err(ApwError::ValueDimMismatch { .. })));
    }

    #[test]
    fn truncate_reports_removed_mass() {
        let g = volterra(0.125);
        let (t, removed) = g.truncate(&[40]).unwrap();
        assert_eq!(t.grid().len(), 81);
        assert!((t.l1_norm() + removed - g.l1_norm()).abs() < 1e-12);
        // midpoint estimate of the discarded tail beyond x = 5
        assert!((removed - 0.5 * (-5.0625f64).exp()).abs() < 1e-2 * removed);
    }

    proptest! {
        #[test]
        fn convolution_theorem(seed in 0u64..400, n1 in 3usize..30, n2 in 3usize..30, xi in -12.0f64..12.0) {
            let g = random_kernel(seed, 0.15, 2 * (n1 / 2) + 1, 2);
            let h = random_kernel(seed + 7, 0.15, 2 * (n2 / 2) + 1, 2);
            let gh = g.convolve(&h).unwrap();
            let sg = g.symbol(&[xi]).value;
            let sh = h.symbol(&[xi]).value;
            let prod: Vec<Complex64> = (0..4).map(|e| {
                let (i, k) = (e / 2, e % 2);
                sg[i * 2] * sh[k] + sg[i * 2 + 1] * sh[2 + k]
            }).collect();
            let s = gh.symbol(&[xi]).value;
            let err = s.iter().zip(&prod).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            prop_assert!(err <= 1e-8 * g.l1_norm() * h.l1_norm());
            prop_assert!(gh.l1_norm() <= g.l1_norm() * h.l1_norm() * (1.0 + 1e-10));
        }

        #[test]
        fn twist_shifts_the_symbol(seed in 0u64..400, nu in -5.0f64..5.0, xi in -5.0f64..5.0) {
            let g = random_kernel(seed, 0.1, 31, 1);
            let t = g.modulate(&[nu]);
            prop_assert!((t.recompute_l1() - g.l1_norm()).abs() <= 1e-12 * g.l1_norm());
            let a = t.symbol(&[xi]).value[0];
            let b = g.symbol(&[xi + nu]).value[0];
            prop_assert!((a - b).norm() <= 1e-10);
            prop_assert!(g.symbol(&[xi]).norm() <= g.l1_norm() + 1e-10);
            let back = t.modulate(&[-nu]);
            for (x, y) in back.values().iter().zip(g.values()) {
                prop_assert!((x - y).norm() <= 1e-14);
            }
        }

        #[test]
        fn conv_operator_norm_bound(seed in 0u64..200) {
            let g = random_kernel(seed, 0.1, 21, 1);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
            let grid = Grid::centered(&[0.1], &[100]).unwrap();
            let vals = (0..100).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
            let u = SampledFunction::new(grid, 1, vals).unwrap();
            let gu = g.apply_conv(&u).unwrap();
            for p in Lp::ALL {
                prop_assert!(gu.lp_seminorm(p) <= g.l1_norm() * u.lp_seminorm(p) * (1.0 + 1e-6));
            }
        }
    }

    #[test]
    fn zero_twist_is_identity() {
        let g = random_kernel(2, 0.1, 9, 1);
        assert_eq!(g.modulate(&[0.0]), g);
    }
}
