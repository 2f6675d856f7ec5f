//! Seeded smooth test signals.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::grid::{Grid, SampledFunction};

/// `count` compactly supported `C^∞` bumps on `grid`, each a product of
/// `exp(-1/(1-r²))` profiles with a random complex amplitude per
/// component and a random plane-wave modulation. Centers lie in the inner
/// quarter of the grid so supports stay clear of the edges.
pub fn smooth_bumps(grid: &Grid, dim: usize, seed: u64, count: usize) -> Result<Vec<SampledFunction>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half: Vec<f64> = grid
        .axes()
        .iter()
        .map(|a| 0.5 * (a.coord(a.count() - 1) - a.coord(0)))
        .collect();
    (0..count)
        .map(|_| {
            let center: Vec<f64> = half.iter().map(|&h| rng.random_range(-0.25 * h..=0.25 * h)).collect();
            let radius: Vec<f64> = half.iter().map(|&h| rng.random_range(h / 16.0..=h / 8.0)).collect();
            let wave: Vec<f64> = half.iter().map(|_| rng.random_range(-2.0..=2.0)).collect();
            let amp: Vec<Complex64> = (0..dim)
                .map(|_| Complex64::from_polar(rng.random_range(0.5..=1.5), rng.random_range(0.0..2.0 * PI)))
                .collect();
            SampledFunction::from_fn(grid.clone(), dim, |x, out| {
                let mut env = 1.0;
                let mut phase = 0.0;
                for k in 0..x.len() {
                    let r = (x[k] - center[k]) / radius[k];
                    env *= if r.abs() < 1.0 { (-1.0 / (1.0 - r * r)).exp() } else { 0.0 };
                    phase += wave[k] * x[k];
                }
                let w = Complex64::from_polar(env, phase);
                for (o, a) in out.iter_mut().zip(&amp) {
                    *o = a * w;
                }
            })
        })
        .collect()
}
