use crate::apw::ApwOperator;
use crate::error::Result;
use crate::grid::Lp;
use crate::signal::smooth_bumps;

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyConfig {
    pub algebraic_tol: f64,
    pub application_tol: f64,
    pub seed: u64,
    pub samples: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig { algebraic_tol: 1e-6, application_tol: 1e-4, seed: 0, samples: 10 }
    }
}

/// Residuals of a candidate inverse `M` of `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    /// `‖A M - 1‖` in the class norm plus the mass dropped while forming it.
    pub left: f64,
    /// `‖M A - 1‖`, likewise.
    pub right: f64,
    /// Dropped-mass part of `left` and `right`.
    pub left_slack: f64,
    pub right_slack: f64,
    /// Worst relative `‖M A u - u‖_p / ‖u‖_p` over the test signals.
    pub application: Vec<(Lp, f64)>,
    pub algebraic_tol: f64,
    pub application_tol: f64,
}

impl ResidualReport {
    pub fn algebraic_passed(&self) -> bool {
        self.left <= self.algebraic_tol && self.right <= self.algebraic_tol
    }

    pub fn application_passed(&self) -> bool {
        self.application.iter().all(|&(_, v)| v <= self.application_tol)
    }

    pub fn passed(&self) -> bool {
        self.algebraic_passed() && self.application_passed()
    }

    /// `(kind, p, value)` rows; `p` is empty for algebraic rows.
    pub fn rows(&self) -> Vec<(&'static str, &'static str, f64)> {
        let mut rows = vec![("algebraic_left", "", self.left), ("algebraic_right", "", self.right)];
        rows.extend(self.application.iter().map(|&(p, v)| ("application", p.label(), v)));
        rows
    }
}

pub fn verify_inverse(a: &ApwOperator, m: &ApwOperator, config: &VerifyConfig) -> Result<ResidualReport> {
    let one = ApwOperator::identity(a.basis().clone(), a.grid().clone(), a.dim())?;
    let am = a.compose(m)?.sub(&one)?;
    let ma = m.compose(a)?.sub(&one)?;

    let signals = smooth_bumps(a.grid(), a.dim(), config.seed, config.samples)?;
    let mut worst = [0.0f64; 3];
    for u in &signals {
        let back = m.apply(&a.apply(u)?)?;
        let err = back.sub(u)?;
        for (k, p) in Lp::ALL.iter().enumerate() {
            let base = u.lp_seminorm(*p);
            worst[k] = worst[k].max(err.lp_seminorm(*p) / base);
        }
    }
    Ok(ResidualReport {
        left: am.apw_norm() + am.slack(),
        right: ma.apw_norm() + ma.slack(),
        left_slack: am.slack(),
        right_slack: ma.slack(),
        application: Lp::ALL.iter().copied().zip(worst).collect(),
        algebraic_tol: config.algebraic_tol,
        application_tol: config.application_tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Complex64;
    use crate::invert::invert_neumann;
    use crate::{FreqLabel, FrequencyBasis, Grid, Kernel, Profile};

    fn operator() -> ApwOperator {
        let step = 0.125;
        let grid = Grid::centered_half_width(1, step, 20.0).unwrap();
        let g = |mass| Kernel::analytic(Profile::Gaussian { mass, width: 1.0 }, &[step], 1, None).unwrap();
        ApwOperator::identity(FrequencyBasis::line(std::f64::consts::SQRT_2).unwrap(), grid, 1)
            .unwrap()
            .with_term(FreqLabel::new(vec![1]), g(0.2))
            .unwrap()
            .with_term(FreqLabel::zero(1), g(0.15))
            .unwrap()
    }

    #[test]
    fn true_inverse_has_small_residuals() {
        let a = operator();
        let inv = invert_neumann(&a, 1e-11, 200).unwrap();
        let rep = verify_inverse(&a, &inv.inverse, &VerifyConfig::default()).unwrap();
        assert!(rep.passed(), "{rep:?}");
        assert!(rep.left < 1e-8 && rep.right < 1e-8, "{rep:?}");
        assert_eq!(rep.rows().len(), 5);
    }

    #[test]
    fn wrong_inverse_is_caught() {
        let a = operator();
        let inv = invert_neumann(&a, 1e-11, 200).unwrap();
        let wrong = inv.inverse.scale(Complex64::new(1.2, 0.0));
        let rep = verify_inverse(&a, &wrong, &VerifyConfig::default()).unwrap();
        assert!(rep.left >= 0.1 && rep.right >= 0.1);
        assert!(rep.application.iter().all(|&(_, v)| v >= 0.1), "{rep:?}");
        assert!(!rep.passed());
    }
}
