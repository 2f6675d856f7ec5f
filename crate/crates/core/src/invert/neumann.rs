use num_complex::Complex64;

use super::{Diagnostics, InverseResult, Method, NeumannDiagnostics};
use crate::apw::ApwOperator;
use crate::error::{ApwError, Result};

/// Smallest `J` with `q^{J+1} / ((1 - q)|λ|) ≤ tol`, or `None` if no `J`
/// within `limit` suffices.
pub fn neumann_terms(q: f64, lambda_abs: f64, tol: f64, limit: usize) -> Option<usize> {
    if !(0.0..1.0).contains(&q) || lambda_abs <= 0.0 || tol <= 0.0 {
        return None;
    }
    let denom = (1.0 - q) * lambda_abs;
    let mut power = q;
    for j in 0..=limit {
        if power / denom <= tol {
            return Some(j);
        }
        power *= q;
    }
    None
}

/// `λ^{-1} Σ_{j=0}^{J} (-N/λ)^j`, each power cut back to the working grid.
pub fn invert_neumann(a: &ApwOperator, tol: f64, max_terms: usize) -> Result<InverseResult> {
    let lambda = a.lambda();
    if lambda == Complex64::new(0.0, 0.0) {
        return Err(ApwError::ZeroUnit);
    }
    if !(tol > 0.0) {
        return Err(ApwError::InvalidConfig(format!("tolerance must be positive, got {tol}")));
    }
    let q = a.neumann_ratio();
    if q >= 1.0 || !q.is_finite() {
        return Err(ApwError::NeumannNotApplicable { q });
    }
    let lambda_abs = lambda.norm();
    let terms = match neumann_terms(q, lambda_abs, tol, max_terms) {
        Some(j) => j,
        None => {
            let needed = neumann_terms(q, lambda_abs, tol, usize::MAX >> 1).unwrap_or(usize::MAX);
            let achievable = q.powi(max_terms as i32 + 1) / ((1.0 - q) * lambda_abs);
            return Err(ApwError::NeumannBudget { needed, max_terms, achievable });
        }
    };

    let step = a.without_unit().scale(-1.0 / lambda);
    let mut power = ApwOperator::identity(a.basis().clone(), a.grid().clone(), a.dim())?;
    power.set_drop_threshold(a.drop_threshold());
    let mut sum = power.clone();
    for _ in 0..terms {
        power = step.compose(&power)?.with_grid(a.grid().clone())?.truncate_support()?;
        sum = sum.add(&power)?;
    }
    let inverse = sum.scale(1.0 / lambda).with_grid(a.grid().clone())?;
    let diagnostics = NeumannDiagnostics { q, terms, tail_bound: q.powi(terms as i32 + 1) / ((1.0 - q) * lambda_abs) };
    Ok(InverseResult::new(inverse, Method::Neumann, Diagnostics::Neumann(diagnostics)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{FreqLabel, FrequencyBasis, Grid, Kernel, Profile};

    #[test]
    fn term_count_half_ratio() {
        // 0.5^{J+1}/0.5 = 0.5^J ≤ 1e-8 first holds at J = 27 (0.5^26 ≈ 1.49e-8)
        assert_eq!(neumann_terms(0.5, 1.0, 1e-8, 100), Some(27));
        assert!(0.5f64.powi(26) > 1e-8 && 0.5f64.powi(27) <= 1e-8);
        assert_eq!(neumann_terms(0.0, 2.0, 1e-3, 0), Some(0));
        assert_eq!(neumann_terms(0.5, 1.0, 1e-8, 26), None);
        assert_eq!(neumann_terms(1.0, 1.0, 1e-8, 100), None);
    }

    fn volterra_operator(step: f64, half_width: f64) -> ApwOperator {
        let grid = Grid::centered_half_width(1, step, half_width).unwrap();
        let k = Kernel::analytic(Profile::ExpOneSided { gamma: 0.5, rate: 1.0 }, &[step], 1, None).unwrap();
        ApwOperator::identity(FrequencyBasis::line(1.0).unwrap(), grid, 1)
            .unwrap()
            .with_term(FreqLabel::zero(1), k)
            .unwrap()
    }

    #[test]
    fn volterra_inverse_kernel() {
        let a = volterra_operator(1.0 / 32.0, 32.0);
        let res = invert_neumann(&a, 1e-9, 200).unwrap();
        assert_eq!(res.mu(), Complex64::new(1.0, 0.0));
        let m = res.inverse.term(&FreqLabel::zero(1)).unwrap();
        // (1 + g)^{-1} - 1 has kernel -0.5 e^{-1.5x} on x > 0, L1 norm 1/3
        assert!((m.l1_norm() - 1.0 / 3.0).abs() < 1e-3, "{}", m.l1_norm());
        let grid = m.grid();
        let mut worst: f64 = 0.0;
        for (i, p) in grid.points().iter().enumerate() {
            let x = p[0];
            if x.abs() < 1e-12 {
                continue;
            }
            let exact = if x > 0.0 { -0.5 * (-1.5 * x).exp() } else { 0.0 };
            worst = worst.max((m.block(i)[0].re - exact).abs() + m.block(i)[0].im.abs());
        }
        assert!(worst < 1e-3, "{worst}");
        match res.diagnostics {
            Diagnostics::Neumann(d) => {
                assert!((d.q - 0.5).abs() < 1e-12);
                assert!(d.tail_bound <= 1e-9);
            }
            _ => panic!("wrong diagnostics"),
        }
    }

    #[test]
    fn rejects_large_ratio_and_budget() {
        let grid = Grid::centered_half_width(1, 0.25, 8.0).unwrap();
        let k = Kernel::analytic(Profile::Gaussian { mass: 1.5, width: 1.0 }, &[0.25], 1, None).unwrap();
        let a = ApwOperator::identity(FrequencyBasis::line(1.0).unwrap(), grid.clone(), 1)
            .unwrap()
            .with_term(FreqLabel::new(vec![1]), k)
            .unwrap();
        assert!(matches!(invert_neumann(&a, 1e-8, 100), Err(ApwError::NeumannNotApplicable { .. })));

        let small = Kernel::analytic(Profile::Gaussian { mass: 0.5, width: 1.0 }, &[0.25], 1, None).unwrap();
        let b = ApwOperator::identity(FrequencyBasis::line(1.0).unwrap(), grid, 1)
            .unwrap()
            .with_term(FreqLabel::new(vec![1]), small)
            .unwrap();
        match invert_neumann(&b, 1e-8, 3) {
            Err(ApwError::NeumannBudget { needed, max_terms, achievable }) => {
                assert_eq!(max_terms, 3);
                assert!(needed > 3);
                assert!((achievable - 0.5f64.powi(4) / 0.5).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn zero_unit_rejected() {
        let grid = Grid::centered_half_width(1, 0.25, 4.0).unwrap();
        let a = ApwOperator::new(FrequencyBasis::line(1.0).unwrap(), grid, 1, Complex64::new(0.0, 0.0)).unwrap();
        assert_eq!(invert_neumann(&a, 1e-8, 10), Err(ApwError::ZeroUnit));
    }

    #[test]
    fn pure_multiple_of_identity() {
        let grid = Grid::centered_half_width(1, 0.25, 4.0).unwrap();
        let a = ApwOperator::new(FrequencyBasis::line(1.0).unwrap(), grid, 2, Complex64::new(0.0, 2.0)).unwrap();
        let res = invert_neumann(&a, 1e-12, 10).unwrap();
        assert_eq!(res.mu(), Complex64::new(0.0, -0.5));
        assert!(res.inverse.terms().is_empty());
    }
}
