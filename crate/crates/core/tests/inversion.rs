use apw_core::invert::{invert, verify_inverse, InvertOptions, MethodChoice, VerifyConfig};
use apw_core::{ApwOperator, Complex64, FreqLabel, FrequencyBasis, Grid, Kernel, Profile};
use proptest::prelude::*;

fn operator(lambda: Complex64, terms: &[(i64, f64, f64)]) -> ApwOperator {
    let step = 0.125;
    let mut op =
        ApwOperator::new(FrequencyBasis::line(1.0).unwrap(), Grid::centered_half_width(1, step, 16.0).unwrap(), 1, lambda)
            .unwrap();
    for &(a, mass, width) in terms {
        let k = Kernel::analytic(Profile::Gaussian { mass, width }, &[step], 1, None).unwrap();
        op.insert_term(FreqLabel::new(vec![a]), k).unwrap();
    }
    op
}

fn strategy() -> impl Strategy<Value = ApwOperator> {
    (
        0.8f64..1.6,
        0.0f64..std::f64::consts::TAU,
        prop::collection::btree_map(-2i64..=2, (0.05f64..0.25, 0.5f64..1.5), 1..=3),
    )
        .prop_map(|(r, phi, terms)| {
            let t: Vec<(i64, f64, f64)> = terms.into_iter().map(|(a, (m, w))| (a, m, w)).collect();
            operator(Complex64::from_polar(r, phi), &t)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn both_methods_produce_verified_inverses(a in strategy()) {
        for method in [MethodChoice::Neumann, MethodChoice::Fiber] {
            let opts = InvertOptions { method, ..Default::default() };
            let res = invert(&a, &opts).unwrap();
            prop_assert!((res.mu() - 1.0 / a.lambda()).norm() < 1e-14);
            let rep = verify_inverse(&a, &res.inverse, &VerifyConfig::default()).unwrap();
            prop_assert!(rep.passed(), "{:?}: {:?}", method, rep);
        }
    }

    #[test]
    fn decay_table_is_cumulative(a in strategy()) {
        let res = invert(&a, &InvertOptions::default()).unwrap();
        let mut total = 0.0;
        for row in &res.decay {
            total += row.l1_norm;
            prop_assert!((row.cumulative - total).abs() <= 1e-12 * total.max(1.0));
        }
        prop_assert!((total + res.mu().norm() - res.inverse.apw_norm()).abs() <= 1e-10);
    }
}

#[test]
fn inverse_of_inverse_recovers_operator() {
    let a = operator(Complex64::new(1.0, 0.3), &[(-1, 0.2, 1.0), (1, 0.15, 0.7)]);
    let m = invert(&a, &InvertOptions::default()).unwrap().inverse;
    let back = invert(&m, &InvertOptions::default()).unwrap().inverse;
    let diff = back.sub(&a).unwrap();
    assert!(diff.apw_norm() + diff.slack() < 1e-6, "{}", diff.apw_norm());
}

#[test]
fn zero_unit_is_rejected() {
    let a = operator(Complex64::new(0.0, 0.0), &[(1, 0.2, 1.0)]);
    assert!(invert(&a, &InvertOptions::default()).is_err());
}
