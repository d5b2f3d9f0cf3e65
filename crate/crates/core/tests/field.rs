use std::f64::consts::PI;

use proptest::prelude::*;
use teki_core::field::{
    analyze, inner_k, inner_x, norm_k, norm_x, sample_cm, sample_prior, synthesize, CovarianceSpec, GridField,
    SpectralField,
};
use teki_core::rng::stream;

fn default_spec(kmax: usize) -> CovarianceSpec {
    CovarianceSpec::new(2.0, 15.0, kmax).unwrap()
}

/// Direct evaluation of `Σ_k c_k φ_k(x)` without separability.
fn eval_point(u: &SpectralField, x1: f64, x2: f64) -> f64 {
    let kmax = u.spec().kmax();
    let c = |k: usize| if k == 0 { 1.0 } else { 2f64.sqrt() };
    let mut s = 0.0;
    for k1 in 0..=kmax {
        for k2 in 0..=kmax {
            let phi = c(k1) * c(k2) * (k1 as f64 * PI * x1).cos() * (k2 as f64 * PI * x2).cos();
            s += u.coeff(k1, k2).unwrap() * phi;
        }
    }
    s
}

#[test]
fn eigenvalues_of_default_prior() {
    let spec = default_spec(32);
    assert!((spec.eigenvalue(0, 0).unwrap() - 15f64.powi(-4)).abs() < 1e-20);
    assert!((spec.eigenvalue(0, 0).unwrap() - 1.9753086e-5).abs() < 1e-12);
    let l10 = (PI * PI + 225.0).powi(-2);
    assert!((spec.eigenvalue(1, 0).unwrap() - l10).abs() < 1e-20);
    assert!((l10.sqrt() - 4.2577e-3).abs() < 1e-7);
    assert_eq!(spec.modes(), 33 * 33);
    assert!(spec.eigenvalue(33, 0).is_err());
}

#[test]
fn variance_ordering_breaks_ties_lexicographically() {
    let spec = default_spec(3);
    let order: Vec<(usize, usize)> = spec.modes_by_variance().into_iter().take(5).map(|i| spec.mode_at(i)).collect();
    assert_eq!(order, vec![(0, 0), (0, 1), (1, 0), (1, 1), (0, 2)]);
}

#[test]
fn prior_draw_matches_cm_half_bitwise() {
    let spec = default_spec(6);
    let a = sample_prior(&spec, &mut stream(3, "x"));
    let b = sample_cm(&spec, 0.5, &mut stream(3, "x"));
    assert_eq!(a, b);
    let c = sample_prior(&spec, &mut stream(4, "x"));
    assert_ne!(a, c);
}

#[test]
fn cm_draw_amplitudes() {
    let spec = CovarianceSpec::new(2.0, 2.0, 2).unwrap();
    let mut rng = stream(11, "moments");
    let draws = 20000;
    let mut second = vec![0.0; spec.modes()];
    for _ in 0..draws {
        let u = sample_cm(&spec, 1.0, &mut rng);
        for (s, c) in second.iter_mut().zip(u.coeffs()) {
            *s += c * c / draws as f64;
        }
    }
    for (s, lam) in second.iter().zip(spec.eigenvalues()) {
        // E c² = λ^(2a), standard error of the estimate ~ √(2/draws)
        assert!((s / (lam * lam) - 1.0).abs() < 0.05, "{s} vs {}", lam * lam);
    }
}

#[test]
fn synthesis_matches_pointwise_sum() {
    let spec = default_spec(5);
    let u = sample_prior(&spec, &mut stream(1, "s"));
    let g = synthesize(&u, 7);
    for j in 0..=7 {
        for i in 0..=7 {
            let exact = eval_point(&u, i as f64 / 7.0, j as f64 / 7.0);
            assert!((g.at(i, j) - exact).abs() <= 1e-12 * norm_x(&u).max(1e-300) * 40.0);
        }
    }
}

#[test]
fn constant_mode_and_corner_values() {
    let spec = default_spec(2);
    let one = SpectralField::mode(spec, 0, 0).unwrap();
    assert!(synthesize(&one, 4).values().iter().all(|v| (v - 1.0).abs() < 1e-15));
    let g = synthesize(&SpectralField::mode(spec, 1, 0).unwrap(), 4);
    assert!((g.at(0, 2) - 2f64.sqrt()).abs() < 1e-15);
    assert!((g.at(4, 2) + 2f64.sqrt()).abs() < 1e-15);
}

#[test]
fn analysis_needs_resolution() {
    let spec = default_spec(8);
    assert!(analyze(&GridField::constant(15, 1.0), &spec).is_err());
    let c = analyze(&GridField::constant(16, 2.0), &spec).unwrap();
    assert!((c.coeffs()[0] - 2.0).abs() < 1e-14);
    assert!(c.coeffs()[1..].iter().all(|v| v.abs() < 1e-14));
}

#[test]
fn inner_products_reject_mixed_specs() {
    let a = SpectralField::zeros(default_spec(2));
    let b = SpectralField::zeros(default_spec(3));
    assert!(inner_x(&a, &b).is_err());
    assert!(inner_k(&a, &b).is_err());
}

fn coeff_strategy(kmax: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0..2.0f64, (kmax + 1) * (kmax + 1))
}

proptest! {
    #[test]
    fn round_trip(coeffs in coeff_strategy(4), extra in 0usize..5) {
        let spec = default_spec(4);
        let u = SpectralField::new(spec, coeffs).unwrap();
        let back = analyze(&synthesize(&u, 8 + extra), &spec).unwrap();
        for (a, b) in u.coeffs().iter().zip(back.coeffs()) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn parseval(coeffs in coeff_strategy(3)) {
        let u = SpectralField::new(default_spec(3), coeffs).unwrap();
        let grid = synthesize(&u, 6).l2_norm();
        prop_assert!((grid - norm_x(&u)).abs() <= 1e-12 * norm_x(&u).max(1.0));
    }

    #[test]
    fn k_inner_product(a in coeff_strategy(2), b in coeff_strategy(2)) {
        let spec = CovarianceSpec::new(2.5, 3.0, 2).unwrap();
        let expected: f64 = (0..9).map(|i| {
            let (k1, k2) = spec.mode_at(i);
            let lam = (((k1 * k1 + k2 * k2) as f64) * PI * PI + 9.0).powf(-2.5);
            a[i] * b[i] / lam
        }).sum();
        let (u, v) = (SpectralField::new(spec, a).unwrap(), SpectralField::new(spec, b).unwrap());
        let got = inner_k(&u, &v).unwrap();
        prop_assert!((got - expected).abs() <= 1e-12 * expected.abs().max(1.0));
        prop_assert!((norm_k(&u).powi(2) - inner_k(&u, &u).unwrap()).abs() <= 1e-9 * norm_k(&u).powi(2).max(1.0));
    }
}
