mod common;

use common::{beta_pdf_quadrature, incbeta_quadrature, integrate, ln_gamma_stirling};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use swfdr_core::numerics::*;

fn shape(a: f64, b: f64) -> BetaShape {
    BetaShape::new(a, b).unwrap()
}

#[test]
fn beta_log_pdf_examples() {
    assert!(beta_log_pdf(0.5, shape(1.0, 1.0)).unwrap().abs() < 1e-14);
    assert!((beta_log_pdf(0.25, shape(2.0, 1.0)).unwrap() - 0.5f64.ln()).abs() < 1e-14);

    let (p, a, b): (f64, f64, f64) = (0.013, 0.5, 30.0);
    let ln_b = ln_gamma_stirling(a) + ln_gamma_stirling(b) - ln_gamma_stirling(a + b);
    let expected = (a - 1.0) * p.ln() + (b - 1.0) * (1.0 - p).ln() - ln_b;
    assert!((beta_log_pdf(p, shape(a, b)).unwrap() - expected).abs() < 1e-10);
}

#[test]
fn ln_gamma_matches_stirling_series() {
    for &x in &[1e-3, 0.1, 0.5, 1.0, 1.5, 2.5, 7.3, 30.0, 171.5, 1e4] {
        let rel = (ln_gamma(x) - ln_gamma_stirling(x)).abs() / ln_gamma_stirling(x).abs().max(1.0);
        assert!(rel < 1e-13, "x = {x}: {} vs {}", ln_gamma(x), ln_gamma_stirling(x));
    }
}

#[test]
fn beta_cdf_examples() {
    assert_eq!(beta_cdf(1.0, shape(0.3, 7.0)).unwrap(), 1.0);
    assert_eq!(beta_cdf(0.0, shape(0.3, 7.0)).unwrap(), 0.0);
    assert!((beta_cdf(0.5, shape(2.0, 2.0)).unwrap() - 0.5).abs() < 1e-15);
    let oracle = incbeta_quadrature(0.05, 0.7, 12.0);
    assert!((beta_cdf(0.05, shape(0.7, 12.0)).unwrap() - oracle).abs() < 1e-8);
}

#[test]
fn beta_cdf_agrees_with_statrs() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let a = rng.random_range(0.1..50.0);
        let b = rng.random_range(0.1..50.0);
        let x: f64 = rng.random();
        let ours = beta_cdf(x, shape(a, b)).unwrap();
        let theirs = statrs::function::beta::beta_reg(a, b, x);
        assert!((ours - theirs).abs() < 1e-10, "a={a} b={b} x={x}: {ours} vs {theirs}");
    }
}

#[test]
fn domain_errors() {
    let s = shape(2.0, 3.0);
    assert!(beta_log_pdf(0.0, s).is_err());
    assert!(beta_log_pdf(1.0, s).is_err());
    assert!(beta_cdf(-0.1, s).is_err());
    assert!(beta_cdf(1.1, s).is_err());
    assert!(trunc_beta_log_pdf(0.06, s, 0.05).is_err());
    assert!(trunc_beta_log_pdf(0.0, s, 0.05).is_err());
    assert!(trunc_beta_cdf(0.051, s, 0.05).is_err());
    assert!(trunc_uniform_pdf(0.0, 0.05).is_err());
    assert!(trunc_uniform_cdf(0.06, 0.05).is_err());
    assert!(BetaShape::new(0.0, 1.0).is_err());
    assert!(BetaShape::new(1.0, f64::NAN).is_err());
    assert!(BetaShape::new(f64::INFINITY, 1.0).is_err());
}

#[test]
fn truncated_examples() {
    let flat = shape(1.0, 1.0);
    assert!((trunc_beta_log_pdf(0.01, flat, 0.05).unwrap() - 20f64.ln()).abs() < 1e-12);

    let s = shape(0.4, 8.0);
    let total = integrate(
        |u: f64| {
            // p = u^(1/a) removes the endpoint singularity
            let p = u.powf(1.0 / 0.4);
            if p <= 0.0 {
                return 0.0;
            }
            trunc_beta_log_pdf(p, s, 0.05).unwrap().exp() * p / (0.4 * u)
        },
        0.0,
        0.05f64.powf(0.4),
        1e-13,
    );
    assert!((total - 1.0).abs() < 1e-8, "{total}");

    let (a, b, p) = (0.5, 20.0, 0.002);
    let expected = beta_pdf_quadrature(p, a, b) / incbeta_quadrature(0.05, a, b);
    let got = trunc_beta_log_pdf(p, shape(a, b), 0.05).unwrap().exp();
    assert!((got - expected).abs() < 1e-8 * expected.max(1.0), "{got} vs {expected}");

    assert_eq!(trunc_beta_cdf(0.05, s, 0.05).unwrap(), 1.0);
    assert_eq!(trunc_beta_cdf(0.0, s, 0.05).unwrap(), 0.0);
    assert!((trunc_beta_cdf(0.01, flat, 0.05).unwrap() - 0.2).abs() < 1e-12);

    assert_eq!(trunc_uniform_pdf(0.013, 0.05).unwrap(), 20.0);
    assert_eq!(trunc_uniform_cdf(0.025, 0.05).unwrap(), 0.5);
    assert_eq!(trunc_uniform_cdf(0.05, 0.05).unwrap(), 1.0);
}

#[test]
fn extreme_shapes_stay_finite() {
    for &(a, b) in &[
        (SHAPE_MIN, SHAPE_MIN),
        (SHAPE_MAX, SHAPE_MIN),
        (SHAPE_MIN, SHAPE_MAX),
        (SHAPE_MAX, SHAPE_MAX),
        (500.0, 0.5),
    ] {
        let t = TruncatedBeta::new(shape(a, b), 0.05);
        assert!(t.ln_mass().is_finite(), "a={a} b={b}");
        for &p in &[1e-10, 1e-4, 0.01, 0.05] {
            assert!(t.ln_pdf(p).is_finite(), "a={a} b={b} p={p}");
            let c = t.cdf(p);
            assert!((0.0..=1.0).contains(&c), "a={a} b={b} p={p}: {c}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn beta_cdf_is_monotone(a in 0.05f64..100.0, b in 0.05f64..100.0) {
        let s = shape(a, b);
        let mut prev = 0.0;
        for i in 0..=1000 {
            let c = beta_cdf(i as f64 / 1000.0, s).unwrap();
            prop_assert!(c >= prev, "not monotone at {i}: {c} < {prev}");
            prev = c;
        }
    }

    #[test]
    fn beta_pdf_integrates_to_one(a in 0.1f64..50.0, b in 0.1f64..50.0) {
        // upper half via the reflected shape; p = u^(1/a) when a < 1
        let half = |a: f64, b: f64| {
            let s = shape(a, b);
            if a >= 1.0 {
                return integrate(|p: f64| if p <= 0.0 { 0.0 } else { beta_log_pdf(p, s).unwrap().exp() }, 0.0, 0.5, 1e-12);
            }
            integrate(|u: f64| {
                let p = u.powf(1.0 / a);
                if p <= 0.0 { 0.0 } else { beta_log_pdf(p, s).unwrap().exp() * p / (a * u) }
            }, 0.0, 0.5f64.powf(a), 1e-12)
        };
        let (left, right) = (half(a, b), half(b, a));
        prop_assert!((left + right - 1.0).abs() < 1e-6, "{}", left + right);
    }

    #[test]
    fn truncated_cdf_is_one_at_alpha(a in 1e-4f64..1e4, b in 1e-4f64..1e4, alpha in 0.001f64..0.999) {
        prop_assert_eq!(trunc_beta_cdf(alpha, shape(a, b), alpha).unwrap(), 1.0);
    }

    #[test]
    fn clamping_stays_in_range(a in -1e6f64..1e6, b in -1e6f64..1e6) {
        let s = BetaShape::clamped(a, b);
        prop_assert!((SHAPE_MIN..=SHAPE_MAX).contains(&s.a()));
        prop_assert!((SHAPE_MIN..=SHAPE_MAX).contains(&s.b()));
    }
}

#[test]
fn beta_cdf_quadrature_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(2012);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let a = rng.random_range(0.2..20.0);
        let b = rng.random_range(0.2..60.0);
        for i in 1..=50 {
            let x = i as f64 / 51.0;
            let err = (beta_cdf(x, shape(a, b)).unwrap() - incbeta_quadrature(x, a, b)).abs();
            worst = worst.max(err);
        }
    }
    assert!(worst <= 1e-8, "worst error {worst}");
}
