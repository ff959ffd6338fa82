mod common;

use eri_core::boys::boys;
use proptest::prelude::*;

/// `int_0^1 t^(2m) exp(-T t^2) dt` by composite Gauss-Legendre.
fn boys_quadrature(m: usize, t: f64) -> f64 {
    let rule = common::gauss_legendre(24);
    common::integrate(|x| x.powi(2 * m as i32) * (-t * x * x).exp(), 0.0, 1.0, 64, &rule)
}

#[test]
fn grid_matches_quadrature() {
    let mut worst = 0.0f64;
    for &t in &[0.0, 1e-6, 0.5, 1.0, 5.0, 20.0, 50.0, 200.0] {
        let v = boys(16, t).unwrap();
        for (m, &f) in v.iter().enumerate() {
            let q = boys_quadrature(m, t);
            worst = worst.max(((f - q) / q).abs());
        }
    }
    assert!(worst < 1e-13, "worst relative error {worst:e}");
}

#[test]
fn downward_recursion_is_consistent() {
    for &t in &[0.0, 1e-6, 0.5, 1.0, 5.0, 20.0, 36.0, 50.0, 200.0] {
        let v = boys(16, t).unwrap();
        for m in 0..16 {
            let down = (2.0 * t * v[m + 1] + (-t).exp()) / (2 * m + 1) as f64;
            assert!(((down - v[m]) / v[m]).abs() < 1e-12, "t={t} m={m}");
        }
    }
}

proptest! {
    #[test]
    fn bounded_and_decreasing(t in 0.0f64..500.0, m in 0usize..20) {
        let v = boys(m as i64 + 1, t).unwrap();
        prop_assert!(v[m] > 0.0 && v[m] <= 1.0 / (2 * m + 1) as f64);
        prop_assert!(v[m + 1] < v[m]);
        let w = boys(m as i64, t + 0.1).unwrap();
        prop_assert!(w[m] < v[m]);
    }

    #[test]
    fn agrees_with_quadrature(t in 0.0f64..100.0, m in 0usize..12) {
        let f = boys(m as i64, t).unwrap()[m];
        let q = boys_quadrature(m, t);
        prop_assert!(((f - q) / q).abs() < 1e-12);
    }
}
