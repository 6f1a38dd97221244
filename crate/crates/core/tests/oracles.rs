mod common;

use common::{bandpass_direct, bessel_j0, bessel_y0, fitted_order, green_2d, rel_l2};
use num_complex::Complex64;

#[test]
fn bessel_reference_values() {
    let cases = [(1.0, 0.7651976865579666, 0.08825696421567696), (10.0, -0.2459357644513483, 0.0556711672835994)];
    for (x, j, y) in cases {
        assert!((bessel_j0(x) - j).abs() < 1e-10, "J0({x})");
        assert!((bessel_y0(x) - y).abs() < 1e-9, "Y0({x})");
    }
}

#[test]
fn green_function_satisfies_homogeneous_helmholtz_off_source() {
    let k = 1.3;
    let h = 1e-3;
    for r in [2.0, 5.0, 9.0] {
        let g = |r: f64| green_2d(k, r);
        // radial Laplacian g'' + g'/r
        let d2 = (g(r + h) - g(r) * 2.0 + g(r - h)) / (h * h);
        let d1 = (g(r + h) - g(r - h)) / (2.0 * h);
        let res: Complex64 = d2 + d1 / r + g(r) * (k * k);
        assert!(res.norm() < 1e-5 * g(r).norm().max(1e-3), "r={r} residual {}", res.norm());
    }
}

#[test]
fn green_function_is_outgoing_for_the_transform_sign() {
    // exp(-i w t) with w > 0 moves outward when the phase decreases with r
    let k = 2.0;
    let a = green_2d(k, 20.0).arg();
    let b = green_2d(k, 20.01).arg();
    let dphase = (b - a + std::f64::consts::PI).rem_euclid(2.0 * std::f64::consts::PI) - std::f64::consts::PI;
    assert!(dphase < 0.0);
}

#[test]
fn full_band_pass_is_identity() {
    let x: Vec<f64> = (0..64).map(|i| ((i * 7919) % 97) as f64 / 97.0 - 0.5).collect();
    let y = bandpass_direct(&x, 1e-3, 0.0, 1e6);
    assert!(rel_l2(&y, &x) < 1e-12);
}

#[test]
fn band_pass_keeps_only_in_band_tones() {
    let (n, dt) = (200, 1e-3);
    let tone = |f: f64| (0..n).map(move |i| (2.0 * std::f64::consts::PI * f * i as f64 * dt).cos());
    let x: Vec<f64> = tone(15.0).zip(tone(60.0)).map(|(a, b)| a + b).collect();
    let want: Vec<f64> = tone(15.0).collect();
    assert!(rel_l2(&bandpass_direct(&x, dt, 10.0, 20.0), &want) < 1e-10);
}

#[test]
fn fitted_order_recovers_power_law() {
    let h: [f64; 3] = [0.1, 0.05, 0.025];
    let e: Vec<f64> = h.iter().map(|h| 3.0 * h.powi(4)).collect();
    assert!((fitted_order(&h, &e) - 4.0).abs() < 1e-12);
}
