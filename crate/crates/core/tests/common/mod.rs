//! Independent oracles shared by the integration targets.

#![allow(dead_code)]

pub mod gradcheck;

use std::f64::consts::PI;

use num_complex::Complex64;

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// Bessel `J0` from its integral representation.
pub fn bessel_j0(x: f64) -> f64 {
    simpson(|t| (x * t.sin()).cos(), 0.0, PI, 4000) / PI
}

/// Bessel `Y0` from its integral representation (valid for `x > 0`).
pub fn bessel_y0(x: f64) -> f64 {
    let a = simpson(|t| (x * t.sin()).sin(), 0.0, PI, 4000) / PI;
    // exp(-x sinh t) is below 1e-300 well before t = 12 for x >= 0.1
    let b = simpson(|t| (-x * t.sinh()).exp(), 0.0, 12.0, 40_000);
    a - 2.0 / PI * b
}

/// `H0^(2)(x) = J0(x) - i Y0(x)`.
pub fn hankel2_0(x: f64) -> Complex64 {
    Complex64::new(bessel_j0(x), -bessel_y0(x))
}

/// Outgoing solution of `lap G + k^2 G = delta` for the `exp(-i w t)`
/// transform convention: `(i/4) H0^(2)(k r)`.
pub fn green_2d(k: f64, r: f64) -> Complex64 {
    Complex64::new(0.0, 0.25) * hankel2_0(k * r)
}

/// Brick-wall band-pass of a real series by direct DFT: keeps bins `k`
/// whose frequency `k / (n dt)` lies in `[lo, hi]`, plus their mirrors.
pub fn bandpass_direct(x: &[f64], dt: f64, lo: f64, hi: f64) -> Vec<f64> {
    let n = x.len();
    let df = 1.0 / (n as f64 * dt);
    let keep: Vec<usize> = (0..=n / 2).filter(|&k| k as f64 * df >= lo - 1e-9 && k as f64 * df <= hi + 1e-9).collect();
    let mut coef = Vec::with_capacity(keep.len());
    for &k in &keep {
        let mut s = Complex64::new(0.0, 0.0);
        for (j, v) in x.iter().enumerate() {
            let ph = -2.0 * PI * ((k * j) % n) as f64 / n as f64;
            s += Complex64::from_polar(*v, ph);
        }
        coef.push(s);
    }
    (0..n)
        .map(|j| {
            let mut acc = 0.0;
            for (&k, c) in keep.iter().zip(&coef) {
                let e = Complex64::from_polar(1.0, 2.0 * PI * ((k * j) % n) as f64 / n as f64);
                let term = (c * e).re;
                acc += if k == 0 || 2 * k == n { term } else { 2.0 * term };
            }
            acc / n as f64
        })
        .collect()
}

pub fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

/// Least-squares slope of `log e` against `log h`.
pub fn fitted_order(h: &[f64], e: &[f64]) -> f64 {
    let n = h.len() as f64;
    let lx: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = e.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}
