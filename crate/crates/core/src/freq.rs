//! Time-to-frequency conversion of simulated wavefields, spectrum analysis
//! and band-limited reconstruction.
//!
//! Convention: `U(f) = sum_n p[n] exp(-2 pi i f n dt) dt`; the inverse
//! divides by `n_t dt`.

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fdtd::{simulate_streaming, AbsorbingBoundary, SourceSpec, TimeGrid, TimeWavefield};
use crate::velocity::{Grid, VelocityModel};

/// Tolerance when deciding that `f n_t dt` is an integer.
const BIN_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct FreqWavefield {
    pub grid: Grid,
    pub time: TimeGrid,
    pub freq: f64,
    pub source_index: usize,
    pub model_id: u64,
    /// Row-major `nz x nx`.
    pub u: Vec<Complex64>,
}

impl FreqWavefield {
    pub fn mean_abs(&self) -> f64 {
        self.u.iter().map(|c| c.norm()).sum::<f64>() / self.u.len() as f64
    }

    pub fn at(&self, iz: usize, ix: usize) -> Complex64 {
        self.u[self.grid.idx(iz, ix)]
    }
}

pub fn nyquist(tg: &TimeGrid) -> f64 {
    0.5 / tg.dt
}

/// Index of the DFT bin for `freq`, or an error if it is off-bin or above Nyquist.
pub fn bin_index(freq: f64, tg: &TimeGrid) -> Result<usize> {
    let ny = nyquist(tg);
    if !freq.is_finite() || freq < 0.0 || freq > ny * (1.0 + BIN_TOL) {
        return Err(Error::AboveNyquist { freq, nyquist: ny });
    }
    let k = freq * tg.nt as f64 * tg.dt;
    if (k - k.round()).abs() > BIN_TOL * k.max(1.0) {
        return Err(Error::NonIntegerBin(freq));
    }
    Ok(k.round() as usize)
}

pub fn bin_frequency(k: usize, tg: &TimeGrid) -> f64 {
    k as f64 / (tg.nt as f64 * tg.dt)
}

/// Accumulates the discrete-time Fourier transform of a field sequence at a
/// fixed set of frequencies, one time level at a time.
pub struct DftAccumulator {
    freqs: Vec<f64>,
    dt: f64,
    len: usize,
    acc: Vec<Complex64>,
}

impl DftAccumulator {
    /// Arbitrary frequencies, no bin check.
    pub fn new(freqs: &[f64], dt: f64, len: usize) -> Self {
        Self { freqs: freqs.to_vec(), dt, len, acc: vec![Complex64::new(0.0, 0.0); freqs.len() * len] }
    }

    pub fn push(&mut self, n: usize, field: &[f64]) {
        debug_assert_eq!(field.len(), self.len);
        if field.iter().all(|&x| x == 0.0) {
            return;
        }
        for (j, &f) in self.freqs.iter().enumerate() {
            let phase = -std::f64::consts::TAU * f * n as f64 * self.dt;
            let w = Complex64::from_polar(self.dt, phase);
            let acc = &mut self.acc[j * self.len..(j + 1) * self.len];
            for (a, &p) in acc.iter_mut().zip(field) {
                *a += w * p;
            }
        }
    }

    /// Per-frequency fields in the order given at construction.
    pub fn finish(self) -> Vec<Vec<Complex64>> {
        self.acc.chunks(self.len).map(|c| c.to_vec()).collect()
    }
}

fn check_distinct(freqs: &[f64]) -> Result<()> {
    for (i, a) in freqs.iter().enumerate() {
        if freqs[..i].iter().any(|b| (a - b).abs() < 1e-12) {
            return Err(Error::DuplicateFrequency(*a));
        }
    }
    Ok(())
}

/// Transform at integer-bin frequencies in `[0, Nyquist]`.
pub fn time_to_freq(w: &TimeWavefield, freqs: &[f64]) -> Result<Vec<FreqWavefield>> {
    for &f in freqs {
        bin_index(f, &w.time)?;
    }
    Ok(dtft_at(w, freqs))
}

/// Transform at arbitrary frequencies (no bin snapping).
pub fn dtft_at(w: &TimeWavefield, freqs: &[f64]) -> Vec<FreqWavefield> {
    let m = w.grid.len();
    let mut acc = DftAccumulator::new(freqs, w.time.dt, m);
    for n in 0..w.time.nt {
        acc.push(n, w.snapshot(n));
    }
    acc.finish()
        .into_iter()
        .zip(freqs)
        .map(|(u, &freq)| FreqWavefield { grid: w.grid, time: w.time, freq, source_index: 0, model_id: 0, u })
        .collect()
}

/// Simulates one shot and returns its transform at `freqs` without storing
/// the time history.
pub fn label_fields(v: &VelocityModel, src: &SourceSpec, freqs: &[f64], tg: &TimeGrid, ab: &AbsorbingBoundary) -> Result<Vec<FreqWavefield>> {
    check_freq_list(freqs, tg)?;
    label_fields_any(v, src, freqs, tg, ab)
}

/// [`label_fields`] at arbitrary (off-bin) frequencies.
pub fn label_fields_any(v: &VelocityModel, src: &SourceSpec, freqs: &[f64], tg: &TimeGrid, ab: &AbsorbingBoundary) -> Result<Vec<FreqWavefield>> {
    check_distinct(freqs)?;
    let mut acc = DftAccumulator::new(freqs, tg.dt, v.grid.len());
    simulate_streaming(v, src, tg, ab, |n, field| acc.push(n, field))?;
    Ok(acc
        .finish()
        .into_iter()
        .zip(freqs)
        .map(|(u, &freq)| FreqWavefield { grid: v.grid, time: *tg, freq, source_index: 0, model_id: 0, u })
        .collect())
}

/// Mean magnitude per frequency bin `0..=n_t/2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumProfile {
    pub freqs: Vec<f64>,
    pub magnitude: Vec<f64>,
}

/// Running sum behind [`energy_spectrum`]; feed it one wavefield at a time.
pub struct SpectrumAccumulator {
    time: TimeGrid,
    sum: Vec<f64>,
    count: usize,
    planner: FftPlanner<f64>,
}

impl SpectrumAccumulator {
    pub fn new(time: TimeGrid) -> Self {
        Self { time, sum: vec![0.0; time.nt / 2 + 1], count: 0, planner: FftPlanner::new() }
    }

    pub fn add(&mut self, w: &TimeWavefield) -> Result<()> {
        if w.time != self.time {
            return Err(Error::InvalidArgument("wavefields in a spectrum must share a time grid".into()));
        }
        let nt = self.time.nt;
        let m = w.grid.len();
        let fft = self.planner.plan_fft_forward(nt);
        let mut buf = vec![Complex64::new(0.0, 0.0); nt];
        for node in 0..m {
            for (n, b) in buf.iter_mut().enumerate() {
                *b = Complex64::new(w.p[n * m + node] * self.time.dt, 0.0);
            }
            fft.process(&mut buf);
            for (s, b) in self.sum.iter_mut().zip(&buf) {
                *s += b.norm();
            }
        }
        self.count += m;
        Ok(())
    }

    pub fn finish(self) -> SpectrumProfile {
        let c = self.count.max(1) as f64;
        SpectrumProfile {
            freqs: (0..self.sum.len()).map(|k| bin_frequency(k, &self.time)).collect(),
            magnitude: self.sum.into_iter().map(|s| s / c).collect(),
        }
    }
}

/// Mean `|U|` per bin over space, sources and samples.
pub fn energy_spectrum(dataset: &[TimeWavefield]) -> Result<SpectrumProfile> {
    let first = dataset.first().ok_or_else(|| Error::InvalidArgument("empty dataset".into()))?;
    let mut acc = SpectrumAccumulator::new(first.time);
    for w in dataset {
        acc.add(w)?;
    }
    Ok(acc.finish())
}

/// Share of the profile's total falling in `[lo, hi]` Hz.
pub fn band_energy_fraction(profile: &SpectrumProfile, lo: f64, hi: f64) -> Result<f64> {
    if lo > hi {
        return Err(Error::InvalidArgument(format!("band [{lo}, {hi}] is empty")));
    }
    let total: f64 = profile.magnitude.iter().sum();
    if total <= 0.0 {
        return Err(Error::ZeroSpectrum);
    }
    let band: f64 = profile
        .freqs
        .iter()
        .zip(&profile.magnitude)
        .filter(|(f, _)| **f >= lo - BIN_TOL && **f <= hi + BIN_TOL)
        .map(|(_, m)| m)
        .sum();
    Ok(band / total)
}

/// Inverse transform from the given bins and their conjugate partners,
/// keeping the real part. No bins gives a zero field.
pub fn reconstruct_time(fields: &[FreqWavefield], grid: Grid, time: TimeGrid, source: SourceSpec) -> Result<TimeWavefield> {
    let nt = time.nt;
    let m = grid.len();
    let mut bins = Vec::with_capacity(fields.len());
    for f in fields {
        if f.grid != grid || f.time != time || f.u.len() != m {
            return Err(Error::Shape("reconstruction inputs must share grid and time axis".into()));
        }
        let k = bin_index(f.freq, &time)?;
        if bins.contains(&k) {
            return Err(Error::DuplicateFrequency(f.freq));
        }
        bins.push(k);
    }
    let mut out = TimeWavefield::zeros(grid, time, source);
    if fields.is_empty() {
        return Ok(out);
    }
    let ifft = FftPlanner::new().plan_fft_inverse(nt);
    let scale = 1.0 / (nt as f64 * time.dt);
    let mut buf = vec![Complex64::new(0.0, 0.0); nt];
    for node in 0..m {
        buf.iter_mut().for_each(|b| *b = Complex64::new(0.0, 0.0));
        for (f, &k) in fields.iter().zip(&bins) {
            let u = f.u[node];
            buf[k] = u;
            if k != 0 && 2 * k != nt {
                buf[nt - k] = u.conj();
            }
        }
        ifft.process(&mut buf);
        for (n, b) in buf.iter().enumerate() {
            out.p[n * m + node] = b.re * scale;
        }
    }
    Ok(out)
}

/// Pressure series at the node nearest to `(x, z)`.
pub fn trace(w: &TimeWavefield, x: f64, z: f64) -> Result<Vec<f64>> {
    let (iz, ix) = w.grid.snap(x, z)?;
    Ok((0..w.time.nt).map(|n| w.at(n, iz, ix)).collect())
}

/// All bin frequencies `0..=n_t/2`.
pub fn all_bins(tg: &TimeGrid) -> Vec<f64> {
    (0..=tg.nt / 2).map(|k| bin_frequency(k, tg)).collect()
}

pub fn check_freq_list(freqs: &[f64], tg: &TimeGrid) -> Result<()> {
    check_distinct(freqs)?;
    for &f in freqs {
        bin_index(f, tg)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field_from(grid: Grid, tg: TimeGrid, f: impl Fn(f64, usize) -> f64) -> TimeWavefield {
        let mut w = TimeWavefield::zeros(grid, tg, SourceSpec::ricker(0.0, 0.0, 15.0));
        let m = grid.len();
        for n in 0..tg.nt {
            for i in 0..m {
                w.p[n * m + i] = f(n as f64 * tg.dt, i);
            }
        }
        w
    }

    fn g5() -> Grid {
        Grid::new(5, 5, 10.0, 10.0).unwrap()
    }

    #[test]
    fn single_tone() {
        let tg = TimeGrid::standard();
        let w = field_from(g5(), tg, |t, _| (std::f64::consts::TAU * 10.0 * t).cos());
        let u = time_to_freq(&w, &[10.0, 25.0]).unwrap();
        assert!(u[0].u.iter().all(|c| (c.norm() - 0.5).abs() < 1e-9));
        assert!(u[1].u.iter().all(|c| c.norm() < 1e-9));
    }

    #[test]
    fn zero_field_zero_transform() {
        let w = TimeWavefield::zeros(g5(), TimeGrid::standard(), SourceSpec::ricker(0.0, 0.0, 15.0));
        assert!(time_to_freq(&w, &[3.0]).unwrap()[0].u.iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn bin_validation() {
        let tg = TimeGrid::standard();
        assert_eq!(bin_index(15.0, &tg).unwrap(), 15);
        assert_eq!(bin_index(500.0, &tg).unwrap(), 500);
        assert!(matches!(bin_index(10.5, &tg), Err(Error::NonIntegerBin(_))));
        assert!(matches!(bin_index(501.0, &tg), Err(Error::AboveNyquist { .. })));
    }

    #[test]
    fn band_fraction_edges() {
        let p = SpectrumProfile { freqs: vec![0.0, 1.0, 2.0], magnitude: vec![1.0, 2.0, 1.0] };
        assert_eq!(band_energy_fraction(&p, 0.0, 2.0).unwrap(), 1.0);
        assert_eq!(band_energy_fraction(&p, 5.0, 9.0).unwrap(), 0.0);
        assert_eq!(band_energy_fraction(&p, 1.0, 1.0).unwrap(), 0.5);
        let z = SpectrumProfile { freqs: vec![0.0], magnitude: vec![0.0] };
        assert!(matches!(band_energy_fraction(&z, 0.0, 1.0), Err(Error::ZeroSpectrum)));
    }

    #[test]
    fn tone_spectrum_single_bin() {
        let tg = TimeGrid::standard();
        let w = field_from(g5(), tg, |t, _| (std::f64::consts::TAU * 40.0 * t).sin());
        let p = energy_spectrum(&[w]).unwrap();
        let (kmax, _) = p.magnitude.iter().enumerate().max_by(|a, b| a.1.partial_cmp(b.1).unwrap()).unwrap();
        assert_eq!(kmax, 40);
        assert!(band_energy_fraction(&p, 40.0, 40.0).unwrap() > 0.999);
    }

    #[test]
    fn reconstruct_edge_cases() {
        let tg = TimeGrid::new(1e-3, 64).unwrap();
        let w = field_from(g5(), tg, |t, i| (t * 37.0 + i as f64).sin());
        let z = reconstruct_time(&[], w.grid, tg, w.source).unwrap();
        assert!(z.p.iter().all(|&x| x == 0.0));
        let u = time_to_freq(&w, &[1000.0 / 64.0 * 2.0]).unwrap();
        let dup = [u[0].clone(), u[0].clone()];
        assert!(matches!(reconstruct_time(&dup, w.grid, tg, w.source), Err(Error::DuplicateFrequency(_))));
    }

    #[test]
    fn trace_length_and_bounds() {
        let g = Grid::openfwi();
        let w = TimeWavefield::zeros(g, TimeGrid::new(1e-3, 20).unwrap(), SourceSpec::ricker(0.0, 0.0, 15.0));
        assert_eq!(trace(&w, 190.0, 550.0).unwrap().len(), 20);
        assert!(trace(&w, 190.0, 5500.0).is_err());
    }
}
