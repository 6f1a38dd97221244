//! Evaluation experiments: generalization, robustness, efficiency and the
//! surrogate/solver crossover.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::{fit_norm, label_model, BuildSpec, Dataset, Samples};
use crate::error::{Error, Result};
use crate::fdtd::SourceSpec;
use crate::helmholtz::{assemble, ricker_amplitude, Factorization, HelmholtzBoundary, Stencil};
use crate::io::hardware_note;
use crate::nn::{infer, ModelConfig, ModelHandle};
use crate::train::{evaluate_mse, relative_mse, train, History, TrainConfig};
use crate::velocity::{gaussian_smooth, Grid, VelocityModel};

/// Smallest instance count `N` with `train + N t_nn < N t_fd`.
pub fn crossover(train_seconds: f64, surrogate: f64, solver: f64) -> Result<u64> {
    if !(solver > surrogate) || train_seconds < 0.0 || surrogate < 0.0 {
        return Err(Error::NoCrossover { surrogate, solver });
    }
    let gap = solver - surrogate;
    let mut n = (train_seconds / gap).floor() as u64 + 1;
    let wins = |n: u64| train_seconds + n as f64 * surrogate < n as f64 * solver;
    while !wins(n) {
        n += 1;
    }
    while n > 1 && wins(n - 1) {
        n -= 1;
    }
    Ok(n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub label: String,
    /// Mean wall seconds per instance.
    pub per_instance: f64,
    /// Per-instance seconds of each repetition.
    pub repetitions: Vec<f64>,
    pub instances: usize,
    pub batch_size: usize,
    pub train_seconds: Option<f64>,
    pub hardware: String,
}

impl TimingRecord {
    /// `max / min` over repetitions.
    pub fn spread(&self) -> f64 {
        let lo = self.repetitions.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.repetitions.iter().copied().fold(0.0, f64::max);
        hi / lo
    }
}

fn timing(label: String, reps: Vec<f64>, instances: usize, batch_size: usize) -> TimingRecord {
    let per_instance = reps.iter().sum::<f64>() / reps.len() as f64;
    TimingRecord { label, per_instance, repetitions: reps, instances, batch_size, train_seconds: None, hardware: hardware_note() }
}

/// Inference over `instances` inputs cycled from `probe`, in batches of
/// `batch_size`, after one warm-up batch.
pub fn bench_surrogate(model: &ModelHandle, probe: &Samples, instances: usize, batch_size: usize, reps: usize) -> Result<TimingRecord> {
    if probe.is_empty() || instances == 0 || batch_size == 0 || reps == 0 {
        return Err(Error::InvalidArgument("bench needs inputs, instances, a batch size and repetitions".into()));
    }
    let xl = probe.x_len();
    let batch_input = |start: usize, b: usize| {
        let idx: Vec<usize> = (start..start + b).map(|i| i % probe.len()).collect();
        let (x, _, f) = probe.gather(&idx);
        (x, f)
    };
    let (wx, wf) = batch_input(0, batch_size.min(instances));
    infer(&model.config, &model.params, &model.buffers, &wx, [wf.len(), probe.channels, probe.h, probe.w], &wf)?;
    let mut out = Vec::with_capacity(reps);
    for _ in 0..reps {
        let mut elapsed = 0.0;
        let mut done = 0;
        while done < instances {
            let b = batch_size.min(instances - done);
            let (x, f) = batch_input(done, b);
            debug_assert_eq!(x.len(), b * xl);
            let t = Instant::now();
            infer(&model.config, &model.params, &model.buffers, &x, [b, probe.channels, probe.h, probe.w], &f)?;
            elapsed += t.elapsed().as_secs_f64();
            done += b;
        }
        out.push(elapsed / instances as f64);
    }
    Ok(timing(format!("{} x{instances}", model.arch()), out, instances, batch_size))
}

/// Direct solver: assemble, factor and solve one source per instance.
pub fn bench_solver(v: &VelocityModel, freq: f64, src: &SourceSpec, boundary: &HelmholtzBoundary, stencil: Stencil, instances: usize, reps: usize) -> Result<TimingRecord> {
    if instances == 0 || reps == 0 {
        return Err(Error::InvalidArgument("bench needs instances and repetitions".into()));
    }
    let node = src.node(&v.grid)?;
    let amp = ricker_amplitude(src, &crate::fdtd::TimeGrid::standard(), freq);
    let once = || -> Result<()> {
        let f = Factorization::new(assemble(v, freq, boundary, stencil)?)?;
        f.solve_point(node, amp)?;
        Ok(())
    };
    once()?;
    let mut out = Vec::with_capacity(reps);
    for _ in 0..reps {
        let t = Instant::now();
        for _ in 0..instances {
            once()?;
        }
        out.push(t.elapsed().as_secs_f64() / instances as f64);
    }
    Ok(timing(format!("direct {}x{}", v.grid.nz, v.grid.nx), out, instances, 1))
}

/// Least-squares slope of `log t` against `log n`.
pub fn loglog_slope(n: &[f64], t: &[f64]) -> f64 {
    let k = n.len() as f64;
    let lx: Vec<f64> = n.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = t.iter().map(|x| x.ln()).collect();
    let (mx, my) = (lx.iter().sum::<f64>() / k, ly.iter().sum::<f64>() / k);
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossMatrix {
    /// Row names are training sets, column names testing sets.
    pub names: Vec<String>,
    pub mse: Vec<Vec<f64>>,
}

impl CrossMatrix {
    /// Columns whose diagonal entry is not the column minimum.
    pub fn diagonal_violations(&self) -> Vec<usize> {
        (0..self.names.len()).filter(|&j| (0..self.names.len()).any(|i| self.mse[i][j] < self.mse[j][j])).collect()
    }
}

/// Evaluates every model on every test set, normalizing inputs with each
/// model's own statistics.
pub fn cross_dataset_matrix(models: &[(String, ModelHandle)], tests: &[Dataset]) -> Result<CrossMatrix> {
    if models.len() != tests.len() {
        return Err(Error::InvalidArgument(format!("{} models for {} test sets", models.len(), tests.len())));
    }
    let mut mse = vec![vec![0.0; tests.len()]; models.len()];
    for (i, (_, m)) in models.iter().enumerate() {
        for (j, t) in tests.iter().enumerate() {
            if t.spec.freqs != tests[i].spec.freqs {
                return Err(Error::InvalidArgument("test sets use different frequency lists".into()));
            }
            let s = t.samples(m.layout()?, &m.norm, None)?;
            mse[i][j] = evaluate_mse(m, &s)?;
        }
    }
    Ok(CrossMatrix { names: models.iter().map(|(n, _)| n.clone()).collect(), mse })
}

/// A one-model dataset built from an explicit velocity model.
pub fn single_model_dataset(v: &VelocityModel, spec: &BuildSpec) -> Result<Dataset> {
    let mut spec = spec.clone();
    spec.count = 1;
    spec.grid = v.grid;
    spec.validate()?;
    let labels = label_model(v, &spec)?;
    Ok(Dataset { spec, velocity: v.values.iter().map(|&x| x as f32).collect(), labels, noise: None, model_ids: vec![0] })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothPoint {
    pub sigma: f64,
    pub mse: f64,
    /// Per-pixel squared misfit averaged over sources and frequencies.
    pub misfit: Vec<f64>,
}

/// Squared misfit map of `model` on `d`, averaged over samples.
pub fn misfit_map(model: &ModelHandle, d: &Dataset) -> Result<(f64, Vec<f64>)> {
    let s = d.samples(model.layout()?, &model.norm, None)?;
    let pred = model.predict(&s.x, [s.len(), s.channels, s.h, s.w], &s.freqs)?;
    let m = s.h * s.w;
    let mut map = vec![0.0; m];
    let mut total = 0.0;
    for (p, y) in pred.chunks(2 * m).zip(s.y.chunks(2 * m)) {
        for i in 0..m {
            let dr = p[i] as f64 - y[i] as f64;
            let di = p[m + i] as f64 - y[m + i] as f64;
            map[i] += dr * dr + di * di;
            total += dr * dr + di * di;
        }
    }
    map.iter_mut().for_each(|x| *x /= s.len() as f64);
    Ok((total / (s.len() * 2 * m) as f64, map))
}

/// Relabels Gaussian-smoothed copies of `v` and evaluates `model` on each.
pub fn smooth_generalization(model: &ModelHandle, v: &VelocityModel, sigmas: &[f64], spec: &BuildSpec) -> Result<Vec<SmoothPoint>> {
    sigmas
        .iter()
        .map(|&sigma| {
            let sm = if sigma == 0.0 { v.clone() } else { gaussian_smooth(v, sigma)? };
            let d = single_model_dataset(&sm, spec)?;
            let (mse, misfit) = misfit_map(model, &d)?;
            Ok(SmoothPoint { sigma, mse, misfit })
        })
        .collect()
}

/// Misfit energy in the top `depth_rows` rows farther than half the width
/// from the source column.
pub fn far_offset_shallow_energy(misfit: &[f64], grid: &Grid, source_ix: usize, depth_rows: usize) -> f64 {
    let half = grid.nx / 2;
    let mut e = 0.0;
    for iz in 0..depth_rows.min(grid.nz) {
        for ix in 0..grid.nx {
            if ix.abs_diff(source_ix) > half {
                e += misfit[grid.idx(iz, ix)];
            }
        }
    }
    e
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisePoint {
    pub sigma: f64,
    /// Against the noisy training labels.
    pub train_mse: f64,
    /// Against clean test labels.
    pub test_mse: f64,
    pub history: History,
}

/// Retrains from the same initialization for every label-noise level.
pub fn noise_robustness(
    config: &ModelConfig,
    train_set: &Dataset,
    test_set: &Dataset,
    sigmas: &[f64],
    cfg: &TrainConfig,
    noise_seed: u64,
    freqs: Option<&[f64]>,
) -> Result<Vec<NoisePoint>> {
    if !sigmas.contains(&0.0) {
        return Err(Error::InvalidArgument("noise sweep must include sigma = 0".into()));
    }
    let layout = config.layout()?;
    sigmas
        .iter()
        .map(|&sigma| {
            let noisy = train_set.with_label_noise(sigma, noise_seed)?;
            let norm = fit_norm(&noisy, layout);
            let tr = noisy.samples(layout, &norm, freqs)?;
            let te = test_set.samples(layout, &norm, freqs)?;
            let mut m = ModelHandle::new(config.clone(), norm, cfg.seed)?;
            let history = train(&mut m, &tr, Some(&te), cfg)?;
            Ok(NoisePoint { sigma, train_mse: evaluate_mse(&m, &tr)?, test_mse: evaluate_mse(&m, &te)?, history })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreqPoint {
    pub freq: f64,
    pub mse: f64,
    pub mean_abs: f64,
    pub relative_mse: f64,
}

/// Relative MSE of a frequency-conditioned model at each test frequency.
pub fn freq_generalization(model: &ModelHandle, test_set: &Dataset) -> Result<Vec<FreqPoint>> {
    let layout = model.layout()?;
    let s = test_set.samples(layout, &model.norm, None)?;
    test_set
        .spec
        .freqs
        .iter()
        .map(|&f| {
            let sub = s.at_frequency(f);
            let mse = evaluate_mse(model, &sub)?;
            let mean_abs = sub.mean_abs();
            Ok(FreqPoint { freq: f, mse, mean_abs, relative_mse: relative_mse(mse, mean_abs) })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crossover_zero_training() {
        assert_eq!(crossover(0.0, 1.0, 2.0).unwrap(), 1);
        assert!(crossover(10.0, 2.0, 1.0).is_err());
        assert!(crossover(10.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn crossover_exact_division_is_strict() {
        // 10 / (2 - 1) = 10 exactly: N = 10 ties, so 11 is the first win.
        assert_eq!(crossover(10.0, 1.0, 2.0).unwrap(), 11);
    }

    #[test]
    fn slope_of_power_law() {
        let n = [1.0, 2.0, 4.0, 8.0];
        let t: Vec<f64> = n.iter().map(|x: &f64| 3.0 * x.powf(1.5)).collect();
        assert!((loglog_slope(&n, &t) - 1.5).abs() < 1e-12);
    }
}
