//! Dataset generation (velocity synthesis, simulation, transform) and the
//! in-memory sample tensors fed to training.

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fdtd::{surface_sources, AbsorbingBoundary, SourceSpec, TimeGrid};
use crate::freq::{check_freq_list, label_fields, label_fields_any};
use crate::nn::input::{push_normalized, InputLayout, NormStats};
use crate::rng;
use crate::velocity::{synthesize, FamilyKind, FamilySpec, Grid, VelocityModel};

/// Everything needed to regenerate a dataset bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildSpec {
    pub family: FamilySpec,
    pub count: usize,
    pub n_sources: usize,
    pub source_z: f64,
    pub freqs: Vec<f64>,
    pub seed: u64,
    pub grid: Grid,
    pub time: TimeGrid,
    pub boundary: AbsorbingBoundary,
    pub peak_freq: f64,
    /// Allows frequencies between DFT bins (evaluated by direct summation).
    #[serde(default)]
    pub off_bin: bool,
}

impl BuildSpec {
    pub fn new(family: FamilyKind, count: usize, n_sources: usize, freqs: Vec<f64>, seed: u64) -> Self {
        Self {
            family: FamilySpec::new(family),
            count,
            n_sources,
            source_z: 10.0,
            freqs,
            seed,
            grid: Grid::openfwi(),
            time: TimeGrid::standard(),
            boundary: AbsorbingBoundary::standard(),
            peak_freq: 15.0,
            off_bin: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.count == 0 || self.n_sources == 0 || self.freqs.is_empty() {
            return Err(Error::InvalidArgument("dataset needs models, sources and frequencies".into()));
        }
        self.grid.validate()?;
        self.family.validate(&self.grid)?;
        self.boundary.validate()?;
        if self.off_bin {
            let nyq = crate::freq::nyquist(&self.time);
            match self.freqs.iter().find(|f| !(**f >= 0.0 && **f <= nyq)) {
                Some(&f) => Err(Error::AboveNyquist { freq: f, nyquist: nyq }),
                None => Ok(()),
            }
        } else {
            check_freq_list(&self.freqs, &self.time)
        }
    }

    pub fn sources(&self) -> Result<Vec<SourceSpec>> {
        surface_sources(&self.grid, self.n_sources, self.source_z, self.peak_freq)
    }

    pub fn model_seed(&self, i: usize) -> u64 {
        rng::derive_seed(self.seed, rng::FAMILY, i as u64)
    }
}

/// Frozen label perturbation applied after the build.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelNoise {
    pub sigma: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub spec: BuildSpec,
    /// `[count, nz, nx]`.
    pub velocity: Vec<f32>,
    /// `[count, n_sources, n_freqs, 2, nz, nx]`, real plane then imaginary plane.
    pub labels: Vec<f32>,
    pub noise: Option<LabelNoise>,
    /// Model indices of the original build, for splits.
    pub model_ids: Vec<usize>,
}

/// Simulates every `(source, frequency)` label of one velocity model.
pub fn label_model(v: &VelocityModel, spec: &BuildSpec) -> Result<Vec<f32>> {
    let m = spec.grid.len();
    let mut out = Vec::with_capacity(spec.n_sources * spec.freqs.len() * 2 * m);
    for src in spec.sources()? {
        let fields = if spec.off_bin {
            label_fields_any(v, &src, &spec.freqs, &spec.time, &spec.boundary)?
        } else {
            label_fields(v, &src, &spec.freqs, &spec.time, &spec.boundary)?
        };
        for u in fields {
            out.extend(u.u.iter().map(|c| c.re as f32));
            out.extend(u.u.iter().map(|c| c.im as f32));
        }
    }
    Ok(out)
}

pub fn build_dataset(spec: &BuildSpec) -> Result<Dataset> {
    build_dataset_with(spec, |_| {})
}

/// Like [`build_dataset`] with a callback after each finished model.
pub fn build_dataset_with(spec: &BuildSpec, progress: impl Fn(usize) + Sync) -> Result<Dataset> {
    spec.validate()?;
    let per: Vec<(Vec<f32>, Vec<f32>)> = (0..spec.count)
        .into_par_iter()
        .map(|i| {
            let v = synthesize(&spec.family, &spec.grid, spec.model_seed(i))?;
            let labels = label_model(&v, spec)?;
            progress(i);
            Ok((v.values.iter().map(|&x| x as f32).collect(), labels))
        })
        .collect::<Result<_>>()?;
    let mut velocity = Vec::with_capacity(spec.count * spec.grid.len());
    let mut labels = Vec::new();
    for (v, l) in per {
        velocity.extend(v);
        labels.extend(l);
    }
    Ok(Dataset { spec: spec.clone(), velocity, labels, noise: None, model_ids: (0..spec.count).collect() })
}

impl Dataset {
    pub fn count(&self) -> usize {
        self.model_ids.len()
    }

    fn field_len(&self) -> usize {
        self.spec.grid.len()
    }

    pub fn n_freqs(&self) -> usize {
        self.spec.freqs.len()
    }

    pub fn velocity_model(&self, i: usize) -> &[f32] {
        let m = self.field_len();
        &self.velocity[i * m..(i + 1) * m]
    }

    /// Label planes `[2, nz, nx]` of model `i`, source `s`, frequency index `f`.
    pub fn label(&self, i: usize, s: usize, f: usize) -> &[f32] {
        let m = self.field_len();
        let k = ((i * self.spec.n_sources + s) * self.n_freqs() + f) * 2 * m;
        &self.labels[k..k + 2 * m]
    }

    pub fn check(&self) -> Result<()> {
        let m = self.field_len();
        let n = self.count();
        if self.velocity.len() != n * m || self.labels.len() != n * self.spec.n_sources * self.n_freqs() * 2 * m {
            return Err(Error::Shape("dataset arrays do not match the build spec".into()));
        }
        Ok(())
    }

    /// Models `range` as a new dataset.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<Dataset> {
        if range.end > self.count() || range.start > range.end {
            return Err(Error::InvalidArgument(format!("model range {range:?} of {}", self.count())));
        }
        let m = self.field_len();
        let per = self.spec.n_sources * self.n_freqs() * 2 * m;
        Ok(Dataset {
            spec: self.spec.clone(),
            velocity: self.velocity[range.start * m..range.end * m].to_vec(),
            labels: self.labels[range.start * per..range.end * per].to_vec(),
            noise: self.noise,
            model_ids: self.model_ids[range].to_vec(),
        })
    }

    /// Mean complex magnitude over every label entry.
    pub fn mean_abs(&self) -> f64 {
        let m = self.field_len();
        let (mut sum, mut n) = (0.0, 0usize);
        for pair in self.labels.chunks(2 * m) {
            let (re, im) = pair.split_at(m);
            sum += re.iter().zip(im).map(|(a, b)| (*a as f64).hypot(*b as f64)).sum::<f64>();
            n += m;
        }
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }

    /// Adds i.i.d. `N(0, sigma)` to every label entry, drawn from the noise
    /// sub-stream of `seed`.
    pub fn with_label_noise(&self, sigma: f64, seed: u64) -> Result<Dataset> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!("noise level {sigma}")));
        }
        let mut out = self.clone();
        if sigma > 0.0 {
            let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
            let mut r = rng::substream(seed, rng::NOISE, 0);
            out.labels.iter_mut().for_each(|x| *x += normal.sample(&mut r) as f32);
        }
        out.noise = Some(LabelNoise { sigma, seed });
        Ok(out)
    }

    /// Input/label tensors for every `(model, source, frequency)` triple, in
    /// that nesting order. `freqs` restricts to a subset.
    pub fn samples(&self, layout: InputLayout, norm: &NormStats, freqs: Option<&[f64]>) -> Result<Samples> {
        self.check()?;
        let g = self.spec.grid;
        let sources = self.spec.sources()?;
        let nodes: Vec<(usize, usize)> = sources.iter().map(|s| s.node(&g)).collect::<Result<_>>()?;
        let keep: Vec<usize> = match freqs {
            None => (0..self.n_freqs()).collect(),
            Some(list) => list
                .iter()
                .map(|f| self.spec.freqs.iter().position(|g| g == f).ok_or(Error::UnknownFrequency(*f)))
                .collect::<Result<_>>()?,
        };
        let mut s = Samples { x: Vec::new(), y: Vec::new(), freqs: Vec::new(), channels: layout.channels(), h: g.nz, w: g.nx };
        for i in 0..self.count() {
            for (si, &node) in nodes.iter().enumerate() {
                for &fi in &keep {
                    let f = self.spec.freqs[fi];
                    push_normalized(&mut s.x, &g, self.velocity_model(i), layout, Some(node), f, norm)?;
                    s.y.extend_from_slice(self.label(i, si, fi));
                    s.freqs.push(f);
                }
            }
        }
        Ok(s)
    }
}

/// Normalized inputs `[N, C, H, W]` with physical-unit labels `[N, 2, H, W]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    pub x: Vec<f32>,
    pub y: Vec<f32>,
    pub freqs: Vec<f64>,
    pub channels: usize,
    pub h: usize,
    pub w: usize,
}

impl Samples {
    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    pub fn x_len(&self) -> usize {
        self.channels * self.h * self.w
    }

    pub fn y_len(&self) -> usize {
        2 * self.h * self.w
    }

    /// Gathers samples `idx` into contiguous batches.
    pub fn gather(&self, idx: &[usize]) -> (Vec<f32>, Vec<f32>, Vec<f64>) {
        let (xl, yl) = (self.x_len(), self.y_len());
        let mut x = Vec::with_capacity(idx.len() * xl);
        let mut y = Vec::with_capacity(idx.len() * yl);
        for &i in idx {
            x.extend_from_slice(&self.x[i * xl..(i + 1) * xl]);
            y.extend_from_slice(&self.y[i * yl..(i + 1) * yl]);
        }
        (x, y, idx.iter().map(|&i| self.freqs[i]).collect())
    }

    /// Samples at frequency `f`.
    pub fn at_frequency(&self, f: f64) -> Samples {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| self.freqs[i] == f).collect();
        let (x, y, freqs) = self.gather(&idx);
        Samples { x, y, freqs, ..*self }
    }

    /// Drops channel `c` (e.g. the frequency plane for per-frequency models).
    pub fn drop_channel(&self, c: usize) -> Samples {
        let plane = self.h * self.w;
        let mut x = Vec::with_capacity(self.len() * (self.channels - 1) * plane);
        for s in self.x.chunks(self.x_len()) {
            for (k, p) in s.chunks(plane).enumerate() {
                if k != c {
                    x.extend_from_slice(p);
                }
            }
        }
        Samples { x, y: self.y.clone(), freqs: self.freqs.clone(), channels: self.channels - 1, h: self.h, w: self.w }
    }

    pub fn mean_abs(&self) -> f64 {
        let m = self.h * self.w;
        let total: f64 = self.y.chunks(2 * m).map(|p| p[..m].iter().zip(&p[m..]).map(|(a, b)| (*a as f64).hypot(*b as f64)).sum::<f64>()).sum();
        if self.is_empty() {
            0.0
        } else {
            total / (self.len() * m) as f64
        }
    }
}

/// Normalization fitted on `train`, with labels scaled by their mean magnitude.
pub fn fit_norm(train: &Dataset, layout: InputLayout) -> NormStats {
    let vs: Vec<&[f32]> = (0..train.count()).map(|i| train.velocity_model(i)).collect();
    NormStats::fit(layout, &train.spec.grid, &vs, &train.spec.freqs, train.mean_abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> BuildSpec {
        let mut s = BuildSpec::new(FamilyKind::FlatA, 2, 2, vec![10.0, 15.0], 4);
        s.grid = Grid::new(20, 20, 10.0, 10.0).unwrap();
        s.time = TimeGrid::new(0.001, 400).unwrap();
        s.boundary = AbsorbingBoundary::new(20);
        s.family.layers = (2, 3);
        s
    }

    #[test]
    fn build_layout_and_determinism() {
        let spec = tiny();
        let a = build_dataset(&spec).unwrap();
        a.check().unwrap();
        assert_eq!(a.labels.len(), 2 * 2 * 2 * 2 * 400);
        assert_eq!(a, build_dataset(&spec).unwrap());
        let s = a.samples(InputLayout::Full, &NormStats::identity(5), None).unwrap();
        assert_eq!(s.len(), 8);
        assert_eq!(s.freqs, vec![10.0, 15.0, 10.0, 15.0, 10.0, 15.0, 10.0, 15.0]);
        let only = a.samples(InputLayout::Full, &NormStats::identity(5), Some(&[15.0])).unwrap();
        assert_eq!(only.len(), 4);
        assert_eq!(&only.y[..800], a.label(0, 0, 1));
        assert!(a.samples(InputLayout::Full, &NormStats::identity(5), Some(&[12.0])).is_err());
    }

    #[test]
    fn noise_is_frozen_by_seed() {
        let a = build_dataset(&tiny()).unwrap();
        let n1 = a.with_label_noise(0.01, 3).unwrap();
        let n2 = a.with_label_noise(0.01, 3).unwrap();
        assert_eq!(n1.labels, n2.labels);
        assert_ne!(n1.labels, a.labels);
        assert_eq!(a.with_label_noise(0.0, 3).unwrap().labels, a.labels);
    }
}
