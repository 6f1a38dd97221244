//! Direct sparse solver for `lap u + k^2 u = f` on a damped, padded grid.
//!
//! Sign convention matches the time transform `exp(-i w t)`: outgoing waves
//! behave like `exp(-i k r)`, so the pad attenuates with `k -> k (1 - i beta)`.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::Lu;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fdtd::{SourceSpec, TimeGrid};
use crate::freq::FreqWavefield;
use crate::velocity::{Grid, VelocityModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stencil {
    #[serde(rename = "5pt")]
    FivePoint,
    /// Rotated/weighted 9-point scheme with optimal Jo-Shin-Suh weights.
    #[serde(rename = "9pt")]
    NinePoint,
}

impl std::str::FromStr for Stencil {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "5pt" | "5" => Ok(Stencil::FivePoint),
            "9pt" | "9" => Ok(Stencil::NinePoint),
            _ => Err(Error::InvalidArgument(format!("unknown stencil `{s}` (expected 5pt or 9pt)"))),
        }
    }
}

impl std::fmt::Display for Stencil {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stencil::FivePoint => "5pt",
            Stencil::NinePoint => "9pt",
        })
    }
}

/// Weight of the axis-aligned Laplacian against the rotated one.
const JO_A: f64 = 0.5461;
/// Mass-term weights for centre and edge neighbours; corners take the rest.
const JO_C: f64 = 0.6248;
const JO_D: f64 = 0.09381;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HelmholtzBoundary {
    pub n_layers: usize,
    /// Attenuation reached at the outer edge; ramps quadratically from 0.
    pub beta_max: f64,
}

impl HelmholtzBoundary {
    pub fn new(n_layers: usize) -> Self {
        Self { n_layers, beta_max: 0.6 }
    }

    pub fn standard() -> Self {
        Self::new(120)
    }

    pub fn beta(&self, d: usize) -> f64 {
        if self.n_layers == 0 {
            return 0.0;
        }
        self.beta_max * (d as f64 / self.n_layers as f64).powi(2)
    }
}

/// `2 pi f / v`.
pub fn wavenumber(freq: f64, v: f64) -> f64 {
    std::f64::consts::TAU * freq / v
}

/// Assembled operator over the padded grid, stored row-wise.
#[derive(Debug, Clone)]
pub struct HelmholtzSystem {
    pub grid: Grid,
    pub padded: Grid,
    pub pad: usize,
    pub freq: f64,
    pub stencil: Stencil,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<Complex64>,
}

impl HelmholtzSystem {
    pub fn dim(&self) -> usize {
        self.padded.len()
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.cols[a..b].iter().copied().zip(self.vals[a..b].iter().copied())
    }

    pub fn diagonal(&self, i: usize) -> Complex64 {
        self.row(i).find(|&(c, _)| c == i).map(|(_, v)| v).unwrap_or_default()
    }

    pub fn apply(&self, u: &[Complex64]) -> Vec<Complex64> {
        (0..self.dim()).map(|i| self.row(i).map(|(c, a)| a * u[c]).sum()).collect()
    }

    /// Padded-grid index of a physical node.
    pub fn padded_index(&self, iz: usize, ix: usize) -> usize {
        self.padded.idx(iz + self.pad, ix + self.pad)
    }
}

pub fn assemble(v: &VelocityModel, freq: f64, boundary: &HelmholtzBoundary, stencil: Stencil) -> Result<HelmholtzSystem> {
    if !(freq > 0.0 && freq.is_finite()) {
        return Err(Error::InvalidArgument(format!("frequency {freq} must be positive")));
    }
    v.validate()?;
    let g = v.grid;
    if stencil == Stencil::NinePoint && (g.dx - g.dz).abs() > 1e-12 * g.dx {
        return Err(Error::InvalidArgument("the 9-point stencil needs dx == dz".into()));
    }
    let pad = boundary.n_layers;
    let p = Grid { nz: g.nz + 2 * pad, nx: g.nx + 2 * pad, dz: g.dz, dx: g.dx };
    let k2: Vec<Complex64> = (0..p.len())
        .map(|i| {
            let (iz, ix) = (i / p.nx, i % p.nx);
            let pz = iz.clamp(pad, pad + g.nz - 1) - pad;
            let px = ix.clamp(pad, pad + g.nx - 1) - pad;
            let dz = pad.saturating_sub(iz).max((iz + 1).saturating_sub(pad + g.nz));
            let dx = pad.saturating_sub(ix).max((ix + 1).saturating_sub(pad + g.nx));
            let k = Complex64::new(1.0, -boundary.beta(dz.max(dx))) * wavenumber(freq, v.at(pz, px));
            k * k
        })
        .collect();
    let (ix2, iz2) = (1.0 / (g.dx * g.dx), 1.0 / (g.dz * g.dz));
    let mut row_ptr = Vec::with_capacity(p.len() + 1);
    let mut cols = Vec::with_capacity(9 * p.len());
    let mut vals = Vec::with_capacity(9 * p.len());
    row_ptr.push(0);
    for iz in 0..p.nz as isize {
        for ix in 0..p.nx as isize {
            let i = p.idx(iz as usize, ix as usize);
            let mut entries: Vec<(isize, isize, Complex64)> = Vec::with_capacity(9);
            match stencil {
                Stencil::FivePoint => {
                    entries.push((0, 0, Complex64::from(-2.0 * (ix2 + iz2)) + k2[i]));
                    for (dz, dx, w) in [(-1, 0, iz2), (1, 0, iz2), (0, -1, ix2), (0, 1, ix2)] {
                        entries.push((dz, dx, Complex64::from(w)));
                    }
                }
                Stencil::NinePoint => {
                    let h2 = ix2;
                    let corner_mass = (1.0 - JO_C - 4.0 * JO_D) / 4.0;
                    let lap_c = -4.0 * JO_A * h2 - 4.0 * (1.0 - JO_A) * h2 / 2.0;
                    entries.push((0, 0, Complex64::from(lap_c) + k2[i] * JO_C));
                    for (dz, dx) in [(-1isize, 0isize), (1, 0), (0, -1), (0, 1)] {
                        entries.push((dz, dx, Complex64::from(JO_A * h2) + k2_at(&k2, &p, iz + dz, ix + dx, i) * JO_D));
                    }
                    for (dz, dx) in [(-1isize, -1isize), (-1, 1), (1, -1), (1, 1)] {
                        entries.push((
                            dz,
                            dx,
                            Complex64::from((1.0 - JO_A) * h2 / 2.0) + k2_at(&k2, &p, iz + dz, ix + dx, i) * corner_mass,
                        ));
                    }
                }
            }
            // Neighbours outside the padded grid are zero (Dirichlet).
            let mut row: Vec<(usize, Complex64)> = entries
                .into_iter()
                .filter(|&(dz, dx, _)| {
                    let (z, x) = (iz + dz, ix + dx);
                    z >= 0 && x >= 0 && z < p.nz as isize && x < p.nx as isize
                })
                .map(|(dz, dx, a)| (p.idx((iz + dz) as usize, (ix + dx) as usize), a))
                .collect();
            row.sort_by_key(|e| e.0);
            for (c, a) in row {
                cols.push(c);
                vals.push(a);
            }
            row_ptr.push(cols.len());
        }
    }
    Ok(HelmholtzSystem { grid: g, padded: p, pad, freq, stencil, row_ptr, cols, vals })
}

/// Mass term uses `k^2` at the neighbour; out-of-grid neighbours fall back to the centre.
fn k2_at(k2: &[Complex64], p: &Grid, iz: isize, ix: isize, centre: usize) -> Complex64 {
    if iz < 0 || ix < 0 || iz >= p.nz as isize || ix >= p.nx as isize {
        k2[centre]
    } else {
        k2[p.idx(iz as usize, ix as usize)]
    }
}

/// A factorized system; immutable and shareable across right-hand sides.
pub struct Factorization {
    pub system: HelmholtzSystem,
    lu: Lu<usize, Complex64>,
}

/// Relative residual the solver guarantees.
pub const RESIDUAL_TOL: f64 = 1e-8;

impl Factorization {
    pub fn new(system: HelmholtzSystem) -> Result<Self> {
        let n = system.dim();
        let mut trip = Vec::with_capacity(system.nnz());
        for i in 0..n {
            for (c, a) in system.row(i) {
                trip.push(Triplet::new(i, c, a));
            }
        }
        let mat = SparseColMat::<usize, Complex64>::try_new_from_triplets(n, n, &trip)
            .map_err(|e| Error::Factorization(format!("{e:?}")))?;
        let lu = mat.sp_lu().map_err(|e| Error::Factorization(format!("{e:?}")))?;
        Ok(Self { system, lu })
    }

    fn raw_solve(&self, rhs: &[Complex64]) -> Vec<Complex64> {
        let b = Mat::<Complex64>::from_fn(rhs.len(), 1, |i, _| rhs[i]);
        let x = self.lu.solve(&b);
        (0..rhs.len()).map(|i| x[(i, 0)]).collect()
    }

    /// Solves with a full right-hand side on the padded grid, refining until
    /// the relative residual meets [`RESIDUAL_TOL`].
    pub fn solve_rhs(&self, rhs: &[Complex64]) -> Result<(Vec<Complex64>, f64)> {
        let bn = norm(rhs);
        if bn == 0.0 {
            return Ok((vec![Complex64::default(); rhs.len()], 0.0));
        }
        let mut x = self.raw_solve(rhs);
        let mut rel = f64::INFINITY;
        for _ in 0..4 {
            let ax = self.system.apply(&x);
            let r: Vec<Complex64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
            rel = norm(&r) / bn;
            if !rel.is_finite() {
                break;
            }
            if rel <= RESIDUAL_TOL {
                return Ok((x, rel));
            }
            let dx = self.raw_solve(&r);
            x.iter_mut().zip(dx).for_each(|(a, d)| *a += d);
        }
        Err(Error::Factorization(format!("relative residual {rel:.3e} above {RESIDUAL_TOL:e}")))
    }

    /// Point source of complex amplitude `amp` at a physical node; pad stripped.
    pub fn solve_point(&self, node: (usize, usize), amp: Complex64) -> Result<(FreqWavefield, f64)> {
        let s = &self.system;
        let mut rhs = vec![Complex64::default(); s.dim()];
        rhs[s.padded_index(node.0, node.1)] = amp;
        let (x, rel) = self.solve_rhs(&rhs)?;
        let mut u = Vec::with_capacity(s.grid.len());
        for iz in 0..s.grid.nz {
            let start = s.padded_index(iz, 0);
            u.extend_from_slice(&x[start..start + s.grid.nx]);
        }
        let time = TimeGrid { dt: 0.0, nt: 0 };
        Ok((FreqWavefield { grid: s.grid, time, freq: s.freq, source_index: 0, model_id: 0, u }, rel))
    }
}

fn norm(x: &[Complex64]) -> f64 {
    x.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

/// Source amplitude matching the time-domain pipeline: the transform of
/// the injected wavelet over the levels where it is applied.
pub fn ricker_amplitude(src: &SourceSpec, tg: &TimeGrid, freq: f64) -> Complex64 {
    let w = std::f64::consts::TAU * freq;
    (1..tg.nt.saturating_sub(1))
        .map(|n| {
            let t = n as f64 * tg.dt;
            Complex64::from_polar(src.value(t) * tg.dt, -w * t)
        })
        .sum()
}

/// Effective wavenumber of the leapfrog scheme, `(2 / (v dt)) sin(w dt / 2)`.
pub fn leapfrog_wavenumber(freq: f64, v: f64, dt: f64) -> f64 {
    2.0 / (v * dt) * (std::f64::consts::PI * freq * dt).sin()
}

/// Solve for one point source.
pub fn solve(v: &VelocityModel, freq: f64, src: &SourceSpec, amp: Complex64, boundary: &HelmholtzBoundary, stencil: Stencil) -> Result<FreqWavefield> {
    let f = Factorization::new(assemble(v, freq, boundary, stencil)?)?;
    Ok(f.solve_point(src.node(&v.grid)?, amp)?.0)
}

/// Interior relative L2 misfit between two fields, skipping a `rim`-cell
/// border and a disk of radius `hole` cells around `centre`.
pub fn interior_misfit(a: &[Complex64], b: &[Complex64], grid: &Grid, rim: usize, centre: (usize, usize), hole: f64) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for iz in rim..grid.nz.saturating_sub(rim) {
        for ix in rim..grid.nx.saturating_sub(rim) {
            let (dz, dx) = (iz as f64 - centre.0 as f64, ix as f64 - centre.1 as f64);
            if (dz * dz + dx * dx).sqrt() <= hole {
                continue;
            }
            let i = grid.idx(iz, ix);
            num += (a[i] - b[i]).norm_sqr();
            den += b[i].norm_sqr();
        }
    }
    (num / den).sqrt()
}

/// Runs the time-domain pipeline and the direct solver for one source and
/// returns the interior misfit of the direct solution against the label.
pub fn cross_validate(
    v: &VelocityModel,
    src: &SourceSpec,
    freq: f64,
    tg: &TimeGrid,
    ab: &crate::fdtd::AbsorbingBoundary,
    boundary: &HelmholtzBoundary,
    stencil: Stencil,
) -> Result<CrossValidation> {
    crate::freq::bin_index(freq, tg)?;
    let node = src.node(&v.grid)?;
    let mut acc = crate::freq::DftAccumulator::new(&[freq], tg.dt, v.grid.len());
    crate::fdtd::simulate_streaming(v, src, tg, ab, |n, f| acc.push(n, f))?;
    let label = acc.finish().pop().unwrap_or_default();
    let fac = Factorization::new(assemble(v, freq, boundary, stencil)?)?;
    let (direct, residual) = fac.solve_point(node, ricker_amplitude(src, tg, freq))?;
    let misfit = interior_misfit(&direct.u, &label, &v.grid, 5, node, 2.0);
    Ok(CrossValidation { misfit, residual, label, direct: direct.u })
}

#[derive(Debug, Clone)]
pub struct CrossValidation {
    pub misfit: f64,
    pub residual: f64,
    pub label: Vec<Complex64>,
    pub direct: Vec<Complex64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn homogeneous(n: usize, v: f64) -> VelocityModel {
        VelocityModel::constant(Grid::new(n, n, 10.0, 10.0).unwrap(), v).unwrap()
    }

    #[test]
    fn wavenumber_value() {
        assert!((wavenumber(15.0, 1500.0) - 0.062_831_853).abs() < 1e-8);
    }

    #[test]
    fn constant_vector_gives_k2_in_interior() {
        for st in [Stencil::FivePoint, Stencil::NinePoint] {
            let v = homogeneous(9, 2000.0);
            let sys = assemble(&v, 15.0, &HelmholtzBoundary::new(0), st).unwrap();
            let out = sys.apply(&vec![Complex64::new(1.0, 0.0); sys.dim()]);
            let k2 = wavenumber(15.0, 2000.0).powi(2);
            for iz in 1..8 {
                for ix in 1..8 {
                    assert!((out[sys.padded_index(iz, ix)] - k2).norm() < 1e-12 * k2.max(1.0));
                }
            }
        }
    }

    #[test]
    fn rows_have_at_most_nine_nonzeros_and_nonzero_diagonal() {
        let v = homogeneous(12, 2500.0);
        let sys = assemble(&v, 7.0, &HelmholtzBoundary::new(4), Stencil::NinePoint).unwrap();
        for i in 0..sys.dim() {
            assert!(sys.row(i).count() <= 9);
            assert!(sys.diagonal(i).norm() > 0.0);
        }
    }

    #[test]
    fn invalid_inputs() {
        let v = homogeneous(9, 2000.0);
        assert!(assemble(&v, 0.0, &HelmholtzBoundary::new(2), Stencil::FivePoint).is_err());
        let g = Grid::new(9, 9, 10.0, 5.0).unwrap();
        let r = VelocityModel::constant(g, 2000.0).unwrap();
        assert!(assemble(&r, 5.0, &HelmholtzBoundary::new(2), Stencil::NinePoint).is_err());
        assert!("7pt".parse::<Stencil>().is_err());
    }

    #[test]
    fn zero_source_zero_field() {
        let v = homogeneous(15, 2000.0);
        let f = Factorization::new(assemble(&v, 10.0, &HelmholtzBoundary::new(5), Stencil::NinePoint).unwrap()).unwrap();
        let (u, _) = f.solve_point((7, 7), Complex64::default()).unwrap();
        assert!(u.u.iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn linear_in_source_and_residual_small() {
        let v = homogeneous(20, 2000.0);
        let f = Factorization::new(assemble(&v, 10.0, &HelmholtzBoundary::new(10), Stencil::NinePoint).unwrap()).unwrap();
        let (u1, r1) = f.solve_point((10, 10), Complex64::new(1.0, 0.0)).unwrap();
        let a = Complex64::new(0.3, -2.0);
        let (u2, r2) = f.solve_point((10, 10), a).unwrap();
        assert!(r1 <= RESIDUAL_TOL && r2 <= RESIDUAL_TOL);
        for (x, y) in u1.u.iter().zip(&u2.u) {
            assert!((x * a - y).norm() <= 1e-12 * (1.0 + y.norm()));
        }
    }
}
