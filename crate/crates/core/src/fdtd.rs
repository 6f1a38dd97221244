//! Time-domain acoustic simulation: 2nd order in time, 4th order in space,
//! Ricker point source and a damped padding layer on all four sides.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::velocity::{Grid, VelocityModel};

/// Stability bound on the Courant number for the 4th-order 2-D leapfrog scheme.
pub const C_MAX: f64 = 0.866_025_403_784_438_6;

/// Stencil coefficients `c_0`, `c_{±1}`, `c_{±2}` of the 5-point second derivative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StencilCoefficients {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
}

impl StencilCoefficients {
    pub const fn standard() -> Self {
        Self { c0: -5.0 / 2.0, c1: 4.0 / 3.0, c2: -1.0 / 12.0 }
    }

    /// The assignment with `c_{±1}` and `c_{±2}` swapped. Not consistent
    /// (exact only on constants); kept to demonstrate the failure.
    pub const fn as_printed() -> Self {
        Self { c0: -5.0 / 2.0, c1: -1.0 / 12.0, c2: 4.0 / 3.0 }
    }
}

impl Default for StencilCoefficients {
    fn default() -> Self {
        Self::standard()
    }
}

/// Ricker wavelet `(1 - 2 pi^2 f^2 tau^2) exp(-pi^2 f^2 tau^2)`, `tau = t - t0`.
pub fn ricker(t: f64, fp: f64, t0: f64) -> f64 {
    let a = (std::f64::consts::PI * fp * (t - t0)).powi(2);
    (1.0 - 2.0 * a) * (-a).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    /// Horizontal position (m).
    pub x: f64,
    /// Depth (m).
    pub z: f64,
    /// Ricker peak frequency (Hz).
    pub fp: f64,
    /// Wavelet delay (s).
    pub t0: f64,
    pub amplitude: f64,
}

impl SourceSpec {
    /// Ricker source with the conventional delay `t0 = 1 / fp` and unit amplitude.
    pub fn ricker(x: f64, z: f64, fp: f64) -> Self {
        Self { x, z, fp, t0: 1.0 / fp, amplitude: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fp > 0.0 && self.fp.is_finite()) {
            return Err(Error::InvalidArgument(format!("peak frequency {} must be positive", self.fp)));
        }
        if !self.t0.is_finite() || !self.amplitude.is_finite() {
            return Err(Error::InvalidArgument("source delay and amplitude must be finite".into()));
        }
        Ok(())
    }

    pub fn value(&self, t: f64) -> f64 {
        self.amplitude * ricker(t, self.fp, self.t0)
    }

    /// Snapped `(iz, ix)` node on `grid`.
    pub fn node(&self, grid: &Grid) -> Result<(usize, usize)> {
        grid.snap(self.x, self.z)
    }
}

/// `n` sources at depth `z`, spread evenly over `[0, (nx-1) dx]` and snapped to nodes.
pub fn surface_sources(grid: &Grid, n: usize, z: f64, fp: f64) -> Result<Vec<SourceSpec>> {
    if n == 0 {
        return Err(Error::InvalidArgument("source count must be positive".into()));
    }
    let width = (grid.nx - 1) as f64 * grid.dx;
    (0..n)
        .map(|i| {
            let x = if n == 1 { width } else { width * i as f64 / (n - 1) as f64 };
            let (iz, ix) = grid.snap(x, z)?;
            Ok(SourceSpec::ricker(grid.x_of(ix), grid.z_of(iz), fp))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub dt: f64,
    pub nt: usize,
}

impl TimeGrid {
    pub fn new(dt: f64, nt: usize) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) || nt == 0 {
            return Err(Error::InvalidArgument(format!("time grid dt={dt} nt={nt} must be positive")));
        }
        Ok(Self { dt, nt })
    }

    /// One second at 1 ms.
    pub fn standard() -> Self {
        Self { dt: 1e-3, nt: 1000 }
    }

    pub fn duration(&self) -> f64 {
        self.dt * self.nt as f64
    }
}

/// Padding of `n_layers` cells on every side in which the field is
/// multiplied by `exp(-(alpha * d)^2)` each step, `d` the depth into the pad.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbsorbingBoundary {
    pub n_layers: usize,
    pub alpha: f64,
}

impl AbsorbingBoundary {
    /// Decay exponent `alpha * n_layers` reached at the outer edge.
    pub const EDGE_DECAY: f64 = 0.3;

    pub fn new(n_layers: usize) -> Self {
        let alpha = if n_layers == 0 { 0.0 } else { Self::EDGE_DECAY / n_layers as f64 };
        Self { n_layers, alpha }
    }

    pub fn standard() -> Self {
        Self::new(120)
    }

    /// No padding, no damping: the outer ring acts as a rigid wall.
    pub fn reflecting() -> Self {
        Self { n_layers: 0, alpha: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("damping coefficient {} must be >= 0", self.alpha)));
        }
        Ok(())
    }

    pub fn factor(&self, d: usize) -> f64 {
        (-(self.alpha * d as f64).powi(2)).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CflReport {
    pub number: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Courant number `v_max dt sqrt(1/dx^2 + 1/dz^2)` against `bound`.
pub fn cfl_check_with(v_max: f64, dt: f64, dx: f64, dz: f64, bound: f64) -> CflReport {
    let number = v_max * dt * (1.0 / (dx * dx) + 1.0 / (dz * dz)).sqrt();
    CflReport { number, bound, pass: number <= bound }
}

pub fn cfl_check(v: &VelocityModel, dt: f64) -> CflReport {
    cfl_check_with(v.max(), dt, v.grid.dx, v.grid.dz, C_MAX)
}

/// 4th-order Laplacian on the interior; the 2-cell outer ring is left at zero.
pub fn laplacian4(p: &[f64], grid: &Grid, coeffs: StencilCoefficients) -> Result<Vec<f64>> {
    if grid.nz < 5 || grid.nx < 5 {
        return Err(Error::InvalidGrid(format!("{}x{} field is smaller than 5x5", grid.nz, grid.nx)));
    }
    if p.len() != grid.len() {
        return Err(Error::Shape(format!("field of {} values on a {}x{} grid", p.len(), grid.nz, grid.nx)));
    }
    let mut out = vec![0.0; p.len()];
    let k = Kernel::new(grid, coeffs);
    for iz in 2..grid.nz - 2 {
        k.row(p, iz, |ix, lap| out[iz * grid.nx + ix] = lap);
    }
    Ok(out)
}

struct Kernel {
    nx: usize,
    nx_end: usize,
    cx: [f64; 3],
    cz: [f64; 3],
}

impl Kernel {
    fn new(grid: &Grid, c: StencilCoefficients) -> Self {
        let (ix2, iz2) = (1.0 / (grid.dx * grid.dx), 1.0 / (grid.dz * grid.dz));
        Self {
            nx: grid.nx,
            nx_end: grid.nx - 2,
            cx: [c.c0 * ix2, c.c1 * ix2, c.c2 * ix2],
            cz: [c.c0 * iz2, c.c1 * iz2, c.c2 * iz2],
        }
    }

    #[inline]
    fn row(&self, p: &[f64], iz: usize, mut f: impl FnMut(usize, f64)) {
        let nx = self.nx;
        let r = iz * nx;
        let (up2, up1, dn1, dn2) = (&p[r - 2 * nx..], &p[r - nx..], &p[r + nx..], &p[r + 2 * nx..]);
        let row = &p[r..r + nx];
        let c0 = self.cx[0] + self.cz[0];
        for ix in 2..self.nx_end {
            let lap = c0 * row[ix]
                + self.cx[1] * (row[ix - 1] + row[ix + 1])
                + self.cx[2] * (row[ix - 2] + row[ix + 2])
                + self.cz[1] * (up1[ix] + dn1[ix])
                + self.cz[2] * (up2[ix] + dn2[ix]);
            f(ix, lap);
        }
    }
}

/// Leapfrog state on a padded grid.
pub struct Stepper {
    grid: Grid,
    kernel: Kernel,
    /// `v^2 dt^2` per node.
    v2dt2: Vec<f64>,
    /// Per-node damping factor; exactly 1 outside the pad.
    damping: Vec<f64>,
    damped: bool,
}

impl Stepper {
    pub fn new(grid: Grid, v2dt2: Vec<f64>, damping: Vec<f64>, coeffs: StencilCoefficients) -> Result<Self> {
        grid.validate()?;
        if v2dt2.len() != grid.len() || damping.len() != grid.len() {
            return Err(Error::Shape("stepper coefficient arrays do not match the grid".into()));
        }
        let damped = damping.iter().any(|&d| d != 1.0);
        Ok(Self { kernel: Kernel::new(&grid, coeffs), grid, v2dt2, damping, damped })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Writes `2 p - p_prev + v^2 dt^2 (L p - s)` into `p_prev`, then damps.
    /// `source` is `(flat index, s)`.
    pub fn step_into(&self, p_prev: &mut [f64], p: &mut [f64], source: Option<(usize, f64)>) {
        let g = &self.grid;
        for iz in 2..g.nz - 2 {
            let r = iz * g.nx;
            let out = &mut p_prev[r..r + g.nx];
            let c = &self.v2dt2[r..r + g.nx];
            self.kernel.row(p, iz, |ix, lap| {
                out[ix] = 2.0 * p[r + ix] - out[ix] + c[ix] * lap;
            });
        }
        if let Some((i, s)) = source {
            p_prev[i] -= self.v2dt2[i] * s;
        }
        if self.damped {
            for ((a, b), d) in p_prev.iter_mut().zip(p.iter_mut()).zip(&self.damping) {
                *a *= d;
                *b *= d;
            }
        }
    }
}

/// One leapfrog update on an unpadded grid without damping.
pub fn step(p_prev: &[f64], p_curr: &[f64], v: &VelocityModel, source: Option<((usize, usize), f64)>, dt: f64) -> Result<Vec<f64>> {
    let g = v.grid;
    if p_prev.len() != g.len() || p_curr.len() != g.len() {
        return Err(Error::Shape("wavefield and velocity shapes differ".into()));
    }
    let cfl = cfl_check(v, dt);
    if !cfl.pass {
        return Err(Error::CflViolation { cfl: cfl.number, bound: cfl.bound });
    }
    let v2dt2 = v.values.iter().map(|c| c * c * dt * dt).collect();
    let st = Stepper::new(g, v2dt2, vec![1.0; g.len()], StencilCoefficients::standard())?;
    let mut next = p_prev.to_vec();
    let mut curr = p_curr.to_vec();
    st.step_into(&mut next, &mut curr, source.map(|((iz, ix), s)| (g.idx(iz, ix), s)));
    if next.iter().any(|x| !x.is_finite()) {
        return Err(Error::Unstable { step: 0 });
    }
    Ok(next)
}

/// Time-major pressure `p[n][iz][ix]` on the physical grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeWavefield {
    pub grid: Grid,
    pub time: TimeGrid,
    pub source: SourceSpec,
    pub p: Vec<f64>,
}

impl TimeWavefield {
    pub fn zeros(grid: Grid, time: TimeGrid, source: SourceSpec) -> Self {
        Self { grid, time, source, p: vec![0.0; grid.len() * time.nt] }
    }

    pub fn snapshot(&self, n: usize) -> &[f64] {
        let m = self.grid.len();
        &self.p[n * m..(n + 1) * m]
    }

    pub fn at(&self, n: usize, iz: usize, ix: usize) -> f64 {
        self.p[n * self.grid.len() + self.grid.idx(iz, ix)]
    }

    pub fn rms(&self) -> f64 {
        (self.p.iter().map(|x| x * x).sum::<f64>() / self.p.len() as f64).sqrt()
    }
}

/// Everything needed to advance a padded simulation; shared by the
/// full-storage and streaming drivers.
struct PaddedRun {
    stepper: Stepper,
    padded: Grid,
    pad: usize,
    src_idx: usize,
}

impl PaddedRun {
    fn new(v: &VelocityModel, src: &SourceSpec, tg: &TimeGrid, ab: &AbsorbingBoundary, coeffs: StencilCoefficients) -> Result<Self> {
        v.validate()?;
        src.validate()?;
        ab.validate()?;
        let g = v.grid;
        let (siz, six) = src.node(&g)?;
        // Edge-extended padding keeps v_max unchanged.
        let cfl = cfl_check(v, tg.dt);
        if !cfl.pass {
            return Err(Error::CflViolation { cfl: cfl.number, bound: cfl.bound });
        }
        let pad = ab.n_layers;
        let padded = Grid { nz: g.nz + 2 * pad, nx: g.nx + 2 * pad, dz: g.dz, dx: g.dx };
        let mut v2dt2 = Vec::with_capacity(padded.len());
        let mut damping = Vec::with_capacity(padded.len());
        for iz in 0..padded.nz {
            let pz = iz.clamp(pad, pad + g.nz - 1) - pad;
            let dz = pad.saturating_sub(iz).max((iz + 1).saturating_sub(pad + g.nz));
            for ix in 0..padded.nx {
                let px = ix.clamp(pad, pad + g.nx - 1) - pad;
                let dx = pad.saturating_sub(ix).max((ix + 1).saturating_sub(pad + g.nx));
                let c = v.at(pz, px);
                v2dt2.push(c * c * tg.dt * tg.dt);
                damping.push(if dz.max(dx) == 0 { 1.0 } else { ab.factor(dz.max(dx)) });
            }
        }
        let src_idx = padded.idx(siz + pad, six + pad);
        Ok(Self { stepper: Stepper::new(padded, v2dt2, damping, coeffs)?, padded, pad, src_idx })
    }

    /// Runs `nt` levels, handing each physical snapshot to `emit(n, field)`.
    fn run(&self, src: &SourceSpec, tg: &TimeGrid, nx_phys: usize, nz_phys: usize, mut emit: impl FnMut(usize, &[f64])) -> Result<()> {
        let mut prev = vec![0.0; self.padded.len()];
        let mut curr = vec![0.0; self.padded.len()];
        let mut phys = vec![0.0; nz_phys * nx_phys];
        let extract = |field: &[f64], out: &mut [f64]| {
            for iz in 0..nz_phys {
                let r = (iz + self.pad) * self.padded.nx + self.pad;
                out[iz * nx_phys..(iz + 1) * nx_phys].copy_from_slice(&field[r..r + nx_phys]);
            }
        };
        if tg.nt > 0 {
            emit(0, &phys);
        }
        if tg.nt > 1 {
            emit(1, &phys);
        }
        for n in 1..tg.nt.saturating_sub(1) {
            let s = src.value(n as f64 * tg.dt);
            let source = (s != 0.0).then_some((self.src_idx, s));
            self.stepper.step_into(&mut prev, &mut curr, source);
            std::mem::swap(&mut prev, &mut curr);
            extract(&curr, &mut phys);
            if (n % 50 == 0 || n + 2 == tg.nt) && curr.iter().any(|x| !x.is_finite()) {
                return Err(Error::Unstable { step: n + 1 });
            }
            emit(n + 1, &phys);
        }
        Ok(())
    }
}

/// Runs `nt` time levels. Level 0 and 1 are zero, level `n + 1` uses the
/// source value at `n dt`.
pub fn simulate(v: &VelocityModel, src: &SourceSpec, tg: &TimeGrid, ab: &AbsorbingBoundary) -> Result<TimeWavefield> {
    simulate_with(v, src, tg, ab, StencilCoefficients::standard())
}

pub fn simulate_with(
    v: &VelocityModel,
    src: &SourceSpec,
    tg: &TimeGrid,
    ab: &AbsorbingBoundary,
    coeffs: StencilCoefficients,
) -> Result<TimeWavefield> {
    let run = PaddedRun::new(v, src, tg, ab, coeffs)?;
    let mut w = TimeWavefield::zeros(v.grid, *tg, *src);
    let m = v.grid.len();
    run.run(src, tg, v.grid.nx, v.grid.nz, |n, field| w.p[n * m..(n + 1) * m].copy_from_slice(field))?;
    Ok(w)
}

/// Like [`simulate`] but hands each physical snapshot to `observer` instead
/// of storing the full history.
pub fn simulate_streaming(
    v: &VelocityModel,
    src: &SourceSpec,
    tg: &TimeGrid,
    ab: &AbsorbingBoundary,
    observer: impl FnMut(usize, &[f64]),
) -> Result<()> {
    let run = PaddedRun::new(v, src, tg, ab, StencilCoefficients::standard())?;
    run.run(src, tg, v.grid.nx, v.grid.nz, observer)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn homogeneous(n: usize, v: f64) -> VelocityModel {
        VelocityModel::constant(Grid::new(n, n, 10.0, 10.0).unwrap(), v).unwrap()
    }

    #[test]
    fn ricker_peak_and_roots() {
        assert_eq!(ricker(0.2, 15.0, 0.2), 1.0);
        let tau = 1.0 / (std::f64::consts::PI * 15.0 * 2f64.sqrt());
        assert!(ricker(0.1 + tau, 15.0, 0.1).abs() < 1e-15);
        assert!(ricker(0.1 - tau, 15.0, 0.1).abs() < 1e-15);
    }

    #[test]
    fn cfl_examples() {
        let c = cfl_check_with(4500.0, 0.001, 10.0, 10.0, C_MAX);
        assert!((c.number - 0.636_396_103).abs() < 1e-8 && c.pass);
        assert_eq!(cfl_check_with(4500.0, 0.0, 10.0, 10.0, C_MAX).number, 0.0);
        let c = cfl_check_with(4500.0, 0.002, 10.0, 10.0, C_MAX);
        assert!((c.number - 1.272_792).abs() < 1e-5 && !c.pass);
    }

    #[test]
    fn laplacian_of_constant_is_zero() {
        let g = Grid::new(9, 9, 10.0, 10.0).unwrap();
        let l = laplacian4(&vec![3.5; 81], &g, StencilCoefficients::standard()).unwrap();
        assert!(l.iter().all(|&x| x.abs() < 1e-14));
        assert!(laplacian4(&[0.0; 16], &Grid { nz: 4, nx: 4, dz: 1.0, dx: 1.0 }, StencilCoefficients::standard()).is_err());
    }

    #[test]
    fn zero_dynamics() {
        let v = homogeneous(9, 2000.0);
        let z = vec![0.0; 81];
        assert!(step(&z, &z, &v, None, 1e-3).unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn single_source_step_is_local() {
        let v = homogeneous(9, 2000.0);
        let z = vec![0.0; 81];
        let next = step(&z, &z, &v, Some(((4, 4), 0.7)), 1e-3).unwrap();
        for (i, &x) in next.iter().enumerate() {
            if i == 40 {
                assert_eq!(x, -2000.0 * 2000.0 * 1e-6 * 0.7);
            } else {
                assert_eq!(x, 0.0);
            }
        }
    }

    #[test]
    fn zero_amplitude_source_gives_zero_field() {
        let v = homogeneous(20, 2000.0);
        let mut s = SourceSpec::ricker(100.0, 100.0, 15.0);
        s.amplitude = 0.0;
        let w = simulate(&v, &s, &TimeGrid::new(1e-3, 100).unwrap(), &AbsorbingBoundary::new(10)).unwrap();
        assert!(w.p.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn first_levels_are_zero_and_source_enters_at_level_two() {
        let v = homogeneous(20, 2000.0);
        let s = SourceSpec::ricker(100.0, 100.0, 15.0);
        let tg = TimeGrid::new(1e-3, 10).unwrap();
        let w = simulate(&v, &s, &tg, &AbsorbingBoundary::new(10)).unwrap();
        assert!(w.snapshot(0).iter().chain(w.snapshot(1)).all(|&x| x == 0.0));
        let (iz, ix) = s.node(&v.grid).unwrap();
        assert_eq!(w.at(2, iz, ix), -4e6 * 1e-6 * s.value(1e-3));
    }

    #[test]
    fn out_of_domain_source_and_cfl_violation() {
        let v = homogeneous(20, 2000.0);
        let tg = TimeGrid::new(1e-3, 10).unwrap();
        let bad = SourceSpec::ricker(1000.0, 10.0, 15.0);
        assert!(matches!(simulate(&v, &bad, &tg, &AbsorbingBoundary::new(5)), Err(Error::OutOfDomain { .. })));
        let s = SourceSpec::ricker(10.0, 10.0, 15.0);
        let fast = TimeGrid::new(5e-3, 10).unwrap();
        assert!(matches!(simulate(&v, &s, &fast, &AbsorbingBoundary::new(5)), Err(Error::CflViolation { .. })));
    }

    #[test]
    fn surface_sources_snap_to_grid() {
        let xs: Vec<f64> = surface_sources(&Grid::openfwi(), 5, 10.0, 15.0).unwrap().iter().map(|s| s.x).collect();
        assert_eq!(xs, vec![0.0, 170.0, 350.0, 520.0, 690.0]);
        let one = surface_sources(&Grid::openfwi(), 1, 10.0, 15.0).unwrap();
        assert_eq!((one[0].x, one[0].z), (690.0, 10.0));
    }
}
