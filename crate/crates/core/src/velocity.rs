//! Velocity-model families and the transformations used by the
//! generalization experiments.
//!
//! Six procedural families stand in for the OpenFWI datasets: flat layers
//! (monotone or random per layer), curved layers cut by a fault, and smooth
//! or rough correlated random fields. All synthesized models stay within
//! [`V_MIN`, `V_MAX`].

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Rng};

pub const V_MIN: f64 = 1500.0;
pub const V_MAX: f64 = 4500.0;

/// Regular 2-D grid. Index `(iz, ix)` maps to depth `iz * dz` and offset `ix * dx`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub nz: usize,
    pub nx: usize,
    pub dz: f64,
    pub dx: f64,
}

impl Grid {
    pub fn new(nz: usize, nx: usize, dz: f64, dx: f64) -> Result<Self> {
        let g = Self { nz, nx, dz, dx };
        g.validate()?;
        Ok(g)
    }

    /// The 70 x 70, 10 m grid of the benchmark datasets.
    pub fn openfwi() -> Self {
        Self { nz: 70, nx: 70, dz: 10.0, dx: 10.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nz < 5 || self.nx < 5 {
            return Err(Error::InvalidGrid(format!(
                "{}x{} is smaller than the 5x5 minimum of the 4th-order stencil",
                self.nz, self.nx
            )));
        }
        if !(self.dz > 0.0 && self.dx > 0.0 && self.dz.is_finite() && self.dx.is_finite()) {
            return Err(Error::InvalidGrid(format!("spacings dz={} dx={} must be positive", self.dz, self.dx)));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nz * self.nx
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn idx(&self, iz: usize, ix: usize) -> usize {
        iz * self.nx + ix
    }

    pub fn x_of(&self, ix: usize) -> f64 {
        ix as f64 * self.dx
    }

    pub fn z_of(&self, iz: usize) -> f64 {
        iz as f64 * self.dz
    }

    /// Snaps a physical location to the nearest node.
    pub fn snap(&self, x: f64, z: f64) -> Result<(usize, usize)> {
        let fx = x / self.dx;
        let fz = z / self.dz;
        let ix = fx.round();
        let iz = fz.round();
        if !x.is_finite() || !z.is_finite() || ix < 0.0 || iz < 0.0 || ix > (self.nx - 1) as f64 || iz > (self.nz - 1) as f64 {
            return Err(Error::OutOfDomain { x, z });
        }
        Ok((iz as usize, ix as usize))
    }
}

/// The six family kinds. Names follow the `flat-A` / `fault-B` / `style-A` spelling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FamilyKind {
    #[serde(rename = "flat-A")]
    FlatA,
    #[serde(rename = "flat-B")]
    FlatB,
    #[serde(rename = "fault-A")]
    FaultA,
    #[serde(rename = "fault-B")]
    FaultB,
    #[serde(rename = "style-A")]
    StyleA,
    #[serde(rename = "style-B")]
    StyleB,
}

impl FamilyKind {
    pub const ALL: [FamilyKind; 6] = [
        FamilyKind::FaultA,
        FamilyKind::FaultB,
        FamilyKind::StyleA,
        FamilyKind::StyleB,
        FamilyKind::FlatA,
        FamilyKind::FlatB,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            FamilyKind::FlatA => "flat-A",
            FamilyKind::FlatB => "flat-B",
            FamilyKind::FaultA => "fault-A",
            FamilyKind::FaultB => "fault-B",
            FamilyKind::StyleA => "style-A",
            FamilyKind::StyleB => "style-B",
        }
    }
}

impl fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FamilyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FamilyKind::ALL
            .iter()
            .copied()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidSpec(format!("unknown family `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VelocityOrdering {
    MonotoneWithDepth,
    RandomPerLayer,
}

/// Fault geometry ranges, all in grid cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultParams {
    /// Vertical offset of the hanging wall.
    pub throw: (f64, f64),
    /// Amplitude of the sinusoidal interface warp.
    pub curvature: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilySpec {
    pub kind: FamilyKind,
    /// Inclusive layer-count range.
    pub layers: (usize, usize),
    pub ordering: VelocityOrdering,
    pub fault: FaultParams,
    /// Correlation length (Gaussian sigma, cells) of the style fields.
    /// `f64::INFINITY` collapses the field to a constant.
    pub smoothing: f64,
    pub v_range: (f64, f64),
}

impl FamilySpec {
    pub fn new(kind: FamilyKind) -> Self {
        let no_fault = FaultParams { throw: (0.0, 0.0), curvature: (0.0, 0.0) };
        let (layers, ordering, fault, smoothing) = match kind {
            FamilyKind::FlatA => ((3, 8), VelocityOrdering::MonotoneWithDepth, no_fault, 0.0),
            FamilyKind::FlatB => ((3, 8), VelocityOrdering::RandomPerLayer, no_fault, 0.0),
            FamilyKind::FaultA => (
                (3, 6),
                VelocityOrdering::MonotoneWithDepth,
                FaultParams { throw: (3.0, 8.0), curvature: (1.0, 4.0) },
                0.0,
            ),
            FamilyKind::FaultB => (
                (5, 8),
                VelocityOrdering::RandomPerLayer,
                FaultParams { throw: (3.0, 10.0), curvature: (2.0, 5.0) },
                0.0,
            ),
            FamilyKind::StyleA => ((1, 1), VelocityOrdering::RandomPerLayer, no_fault, 6.0),
            FamilyKind::StyleB => ((1, 1), VelocityOrdering::RandomPerLayer, no_fault, 2.0),
        };
        Self { kind, layers, ordering, fault, smoothing, v_range: (V_MIN, V_MAX) }
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        let (lo, hi) = self.layers;
        if lo == 0 || lo > hi {
            return Err(Error::InvalidSpec(format!("empty layer range {lo}..={hi}")));
        }
        let (vlo, vhi) = self.v_range;
        if !(V_MIN <= vlo && vlo < vhi && vhi <= V_MAX) {
            return Err(Error::InvalidSpec(format!("velocity range [{vlo}, {vhi}] not inside [{V_MIN}, {V_MAX}]")));
        }
        let (tlo, thi) = self.fault.throw;
        if tlo < 0.0 || tlo > thi || thi > grid.nz as f64 / 2.0 {
            return Err(Error::InvalidSpec(format!("fault throw range [{tlo}, {thi}] must lie in [0, nz/2]")));
        }
        let (clo, chi) = self.fault.curvature;
        if clo < 0.0 || clo > chi {
            return Err(Error::InvalidSpec(format!("empty curvature range [{clo}, {chi}]")));
        }
        if self.smoothing.is_nan() || self.smoothing < 0.0 {
            return Err(Error::InvalidSpec(format!("smoothing scale {} must be >= 0", self.smoothing)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityModel {
    pub grid: Grid,
    /// Row-major `nz x nx`, depth-major.
    pub values: Vec<f64>,
    pub family_tag: String,
    pub seed: u64,
}

impl VelocityModel {
    pub fn new(grid: Grid, values: Vec<f64>, family_tag: impl Into<String>, seed: u64) -> Result<Self> {
        grid.validate()?;
        if values.len() != grid.len() {
            return Err(Error::Shape(format!("{} velocity values for a {}x{} grid", values.len(), grid.nz, grid.nx)));
        }
        let m = Self { grid, values, family_tag: family_tag.into(), seed };
        m.validate()?;
        Ok(m)
    }

    pub fn constant(grid: Grid, v: f64) -> Result<Self> {
        Self::new(grid, vec![v; grid.len()], "constant", 0)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, &v) in self.values.iter().enumerate() {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::BadVelocity { iz: i / self.grid.nx, ix: i % self.grid.nx, value: v });
            }
        }
        Ok(())
    }

    #[inline]
    pub fn at(&self, iz: usize, ix: usize) -> f64 {
        self.values[self.grid.idx(iz, ix)]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Anisotropic total variation: sum of absolute neighbour differences.
    pub fn total_variation(&self) -> f64 {
        let g = self.grid;
        let mut tv = 0.0;
        for iz in 0..g.nz {
            for ix in 0..g.nx {
                let v = self.at(iz, ix);
                if ix + 1 < g.nx {
                    tv += (self.at(iz, ix + 1) - v).abs();
                }
                if iz + 1 < g.nz {
                    tv += (self.at(iz + 1, ix) - v).abs();
                }
            }
        }
        tv
    }

    /// Largest |dv/dx| over the grid (forward differences, m/s per m).
    pub fn max_lateral_gradient(&self) -> f64 {
        let g = self.grid;
        let mut m = 0.0f64;
        for iz in 0..g.nz {
            for ix in 0..g.nx - 1 {
                m = m.max((self.at(iz, ix + 1) - self.at(iz, ix)).abs() / g.dx);
            }
        }
        m
    }

    /// Mean absolute forward-difference gradient magnitude (both axes).
    pub fn mean_abs_gradient(&self) -> f64 {
        let g = self.grid;
        let mut s = 0.0;
        let mut n = 0usize;
        for iz in 0..g.nz - 1 {
            for ix in 0..g.nx - 1 {
                let gx = (self.at(iz, ix + 1) - self.at(iz, ix)) / g.dx;
                let gz = (self.at(iz + 1, ix) - self.at(iz, ix)) / g.dz;
                s += (gx * gx + gz * gz).sqrt();
                n += 1;
            }
        }
        s / n as f64
    }
}

/// Synthesizes one model of any family.
pub fn synthesize(spec: &FamilySpec, grid: &Grid, seed: u64) -> Result<VelocityModel> {
    match spec.kind {
        FamilyKind::FlatA | FamilyKind::FlatB => synth_flat(spec, grid, seed),
        FamilyKind::FaultA | FamilyKind::FaultB => synth_fault(spec, grid, seed),
        FamilyKind::StyleA | FamilyKind::StyleB => synth_style(spec, grid, seed),
    }
}

fn family_rng(seed: u64) -> Rng {
    rng::substream(seed, rng::FAMILY, 0)
}

fn layer_count(spec: &FamilySpec, u: f64, max: usize) -> usize {
    let (lo, hi) = spec.layers;
    let n = lo + ((u * (hi - lo + 1) as f64) as usize).min(hi - lo);
    n.clamp(1, max.max(1))
}

fn layer_velocities(spec: &FamilySpec, n: usize, rng: &mut Rng) -> Vec<f64> {
    let (lo, hi) = spec.v_range;
    let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(lo..=hi)).collect();
    if spec.ordering == VelocityOrdering::MonotoneWithDepth {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    }
    v
}

/// Splits `total` cells into `n` thicknesses, each at least `min_t`.
fn thicknesses(total: usize, n: usize, min_t: usize, rng: &mut Rng) -> Vec<usize> {
    let min_t = min_t.min(total / n).max(1);
    let free = total.saturating_sub(n * min_t);
    let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
    let ws: f64 = w.iter().sum();
    let mut t: Vec<usize> = w.iter().map(|wi| min_t + (free as f64 * wi / ws).floor() as usize).collect();
    let used: usize = t.iter().sum();
    if let Some(last) = t.last_mut() {
        *last += total - used;
    }
    t
}

pub fn synth_flat(spec: &FamilySpec, grid: &Grid, seed: u64) -> Result<VelocityModel> {
    if !matches!(spec.kind, FamilyKind::FlatA | FamilyKind::FlatB) {
        return Err(Error::InvalidSpec(format!("synth_flat called with `{}`", spec.kind)));
    }
    grid.validate()?;
    spec.validate(grid)?;
    let mut rng = family_rng(seed);
    let n = layer_count(spec, rng.gen::<f64>(), grid.nz);
    let vels = layer_velocities(spec, n, &mut rng);
    let thick = thicknesses(grid.nz, n, 3, &mut rng);
    let mut values = Vec::with_capacity(grid.len());
    for (layer, &t) in thick.iter().enumerate() {
        for _ in 0..t {
            values.extend(std::iter::repeat_n(vels[layer], grid.nx));
        }
    }
    VelocityModel::new(*grid, values, spec.kind.as_str(), seed)
}

/// Geometry drawn for a faulted model; exposed so tests can rebuild the
/// unfaulted background.
#[derive(Debug, Clone)]
pub struct FaultGeometry {
    /// Interface depths (cells from the top) separating consecutive layers.
    pub interfaces: Vec<f64>,
    pub velocities: Vec<f64>,
    pub warp_amplitude: f64,
    pub warp_wavelength: f64,
    pub warp_phase: f64,
    /// A point on the fault line (x, z in cells) and its dip from horizontal.
    pub fault_point: (f64, f64),
    pub dip: f64,
    pub throw: f64,
}

impl FaultGeometry {
    fn draw(spec: &FamilySpec, grid: &Grid, rng: &mut Rng) -> Self {
        let n = layer_count(spec, rng.gen::<f64>(), grid.nz);
        let velocities = layer_velocities(spec, n, rng);
        let (clo, chi) = spec.fault.curvature;
        let (tlo, thi) = spec.fault.throw;
        let warp_amplitude = rng.gen_range(clo..=chi);
        let throw = rng.gen_range(tlo..=thi);
        let warp_wavelength = rng.gen_range(grid.nx as f64..=3.0 * grid.nx as f64);
        let warp_phase = rng.gen_range(0.0..std::f64::consts::TAU);
        let fault_point = (rng.gen_range(0.3..0.7) * grid.nx as f64, rng.gen_range(0.2..0.8) * grid.nz as f64);
        let dip = rng.gen_range(60f64..120.0).to_radians();
        // Outer layers get a margin so warping plus throw never pushes them off the grid.
        let margin = (warp_amplitude + throw).ceil() as usize + 1;
        let inner = grid.nz.saturating_sub(2 * margin);
        let thick = if n > 1 && inner >= n { thicknesses(inner, n, 4, rng) } else { thicknesses(grid.nz, n, 1, rng) };
        let offset = if n > 1 && inner >= n { margin as f64 } else { 0.0 };
        let mut interfaces = Vec::with_capacity(n.saturating_sub(1));
        let mut depth = offset;
        for t in thick.iter().take(n - 1) {
            depth += *t as f64;
            interfaces.push(depth);
        }
        Self { interfaces, velocities, warp_amplitude, warp_wavelength, warp_phase, fault_point, dip, throw }
    }

    fn layer_at(&self, depth: f64) -> usize {
        self.interfaces.iter().take_while(|&&d| d <= depth).count()
    }

    fn hanging(&self, iz: usize, ix: usize) -> bool {
        let (px, pz) = self.fault_point;
        let (dx, dz) = (self.dip.cos(), self.dip.sin());
        let (rx, rz) = (ix as f64 + 0.5 - px, iz as f64 + 0.5 - pz);
        dx * rz - dz * rx > 0.0
    }

    /// Renders the model; `with_fault = false` gives the unfaulted background.
    pub fn render(&self, grid: &Grid, with_fault: bool) -> Vec<f64> {
        let mut values = Vec::with_capacity(grid.len());
        for iz in 0..grid.nz {
            for ix in 0..grid.nx {
                let warp = self.warp_amplitude
                    * (std::f64::consts::TAU * ix as f64 / self.warp_wavelength + self.warp_phase).sin();
                let shift = if with_fault && self.hanging(iz, ix) { self.throw } else { 0.0 };
                let depth = iz as f64 + 0.5 - warp - shift;
                values.push(self.velocities[self.layer_at(depth)]);
            }
        }
        values
    }
}

/// Draws the fault geometry used by [`synth_fault`] for `seed`.
pub fn fault_geometry(spec: &FamilySpec, grid: &Grid, seed: u64) -> Result<FaultGeometry> {
    if !matches!(spec.kind, FamilyKind::FaultA | FamilyKind::FaultB) {
        return Err(Error::InvalidSpec(format!("synth_fault called with `{}`", spec.kind)));
    }
    grid.validate()?;
    spec.validate(grid)?;
    Ok(FaultGeometry::draw(spec, grid, &mut family_rng(seed)))
}

pub fn synth_fault(spec: &FamilySpec, grid: &Grid, seed: u64) -> Result<VelocityModel> {
    let geom = fault_geometry(spec, grid, seed)?;
    VelocityModel::new(*grid, geom.render(grid, true), spec.kind.as_str(), seed)
}

pub fn synth_style(spec: &FamilySpec, grid: &Grid, seed: u64) -> Result<VelocityModel> {
    if !matches!(spec.kind, FamilyKind::StyleA | FamilyKind::StyleB) {
        return Err(Error::InvalidSpec(format!("synth_style called with `{}`", spec.kind)));
    }
    grid.validate()?;
    spec.validate(grid)?;
    let mut rng = family_rng(seed);
    let (vlo, vhi) = spec.v_range;
    let span = vhi - vlo;
    let lo = vlo + rng.gen_range(0.0..=span / 3.0);
    let hi = vhi - rng.gen_range(0.0..=span / 3.0);
    let noise: Vec<f64> = (0..grid.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
    let field = if spec.smoothing.is_infinite() {
        vec![0.0; grid.len()]
    } else {
        smooth_field(&noise, grid.nz, grid.nx, spec.smoothing)
    };
    let fmin = field.iter().copied().fold(f64::INFINITY, f64::min);
    let fmax = field.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let values = if fmax - fmin <= 1e-12 * (1.0 + fmax.abs()) {
        vec![0.5 * (lo + hi); grid.len()]
    } else {
        field.iter().map(|f| (lo + (f - fmin) / (fmax - fmin) * (hi - lo)).clamp(lo, hi)).collect()
    };
    VelocityModel::new(*grid, values, spec.kind.as_str(), seed)
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (4.0 * sigma).ceil() as i64;
    let w: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

/// Separable Gaussian blur with edge replication.
pub(crate) fn smooth_field(values: &[f64], nz: usize, nx: usize, sigma: f64) -> Vec<f64> {
    if sigma == 0.0 {
        return values.to_vec();
    }
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as i64;
    let clampi = |i: i64, n: usize| i.clamp(0, n as i64 - 1) as usize;
    let mut tmp = vec![0.0; values.len()];
    for iz in 0..nz {
        for ix in 0..nx {
            let mut acc = 0.0;
            for (o, w) in k.iter().enumerate() {
                acc += w * values[iz * nx + clampi(ix as i64 + o as i64 - r, nx)];
            }
            tmp[iz * nx + ix] = acc;
        }
    }
    let mut out = vec![0.0; values.len()];
    for iz in 0..nz {
        for ix in 0..nx {
            let mut acc = 0.0;
            for (o, w) in k.iter().enumerate() {
                acc += w * tmp[clampi(iz as i64 + o as i64 - r, nz) * nx + ix];
            }
            out[iz * nx + ix] = acc;
        }
    }
    out
}

/// 2-D Gaussian smoothing; `sigma` is the kernel standard deviation in cells.
pub fn gaussian_smooth(v: &VelocityModel, sigma: f64) -> Result<VelocityModel> {
    if sigma.is_nan() || sigma < 0.0 {
        return Err(Error::InvalidArgument(format!("smoothing sigma {sigma} must be >= 0")));
    }
    let (lo, hi) = (v.min(), v.max());
    let values = smooth_field(&v.values, v.grid.nz, v.grid.nx, sigma)
        .into_iter()
        .map(|x| x.clamp(lo, hi))
        .collect();
    Ok(VelocityModel { grid: v.grid, values, family_tag: v.family_tag.clone(), seed: v.seed })
}

/// Replaces every cell of the top layer with `new_v`.
///
/// The top layer is the constant-velocity region grown downward, column by
/// column, from a uniform first row.
pub fn set_first_layer_velocity(v: &VelocityModel, new_v: f64) -> Result<VelocityModel> {
    if !(new_v.is_finite() && new_v > 0.0) {
        return Err(Error::InvalidArgument(format!("velocity {new_v} must be finite and positive")));
    }
    let g = v.grid;
    let top = v.at(0, 0);
    if (0..g.nx).any(|ix| v.at(0, ix) != top) {
        return Err(Error::NoTopLayer);
    }
    let mut out = v.clone();
    for ix in 0..g.nx {
        for iz in 0..g.nz {
            if v.at(iz, ix) != top {
                break;
            }
            out.values[g.idx(iz, ix)] = new_v;
        }
    }
    Ok(out)
}

/// First-layer velocity, if the model has a uniform top row.
pub fn first_layer_velocity(v: &VelocityModel) -> Option<f64> {
    let top = v.at(0, 0);
    (0..v.grid.nx).all(|ix| v.at(0, ix) == top).then_some(top)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g70() -> Grid {
        Grid::openfwi()
    }

    fn distinct(values: &[f64]) -> usize {
        let mut v = values.to_vec();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v.dedup();
        v.len()
    }

    #[test]
    fn grid_rejects_small_or_bad_spacing() {
        assert!(Grid::new(4, 70, 10.0, 10.0).is_err());
        assert!(Grid::new(70, 70, 0.0, 10.0).is_err());
        assert!(Grid::new(5, 5, 1.0, 1.0).is_ok());
    }

    #[test]
    fn snap_to_nearest_node() {
        let g = g70();
        assert_eq!(g.snap(172.5, 10.0).unwrap(), (1, 17));
        assert_eq!(g.snap(345.0, 10.0).unwrap(), (1, 35));
        assert_eq!(g.snap(517.5, 10.0).unwrap(), (1, 52));
        assert!(g.snap(700.0, 10.0).is_err());
        assert!(g.snap(-6.0, 0.0).is_err());
    }

    #[test]
    fn flat_a_is_laterally_constant_and_monotone() {
        for seed in 0..20 {
            let m = synth_flat(&FamilySpec::new(FamilyKind::FlatA), &g70(), seed).unwrap();
            for iz in 0..70 {
                assert!((0..70).all(|ix| m.at(iz, ix) == m.at(iz, 0)));
                if iz > 0 {
                    assert!(m.at(iz, 0) >= m.at(iz - 1, 0));
                }
            }
        }
    }

    #[test]
    fn flat_b_seed7_within_bounds() {
        let m = synth_flat(&FamilySpec::new(FamilyKind::FlatB), &g70(), 7).unwrap();
        assert!(m.min() >= V_MIN && m.max() <= V_MAX);
    }

    #[test]
    fn wrong_kind_is_rejected() {
        let s = FamilySpec::new(FamilyKind::StyleA);
        assert!(synth_flat(&s, &g70(), 1).is_err());
        assert!(synth_fault(&s, &g70(), 1).is_err());
        assert!(synth_style(&FamilySpec::new(FamilyKind::FlatA), &g70(), 1).is_err());
    }

    #[test]
    fn zero_throw_gives_background() {
        let mut spec = FamilySpec::new(FamilyKind::FaultA);
        spec.fault.throw = (0.0, 0.0);
        let m = synth_fault(&spec, &g70(), 5).unwrap();
        let geom = fault_geometry(&spec, &g70(), 5).unwrap();
        assert_eq!(m.values, geom.render(&g70(), false));
    }

    #[test]
    fn fault_a_seed3_has_lateral_jump() {
        let spec = FamilySpec::new(FamilyKind::FaultA);
        let m = synth_fault(&spec, &g70(), 3).unwrap();
        let geom = fault_geometry(&spec, &g70(), 3).unwrap();
        // Layers are constant, so the intra-layer variation is zero.
        let intra = 0.0;
        let mut found = false;
        for iz in 0..70 {
            for ix in 0..69 {
                if (m.at(iz, ix + 1) - m.at(iz, ix)).abs() > intra && geom.hanging(iz, ix) != geom.hanging(iz, ix + 1) {
                    found = true;
                }
            }
        }
        assert!(found, "no velocity jump across the fault line");
    }

    #[test]
    fn fault_b_has_at_least_as_many_layers() {
        for seed in 0..30 {
            let a = synth_fault(&FamilySpec::new(FamilyKind::FaultA), &g70(), seed).unwrap();
            let b = synth_fault(&FamilySpec::new(FamilyKind::FaultB), &g70(), seed).unwrap();
            assert!(distinct(&b.values) >= distinct(&a.values), "seed {seed}");
        }
    }

    #[test]
    fn throw_bound_is_validated() {
        let mut spec = FamilySpec::new(FamilyKind::FaultA);
        spec.fault.throw = (1.0, 36.0);
        assert!(synth_fault(&spec, &g70(), 0).is_err());
    }

    #[test]
    fn infinite_smoothing_is_constant() {
        let mut spec = FamilySpec::new(FamilyKind::StyleA);
        spec.smoothing = f64::INFINITY;
        let m = synth_style(&spec, &g70(), 2).unwrap();
        assert_eq!(m.total_variation(), 0.0);
    }

    #[test]
    fn style_a_smoother_than_style_b() {
        for seed in [0, 1, 11, 42] {
            let a = synth_style(&FamilySpec::new(FamilyKind::StyleA), &g70(), seed).unwrap();
            let b = synth_style(&FamilySpec::new(FamilyKind::StyleB), &g70(), seed).unwrap();
            assert!(a.mean_abs_gradient() < b.mean_abs_gradient());
        }
    }

    #[test]
    fn style_a_seed11_within_bounds() {
        let m = synth_style(&FamilySpec::new(FamilyKind::StyleA), &g70(), 11).unwrap();
        assert!(m.min() >= 1500.0 && m.max() <= 4500.0);
    }

    #[test]
    fn smoothing_identity_and_constant() {
        let m = synth_fault(&FamilySpec::new(FamilyKind::FaultA), &g70(), 3).unwrap();
        assert_eq!(gaussian_smooth(&m, 0.0).unwrap(), m);
        let c = VelocityModel::constant(g70(), 2345.0).unwrap();
        let s = gaussian_smooth(&c, 4.0).unwrap();
        assert!(s.values.iter().all(|&v| (v - 2345.0).abs() < 1e-9));
        assert!(gaussian_smooth(&m, -1.0).is_err());
    }

    #[test]
    fn smoothing_reduces_fault_gradient() {
        let m = synth_fault(&FamilySpec::new(FamilyKind::FaultA), &g70(), 3).unwrap();
        let s = gaussian_smooth(&m, 10.0).unwrap();
        assert!(s.max_lateral_gradient() < m.max_lateral_gradient());
        assert!(s.min() >= m.min() && s.max() <= m.max());
    }

    #[test]
    fn first_layer_replacement() {
        let g = g70();
        let mut values = vec![1645.0; g.len()];
        for v in values.iter_mut().skip(12 * 70) {
            *v = 2800.0;
        }
        let m = VelocityModel::new(g, values, "flat-A", 0).unwrap();
        assert_eq!(set_first_layer_velocity(&m, 1645.0).unwrap(), m);
        let r = set_first_layer_velocity(&m, 2250.0).unwrap();
        for iz in 0..70 {
            for ix in 0..70 {
                let want = if iz < 12 { 2250.0 } else { 2800.0 };
                assert_eq!(r.at(iz, ix), want);
            }
        }
        assert!(r.min() >= V_MIN && r.max() <= V_MAX);
    }

    #[test]
    fn no_top_layer_detected() {
        let g = g70();
        let values: Vec<f64> = (0..g.len()).map(|i| 2000.0 + (i % 70) as f64).collect();
        let m = VelocityModel::new(g, values, "x", 0).unwrap();
        assert!(matches!(set_first_layer_velocity(&m, 2250.0), Err(Error::NoTopLayer)));
    }

    #[test]
    fn family_names_round_trip() {
        for k in FamilyKind::ALL {
            assert_eq!(k.as_str().parse::<FamilyKind>().unwrap(), k);
        }
        assert!("marmousi".parse::<FamilyKind>().is_err());
    }
}
