//! Network input assembly: velocity, coordinate planes, one-hot source
//! and constant frequency channels, plus the affine normalization fitted on
//! the training set.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::velocity::{Grid, VelocityModel};

/// Which channels an input tensor carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputLayout {
    /// `(v, x, z)`.
    Basic,
    /// `(v, x, z, source)`.
    WithSource,
    /// `(v, x, z, source, frequency)`.
    Full,
}

impl InputLayout {
    pub fn channels(&self) -> usize {
        match self {
            InputLayout::Basic => 3,
            InputLayout::WithSource => 4,
            InputLayout::Full => 5,
        }
    }

    pub fn from_channels(c: usize) -> Result<Self> {
        match c {
            3 => Ok(InputLayout::Basic),
            4 => Ok(InputLayout::WithSource),
            5 => Ok(InputLayout::Full),
            _ => Err(Error::InvalidArgument(format!("{c} input channels; expected 3, 4 or 5"))),
        }
    }
}

/// Per-channel `(x - mean) / range`. The source channel is never rescaled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub range: Vec<f64>,
    /// Labels are divided by this during training and predictions multiplied back.
    pub label_scale: f64,
}

impl NormStats {
    pub fn identity(channels: usize) -> Self {
        Self { mean: vec![0.0; channels], range: vec![1.0; channels], label_scale: 1.0 }
    }

    /// Fits statistics on training velocity fields (each `grid.len()` values)
    /// and the training frequency list.
    pub fn fit(layout: InputLayout, grid: &Grid, velocities: &[&[f32]], freqs: &[f64], label_scale: f64) -> Self {
        let c = layout.channels();
        let mut s = Self::identity(c);
        let (mut lo, mut hi, mut sum, mut n) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0usize);
        for v in velocities {
            for &x in v.iter() {
                let x = x as f64;
                lo = lo.min(x);
                hi = hi.max(x);
                sum += x;
            }
            n += v.len();
        }
        if n > 0 {
            s.mean[0] = sum / n as f64;
            s.range[0] = if hi > lo { hi - lo } else { 1.0 };
        }
        let xs = (grid.nx - 1) as f64 * grid.dx;
        let zs = (grid.nz - 1) as f64 * grid.dz;
        s.mean[1] = xs / 2.0;
        s.range[1] = if xs > 0.0 { xs } else { 1.0 };
        s.mean[2] = zs / 2.0;
        s.range[2] = if zs > 0.0 { zs } else { 1.0 };
        if layout == InputLayout::Full && !freqs.is_empty() {
            let flo = freqs.iter().copied().fold(f64::INFINITY, f64::min);
            let fhi = freqs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            s.mean[4] = freqs.iter().sum::<f64>() / freqs.len() as f64;
            s.range[4] = if fhi > flo { fhi - flo } else { 1.0 };
        }
        s.label_scale = if label_scale > 0.0 && label_scale.is_finite() { label_scale } else { 1.0 };
        s
    }

    pub fn apply(&self, channel: usize, x: f64) -> f64 {
        (x - self.mean[channel]) / self.range[channel]
    }
}

/// Raw (unnormalized) input planes `[C, nz, nx]`, row-major.
pub fn assemble_input(v: &VelocityModel, source: Option<(usize, usize)>, freq: Option<f64>) -> Result<Vec<f64>> {
    let layout = match (source, freq) {
        (None, None) => InputLayout::Basic,
        (Some(_), Some(_)) => InputLayout::Full,
        _ => return Err(Error::InvalidArgument("source and frequency must be given together".into())),
    };
    assemble_planes(&v.grid, &v.values, layout, source, freq.unwrap_or(0.0))
}

pub fn assemble_planes(grid: &Grid, velocity: &[f64], layout: InputLayout, source: Option<(usize, usize)>, freq: f64) -> Result<Vec<f64>> {
    if velocity.len() != grid.len() {
        return Err(Error::Shape("velocity does not match the grid".into()));
    }
    let m = grid.len();
    let mut out = Vec::with_capacity(layout.channels() * m);
    out.extend_from_slice(velocity);
    out.extend((0..m).map(|i| grid.x_of(i % grid.nx)));
    out.extend((0..m).map(|i| grid.z_of(i / grid.nx)));
    if layout != InputLayout::Basic {
        let (iz, ix) = source.ok_or_else(|| Error::InvalidArgument("layout needs a source".into()))?;
        if iz >= grid.nz || ix >= grid.nx {
            return Err(Error::OutOfDomain { x: grid.x_of(ix), z: grid.z_of(iz) });
        }
        let mut plane = vec![0.0; m];
        plane[grid.idx(iz, ix)] = 1.0;
        out.extend(plane);
    }
    if layout == InputLayout::Full {
        out.extend(std::iter::repeat_n(freq, m));
    }
    Ok(out)
}

/// Normalized `f32` input planes for one sample, appended to `out`.
pub fn push_normalized(out: &mut Vec<f32>, grid: &Grid, velocity: &[f32], layout: InputLayout, source: Option<(usize, usize)>, freq: f64, norm: &NormStats) -> Result<()> {
    let m = grid.len();
    if velocity.len() != m {
        return Err(Error::Shape("velocity does not match the grid".into()));
    }
    if norm.mean.len() != layout.channels() {
        return Err(Error::Shape(format!("normalization has {} channels, layout {}", norm.mean.len(), layout.channels())));
    }
    out.extend(velocity.iter().map(|&v| norm.apply(0, v as f64) as f32));
    out.extend((0..m).map(|i| norm.apply(1, grid.x_of(i % grid.nx)) as f32));
    out.extend((0..m).map(|i| norm.apply(2, grid.z_of(i / grid.nx)) as f32));
    if layout != InputLayout::Basic {
        let (iz, ix) = source.ok_or_else(|| Error::InvalidArgument("layout needs a source".into()))?;
        if iz >= grid.nz || ix >= grid.nx {
            return Err(Error::OutOfDomain { x: grid.x_of(ix), z: grid.z_of(iz) });
        }
        let start = out.len();
        out.extend(std::iter::repeat_n(0.0, m));
        out[start + grid.idx(iz, ix)] = 1.0;
    }
    if layout == InputLayout::Full {
        let f = norm.apply(4, freq) as f32;
        out.extend(std::iter::repeat_n(f, m));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coordinate_planes_on_3x3() {
        let g = Grid { nz: 3, nx: 3, dz: 100.0, dx: 100.0 };
        let planes = assemble_planes(&g, &[2000.0; 9], InputLayout::Basic, None, 0.0).unwrap();
        assert_eq!(&planes[9..18], &[0.0, 100.0, 200.0, 0.0, 100.0, 200.0, 0.0, 100.0, 200.0]);
        assert_eq!(&planes[18..27], &[0.0, 0.0, 0.0, 100.0, 100.0, 100.0, 200.0, 200.0, 200.0]);
    }

    #[test]
    fn source_one_hot_and_frequency_plane() {
        let g = Grid::openfwi();
        let v = VelocityModel::constant(g, 3000.0).unwrap();
        let p = assemble_input(&v, Some((1, 0)), Some(15.0)).unwrap();
        let m = g.len();
        let src = &p[3 * m..4 * m];
        assert_eq!(src.iter().filter(|&&x| x != 0.0).count(), 1);
        assert_eq!(src[g.idx(1, 0)], 1.0);
        assert!(p[4 * m..].iter().all(|&f| f == 15.0));
        assert!(assemble_input(&v, Some((1, 0)), None).is_err());
    }
}
