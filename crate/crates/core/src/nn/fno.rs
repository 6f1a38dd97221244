//! Fourier neural operator: lifting, Fourier layers `act(W h + K h)` and a
//! two-layer pointwise head.

use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamStore, Real, Tape, Var};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Gelu,
    Identity,
}

impl Activation {
    pub fn apply<T: Real>(&self, tape: &mut Tape<'_, T>, x: Var) -> Var {
        match self {
            Activation::Gelu => tape.gelu(x),
            Activation::Identity => x,
        }
    }
}

/// How the spectral branch is evaluated. Both give the same map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectralRoute {
    /// Truncated DFT matrices, only kept modes are touched.
    Fused,
    /// Full `rfft2`, mode contraction, `irfft2`.
    Fft,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FnoConfig {
    pub layers: usize,
    /// Retained modes per axis.
    pub modes: usize,
    pub width: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    /// Hidden width of the projection head.
    pub head_width: usize,
    pub activation: Activation,
}

impl FnoConfig {
    pub fn new(width: usize, in_channels: usize) -> Self {
        Self { layers: 4, modes: 12, width, in_channels, out_channels: 2, head_width: 128, activation: Activation::Gelu }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.modes == 0 || self.in_channels == 0 || self.out_channels == 0 || self.head_width == 0 {
            return Err(Error::InvalidArgument(format!("degenerate FNO config {self:?}")));
        }
        Ok(())
    }

    /// Checks that the retained modes fit an `h x w` grid.
    pub fn validate_grid(&self, h: usize, w: usize) -> Result<()> {
        if self.modes > h.div_ceil(2) || self.modes > w.div_ceil(2) || 2 * self.modes > h || self.modes > w / 2 + 1 {
            return Err(Error::InvalidArgument(format!("{} modes do not fit a {h}x{w} grid", self.modes)));
        }
        Ok(())
    }

    /// Closed-form parameter count.
    pub fn param_count(&self) -> usize {
        let (w, m) = (self.width, self.modes);
        let lift = self.in_channels * w + w;
        let layer = 2 * (2 * m * m * w * w) + w * w + w;
        let head = w * self.head_width + self.head_width + self.head_width * self.out_channels + self.out_channels;
        lift + self.layers * layer + head
    }
}

/// Fan-in uniform bound of a dense layer.
fn fan_in_bound(fan_in: usize) -> f64 {
    1.0 / (fan_in as f64).sqrt()
}

/// Fresh parameters; names are prefixed with `prefix`.
pub fn init_fno<T: Real>(cfg: &FnoConfig, seed: u64, prefix: &str) -> ParamStore<T> {
    let mut r = rng::substream(seed, rng::INIT, 0);
    let mut s = ParamStore::new();
    let (w, m) = (cfg.width, cfg.modes);
    let b = fan_in_bound(cfg.in_channels);
    s.uniform(format!("{prefix}lift.w"), &[cfg.in_channels, w], b, &mut r);
    s.uniform(format!("{prefix}lift.b"), &[w], b, &mut r);
    let spec_scale = 1.0 / (w * w) as f64;
    for l in 0..cfg.layers {
        s.scaled_unit(format!("{prefix}layer{l}.spec.re"), &[2, m, m, w, w], spec_scale, &mut r);
        s.scaled_unit(format!("{prefix}layer{l}.spec.im"), &[2, m, m, w, w], spec_scale, &mut r);
        let b = fan_in_bound(w);
        s.uniform(format!("{prefix}layer{l}.w"), &[w, w], b, &mut r);
        s.uniform(format!("{prefix}layer{l}.b"), &[w], b, &mut r);
    }
    let b = fan_in_bound(w);
    s.uniform(format!("{prefix}head.fc1.w"), &[w, cfg.head_width], b, &mut r);
    s.uniform(format!("{prefix}head.fc1.b"), &[cfg.head_width], b, &mut r);
    let b = fan_in_bound(cfg.head_width);
    s.uniform(format!("{prefix}head.fc2.w"), &[cfg.head_width, cfg.out_channels], b, &mut r);
    s.uniform(format!("{prefix}head.fc2.b"), &[cfg.out_channels], b, &mut r);
    s
}

/// Resolves named parameters to bound tape variables.
pub(crate) struct Lookup<'p, T> {
    pub store: &'p ParamStore<T>,
    pub vars: &'p [Var],
    pub prefix: &'p str,
}

impl<T: Real> Lookup<'_, T> {
    pub fn get(&self, name: &str) -> Result<Var> {
        let full = format!("{}{name}", self.prefix);
        self.store.index(&full).map(|i| self.vars[i]).ok_or(Error::MissingParameter(full))
    }
}

/// Spectral branch `K h` of one layer.
pub fn spectral_path<T: Real>(tape: &mut Tape<'_, T>, h: Var, re: Var, im: Var, route: SpectralRoute) -> Result<Var> {
    match route {
        SpectralRoute::Fused => tape.spectral_conv(h, re, im),
        SpectralRoute::Fft => {
            let w = tape.shape(h)[3];
            let spec = tape.rfft2(h)?;
            let mixed = tape.mode_multiply(spec, re, im)?;
            tape.irfft2(mixed, w)
        }
    }
}

/// `act(channel_mix(h, W, b) + K h)`.
#[allow(clippy::too_many_arguments)]
pub fn fourier_layer<T: Real>(tape: &mut Tape<'_, T>, h: Var, re: Var, im: Var, w: Var, b: Var, act: Activation, route: SpectralRoute) -> Result<Var> {
    let bypass = tape.channel_mix(h, w, Some(b))?;
    let k = spectral_path(tape, h, re, im, route)?;
    let sum = tape.add(bypass, k)?;
    Ok(act.apply(tape, sum))
}

pub fn fno_forward<T: Real>(tape: &mut Tape<'_, T>, cfg: &FnoConfig, store: &ParamStore<T>, vars: &[Var], x: Var, prefix: &str) -> Result<Var> {
    fno_forward_route(tape, cfg, store, vars, x, prefix, SpectralRoute::Fused)
}

pub fn fno_forward_route<T: Real>(
    tape: &mut Tape<'_, T>,
    cfg: &FnoConfig,
    store: &ParamStore<T>,
    vars: &[Var],
    x: Var,
    prefix: &str,
    route: SpectralRoute,
) -> Result<Var> {
    let xs = tape.shape(x).to_vec();
    if xs.len() != 4 || xs[1] != cfg.in_channels {
        return Err(Error::Shape(format!("FNO expects [B, {}, H, W], got {xs:?}", cfg.in_channels)));
    }
    cfg.validate_grid(xs[2], xs[3])?;
    let p = Lookup { store, vars, prefix };
    let mut h = tape.channel_mix(x, p.get("lift.w")?, Some(p.get("lift.b")?))?;
    for l in 0..cfg.layers {
        let act = if l + 1 == cfg.layers { Activation::Identity } else { cfg.activation };
        h = fourier_layer(
            tape,
            h,
            p.get(&format!("layer{l}.spec.re"))?,
            p.get(&format!("layer{l}.spec.im"))?,
            p.get(&format!("layer{l}.w"))?,
            p.get(&format!("layer{l}.b"))?,
            act,
            route,
        )?;
    }
    let h = tape.channel_mix(h, p.get("head.fc1.w")?, Some(p.get("head.fc1.b")?))?;
    let h = cfg.activation.apply(tape, h);
    tape.channel_mix(h, p.get("head.fc2.w")?, Some(p.get("head.fc2.b")?))
}
