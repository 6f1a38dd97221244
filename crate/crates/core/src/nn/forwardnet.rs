//! Convolutional encoder-decoder baseline on a fixed 70x70 grid.

use serde::{Deserialize, Serialize};

use super::fno::Lookup;
use crate::autodiff::{conv_out, BatchStats, ParamStore, Real, Tape, Var};
use crate::error::{Error, Result};
use crate::rng;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForwardNetConfig {
    /// Channels after the first encoder block; later blocks use multiples of it.
    pub base: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub slope: f64,
}

impl Default for ForwardNetConfig {
    fn default() -> Self {
        Self { base: 32, in_channels: 3, out_channels: 2, slope: 0.2 }
    }
}

pub const INPUT_SIZE: usize = 70;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layer {
    /// Optional nearest upsampling by `scale`, then a 3x3 convolution.
    Conv { cin: usize, cout: usize, stride: usize, pad: usize, scale: usize, norm: bool },
    Crop { size: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRow {
    pub name: String,
    pub in_channels: usize,
    pub out_channels: usize,
    pub in_size: usize,
    pub out_size: usize,
}

impl ForwardNetConfig {
    fn widths(&self) -> [usize; 5] {
        let b = self.base;
        [b, 2 * b, 4 * b, 8 * b, 16 * b]
    }

    pub fn latent_channels(&self) -> usize {
        16 * self.base
    }

    pub fn encoder(&self) -> Vec<Layer> {
        let w = self.widths();
        let mut out = Vec::with_capacity(11);
        let mut cin = self.in_channels;
        for &c in &w {
            out.push(Layer::Conv { cin, cout: c, stride: 2, pad: 1, scale: 1, norm: true });
            out.push(Layer::Conv { cin: c, cout: c, stride: 1, pad: 1, scale: 1, norm: true });
            cin = c;
        }
        out.push(Layer::Conv { cin, cout: cin, stride: 2, pad: 0, scale: 1, norm: true });
        out
    }

    pub fn decoder(&self) -> Vec<Layer> {
        let w = self.widths();
        let mut out = Vec::with_capacity(12);
        let mut cin = w[4];
        for (i, &c) in w.iter().rev().enumerate() {
            let scale = if i == 0 { 5 } else { 2 };
            out.push(Layer::Conv { cin, cout: c, stride: 1, pad: 1, scale, norm: true });
            out.push(Layer::Conv { cin: c, cout: c, stride: 1, pad: 1, scale: 1, norm: true });
            cin = c;
        }
        out.push(Layer::Crop { size: INPUT_SIZE });
        out.push(Layer::Conv { cin, cout: self.out_channels, stride: 1, pad: 1, scale: 1, norm: false });
        out
    }

    fn named_layers(&self) -> Vec<(String, Layer)> {
        let enc = self.encoder().into_iter().enumerate().map(|(i, l)| (format!("enc{i}"), l));
        let dec = self.decoder().into_iter().enumerate().map(|(i, l)| (format!("dec{i}"), l));
        enc.chain(dec).collect()
    }

    /// Layer-by-layer shapes for a square input of `size`.
    pub fn shape_trace(&self, size: usize) -> Result<Vec<TraceRow>> {
        let mut s = size;
        let mut rows = Vec::new();
        let mut c = self.in_channels;
        for (name, l) in self.named_layers() {
            let (cin, cout, out) = match l {
                Layer::Conv { cin, cout, stride, pad, scale, .. } => (cin, cout, conv_out(s * scale, 3, stride, pad)?),
                Layer::Crop { size } => {
                    if size > s {
                        return Err(Error::Shape(format!("cannot crop {s} to {size}")));
                    }
                    (c, c, size)
                }
            };
            rows.push(TraceRow { name, in_channels: cin, out_channels: cout, in_size: s, out_size: out });
            s = out;
            c = cout;
        }
        Ok(rows)
    }

    pub fn validate(&self) -> Result<()> {
        if self.base == 0 || self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::InvalidArgument(format!("degenerate ForwardNet config {self:?}")));
        }
        let trace = self.shape_trace(INPUT_SIZE)?;
        if trace[10].out_size != 1 || trace.last().map(|r| r.out_size) != Some(INPUT_SIZE) {
            return Err(Error::InvalidArgument("ForwardNet tables do not close on 70x70".into()));
        }
        Ok(())
    }
}

/// Trainable parameters and running batch-norm statistics.
pub fn init_forwardnet<T: Real>(cfg: &ForwardNetConfig, seed: u64) -> (ParamStore<T>, ParamStore<T>) {
    let mut r = rng::substream(seed, rng::INIT, 0);
    let mut p = ParamStore::new();
    let mut buffers = ParamStore::new();
    for (name, l) in cfg.named_layers() {
        if let Layer::Conv { cin, cout, norm, .. } = l {
            let bound = 1.0 / ((cin * 9) as f64).sqrt();
            p.uniform(format!("{name}.w"), &[cout, cin, 3, 3], bound, &mut r);
            p.uniform(format!("{name}.b"), &[cout], bound, &mut r);
            if norm {
                p.ones(format!("{name}.bn.gamma"), &[cout]);
                p.zeros(format!("{name}.bn.beta"), &[cout]);
                buffers.zeros(format!("{name}.bn.mean"), &[cout]);
                buffers.ones(format!("{name}.bn.var"), &[cout]);
            }
        }
    }
    (p, buffers)
}

/// Output plus the batch statistics of every normalized layer (train mode only).
pub struct ForwardOutput<T> {
    pub out: Var,
    pub stats: Vec<(String, BatchStats<T>)>,
}

/// `buffers = None` runs in training mode with batch statistics.
pub fn forwardnet_forward<T: Real>(
    tape: &mut Tape<'_, T>,
    cfg: &ForwardNetConfig,
    store: &ParamStore<T>,
    vars: &[Var],
    buffers: Option<&ParamStore<T>>,
    x: Var,
) -> Result<ForwardOutput<T>> {
    let xs = tape.shape(x).to_vec();
    if xs.len() != 4 || xs[1] != cfg.in_channels || xs[2] != INPUT_SIZE || xs[3] != INPUT_SIZE {
        return Err(Error::Shape(format!("ForwardNet expects [B, {}, 70, 70], got {xs:?}", cfg.in_channels)));
    }
    let p = Lookup { store, vars, prefix: "" };
    let slope = T::c(cfg.slope);
    let eps = T::c(BN_EPS);
    let mut h = x;
    let mut stats = Vec::new();
    for (name, l) in cfg.named_layers() {
        match l {
            Layer::Crop { size } => h = tape.crop_center(h, size, size)?,
            Layer::Conv { stride, pad, scale, norm, .. } => {
                if scale > 1 {
                    h = tape.upsample_nearest(h, scale)?;
                }
                h = tape.conv2d(h, p.get(&format!("{name}.w"))?, Some(p.get(&format!("{name}.b"))?), stride, pad)?;
                if norm {
                    let (g, b) = (p.get(&format!("{name}.bn.gamma"))?, p.get(&format!("{name}.bn.beta"))?);
                    h = match buffers {
                        Some(buf) => {
                            let get = |k: &str| buf.get(&format!("{name}.bn.{k}")).ok_or_else(|| Error::MissingParameter(format!("{name}.bn.{k}")));
                            tape.batchnorm2d_eval(h, g, b, &get("mean")?.data, &get("var")?.data, eps)?
                        }
                        None => {
                            let (y, s) = tape.batchnorm2d_train(h, g, b, eps)?;
                            stats.push((name.clone(), s));
                            y
                        }
                    };
                    h = tape.leaky_relu(h, slope);
                }
            }
        }
    }
    Ok(ForwardOutput { out: h, stats })
}

/// Exponential moving update of running statistics; variance is unbiased.
pub fn update_running_stats<T: Real>(buffers: &mut ParamStore<T>, stats: &[(String, BatchStats<T>)]) -> Result<()> {
    let m = T::c(BN_MOMENTUM);
    let keep = T::one() - m;
    for (name, s) in stats {
        let unbias = if s.count > 1 { T::c(s.count as f64 / (s.count - 1) as f64) } else { T::one() };
        let mean = buffers.get_mut(&format!("{name}.bn.mean")).ok_or_else(|| Error::MissingParameter(format!("{name}.bn.mean")))?;
        for (r, b) in mean.data.iter_mut().zip(&s.mean) {
            *r = keep * *r + m * *b;
        }
        let var = buffers.get_mut(&format!("{name}.bn.var")).ok_or_else(|| Error::MissingParameter(format!("{name}.bn.var")))?;
        for (r, b) in var.data.iter_mut().zip(&s.var) {
            *r = keep * *r + m * *b * unbias;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_matches_tables() {
        let cfg = ForwardNetConfig::default();
        let t = cfg.shape_trace(70).unwrap();
        let enc: Vec<_> = t.iter().take(11).map(|r| (r.in_channels, r.out_channels, r.in_size, r.out_size)).collect();
        assert_eq!(
            enc,
            vec![
                (3, 32, 70, 35),
                (32, 32, 35, 35),
                (32, 64, 35, 18),
                (64, 64, 18, 18),
                (64, 128, 18, 9),
                (128, 128, 9, 9),
                (128, 256, 9, 5),
                (256, 256, 5, 5),
                (256, 512, 5, 3),
                (512, 512, 3, 3),
                (512, 512, 3, 1),
            ]
        );
        let dec: Vec<_> = t.iter().skip(11).map(|r| (r.in_channels, r.out_channels, r.in_size, r.out_size)).collect();
        assert_eq!(
            dec,
            vec![
                (512, 512, 1, 5),
                (512, 512, 5, 5),
                (512, 256, 5, 10),
                (256, 256, 10, 10),
                (256, 128, 10, 20),
                (128, 128, 20, 20),
                (128, 64, 20, 40),
                (64, 64, 40, 40),
                (64, 32, 40, 80),
                (32, 32, 80, 80),
                (32, 32, 80, 70),
                (32, 2, 70, 70),
            ]
        );
        cfg.validate().unwrap();
    }

    #[test]
    fn small_net_runs_in_both_modes() {
        let cfg = ForwardNetConfig { base: 2, ..Default::default() };
        let (store, mut buffers) = init_forwardnet::<f32>(&cfg, 5);
        let mut tape = Tape::new();
        let vars = store.bind(&mut tape);
        let x = tape.constant(crate::autodiff::Tensor::new(vec![2, 3, 70, 70], (0..2 * 3 * 4900).map(|i| (i as f32 * 0.013).sin()).collect()).unwrap());
        let o = forwardnet_forward(&mut tape, &cfg, &store, &vars, None, x).unwrap();
        assert_eq!(tape.shape(o.out), &[2, 2, 70, 70]);
        assert_eq!(o.stats.len(), 21);
        update_running_stats(&mut buffers, &o.stats).unwrap();
        let e = forwardnet_forward(&mut tape, &cfg, &store, &vars, Some(&buffers), x).unwrap();
        assert!(tape.value(e.out).iter().all(|v| v.is_finite()));
    }

    #[test]
    fn rejects_other_sizes() {
        let cfg = ForwardNetConfig { base: 1, ..Default::default() };
        let (store, _) = init_forwardnet::<f32>(&cfg, 1);
        let mut tape = Tape::new();
        let vars = store.bind(&mut tape);
        let x = tape.constant(crate::autodiff::Tensor::zeros(&[1, 3, 64, 64]));
        assert!(forwardnet_forward(&mut tape, &cfg, &store, &vars, None, x).is_err());
    }
}
