//! Parallel FNO: one independent FNO per frequency.

use serde::{Deserialize, Serialize};

use super::fno::{fno_forward, init_fno, Activation, FnoConfig};
use crate::autodiff::{ParamStore, Real, Tape, Var};
use crate::error::{Error, Result};
use crate::rng;

/// Half-open bands `[lo, hi)` mapped to widths; the last band is closed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WidthRule {
    pub bands: Vec<(f64, f64, usize)>,
}

impl Default for WidthRule {
    fn default() -> Self {
        Self { bands: vec![(1.0, 16.0, 32), (16.0, 26.0, 64), (26.0, 30.0, 96)] }
    }
}

impl WidthRule {
    /// Same bands with every width multiplied by `factor` (at least 1).
    pub fn scaled(&self, factor: f64) -> Self {
        Self { bands: self.bands.iter().map(|&(lo, hi, w)| (lo, hi, ((w as f64 * factor).round() as usize).max(1))).collect() }
    }

    pub fn width_for_frequency(&self, f: f64) -> Result<usize> {
        let n = self.bands.len();
        for (i, &(lo, hi, w)) in self.bands.iter().enumerate() {
            let inside = if i + 1 == n { f >= lo && f <= hi } else { f >= lo && f < hi };
            if inside {
                return Ok(w);
            }
        }
        Err(Error::FrequencyOutOfBand(f))
    }
}

pub fn width_for_frequency(f: f64) -> Result<usize> {
    WidthRule::default().width_for_frequency(f)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PfnoConfig {
    pub freqs: Vec<f64>,
    pub rule: WidthRule,
    /// Keep the (constant) frequency channel in each sub-model's input.
    pub keep_frequency: bool,
    pub layers: usize,
    pub modes: usize,
    pub head_width: usize,
    pub activation: Activation,
}

impl PfnoConfig {
    pub fn new(freqs: Vec<f64>) -> Self {
        Self { freqs, rule: WidthRule::default(), keep_frequency: false, layers: 4, modes: 12, head_width: 128, activation: Activation::Gelu }
    }

    pub fn in_channels(&self) -> usize {
        if self.keep_frequency {
            5
        } else {
            4
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.freqs.is_empty() {
            return Err(Error::InvalidArgument("PFNO needs at least one frequency".into()));
        }
        for (i, f) in self.freqs.iter().enumerate() {
            if self.freqs[..i].contains(f) {
                return Err(Error::DuplicateFrequency(*f));
            }
            self.rule.width_for_frequency(*f)?;
        }
        Ok(())
    }

    pub fn prefix(freq: f64) -> String {
        format!("f{freq}.")
    }

    pub fn position(&self, freq: f64) -> Result<usize> {
        self.freqs.iter().position(|&f| f == freq).ok_or(Error::UnknownFrequency(freq))
    }

    pub fn sub_config(&self, freq: f64) -> Result<FnoConfig> {
        self.position(freq)?;
        Ok(FnoConfig {
            layers: self.layers,
            modes: self.modes,
            width: self.rule.width_for_frequency(freq)?,
            in_channels: self.in_channels(),
            out_channels: 2,
            head_width: self.head_width,
            activation: self.activation,
        })
    }

    pub fn param_count(&self) -> Result<usize> {
        self.freqs.iter().map(|&f| self.sub_config(f).map(|c| c.param_count())).sum()
    }
}

pub fn init_pfno<T: Real>(cfg: &PfnoConfig, seed: u64) -> Result<ParamStore<T>> {
    cfg.validate()?;
    let mut all = ParamStore::new();
    for (i, &f) in cfg.freqs.iter().enumerate() {
        let sub = init_fno::<T>(&cfg.sub_config(f)?, rng::derive_seed(seed, "pfno", i as u64), &PfnoConfig::prefix(f));
        all.params.extend(sub.params);
    }
    Ok(all)
}

/// Parameters of one sub-model with the prefix removed.
pub fn sub_store<T: Real>(all: &ParamStore<T>, freq: f64) -> ParamStore<T> {
    let prefix = PfnoConfig::prefix(freq);
    let mut s = ParamStore::new();
    for p in &all.params {
        if let Some(rest) = p.name.strip_prefix(&prefix) {
            s.push(rest, &p.shape, p.data.clone());
        }
    }
    s
}

/// Writes a sub-model's parameters back under its prefix.
pub fn merge_sub_store<T: Real>(all: &mut ParamStore<T>, freq: f64, sub: &ParamStore<T>) -> Result<()> {
    let prefix = PfnoConfig::prefix(freq);
    for p in &sub.params {
        let name = format!("{prefix}{}", p.name);
        let dst = all.get_mut(&name).ok_or(Error::MissingParameter(name))?;
        dst.data.clone_from(&p.data);
    }
    Ok(())
}

/// Routes each sample to its frequency's FNO. `x` is `[B, C, H, W]` with
/// `C = cfg.in_channels()`; the output keeps the batch order.
pub fn pfno_forward<T: Real>(tape: &mut Tape<'_, T>, cfg: &PfnoConfig, store: &ParamStore<T>, vars: &[Var], x: Var, freqs: &[f64]) -> Result<Var> {
    let xs = tape.shape(x).to_vec();
    if xs.len() != 4 || xs[0] != freqs.len() {
        return Err(Error::Shape(format!("PFNO input {xs:?} with {} frequencies", freqs.len())));
    }
    let (h, w) = (xs[2], xs[3]);
    let mut outs: Vec<Option<Var>> = vec![None; freqs.len()];
    for &f in &cfg.freqs {
        let idx: Vec<usize> = (0..freqs.len()).filter(|&i| freqs[i] == f).collect();
        if idx.is_empty() {
            continue;
        }
        let sub_cfg = cfg.sub_config(f)?;
        let parts: Vec<Var> = idx.iter().map(|&i| tape.narrow(x, 0, i, 1)).collect::<Result<_>>()?;
        let group = concat_batch(tape, &parts)?;
        let y = fno_forward(tape, &sub_cfg, store, vars, group, &PfnoConfig::prefix(f))?;
        for (k, &i) in idx.iter().enumerate() {
            outs[i] = Some(tape.narrow(y, 0, k, 1)?);
        }
    }
    let outs: Vec<Var> = outs
        .into_iter()
        .zip(freqs)
        .map(|(o, f)| o.ok_or(Error::UnknownFrequency(*f)))
        .collect::<Result<_>>()?;
    let y = concat_batch(tape, &outs)?;
    debug_assert_eq!(tape.shape(y), &[freqs.len(), 2, h, w]);
    Ok(y)
}

/// Concatenates `[1, ...]` tensors along the batch axis.
fn concat_batch<T: Real>(tape: &mut Tape<'_, T>, parts: &[Var]) -> Result<Var> {
    if parts.len() == 1 {
        return Ok(parts[0]);
    }
    let inner = tape.shape(parts[0])[1..].to_vec();
    let mut data = Vec::new();
    for &p in parts {
        if tape.shape(p)[1..] != inner[..] {
            return Err(Error::Shape("concat of mismatched samples".into()));
        }
        data.extend_from_slice(tape.value(p));
    }
    let per: usize = inner.iter().product();
    let mut shape = vec![parts.len()];
    shape.extend(inner);
    Ok(tape.push_op(
        data,
        shape,
        parts.to_vec(),
        Box::new(move |ctx, g| g.chunks(per).zip(&ctx.needs).map(|(c, &n)| n.then(|| c.to_vec())).collect()),
    ))
}
