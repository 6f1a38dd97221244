//! Training loop, loss, schedule and evaluation metrics.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::{AdamW, AdamWConfig, Grads, ParamStore, Real, Tape, Tensor, Var};
use crate::dataset::Samples;
use crate::error::{Error, Result};
use crate::nn::forwardnet::update_running_stats;
use crate::nn::pfno::{merge_sub_store, sub_store};
use crate::nn::{forward_graph, infer, ModelConfig, ModelHandle};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    /// Batch mean of per-sample Euclidean misfit norms, real and imaginary
    /// parts averaged.
    L2,
    Mse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub decay: f64,
    pub decay_every: usize,
    pub adamw: AdamWConfig,
    pub loss: LossKind,
    /// Test MSE is recorded every this many epochs (and after the last).
    pub eval_every: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn full_scale(seed: u64) -> Self {
        Self { epochs: 600, batch_size: 16, lr: 0.0016, decay: 0.5, decay_every: 125, adamw: AdamWConfig::default(), loss: LossKind::L2, eval_every: 1, seed }
    }

    pub fn desk(seed: u64) -> Self {
        Self { epochs: 100, ..Self::full_scale(seed) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.decay_every == 0 || self.eval_every == 0 || !(self.lr > 0.0) || !(self.decay > 0.0) {
            return Err(Error::InvalidArgument(format!("invalid training config {self:?}")));
        }
        Ok(())
    }
}

/// `lr0 * decay^floor(epoch / decay_every)`.
pub fn lr_schedule(epoch: usize, cfg: &TrainConfig) -> f64 {
    cfg.lr * cfg.decay.powi((epoch / cfg.decay_every) as i32)
}

pub fn training_loss<T: Real>(tape: &mut Tape<'_, T>, pred: Var, label: Var, kind: LossKind) -> Result<Var> {
    match kind {
        LossKind::Mse => tape.mse(pred, label),
        LossKind::L2 => {
            let d = tape.sub(pred, label)?;
            if tape.shape(d).len() < 2 || tape.shape(d)[1] != 2 {
                return Err(Error::Shape(format!("loss expects [B, 2, ...], got {:?}", tape.shape(d))));
            }
            let re = tape.narrow(d, 1, 0, 1)?;
            let im = tape.narrow(d, 1, 1, 1)?;
            let nre = tape.l2norm(re)?;
            let nim = tape.l2norm(im)?;
            let s = tape.add(nre, nim)?;
            Ok(tape.scale(s, T::c(0.5)))
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    /// Mean training loss per epoch (normalized units).
    pub train_loss: Vec<f64>,
    /// `(epoch, test MSE)`; epoch 0 is the untrained model.
    pub test_mse: Vec<(usize, f64)>,
}

impl History {
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for l in &self.train_loss {
            h.update(l.to_le_bytes());
        }
        for (e, m) in &self.test_mse {
            h.update((*e as u64).to_le_bytes());
            h.update(m.to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn final_test_mse(&self) -> Option<f64> {
        self.test_mse.last().map(|t| t.1)
    }
}

/// Mean squared entrywise error, physical units, over both channels.
pub fn evaluate_mse(model: &ModelHandle, samples: &Samples) -> Result<f64> {
    eval_parts(&model.config, &model.params, &model.buffers, model.norm.label_scale, samples)
}

/// `MSE / mean |u|`.
pub fn relative_mse(mse: f64, mean_abs: f64) -> f64 {
    mse / mean_abs
}

const EVAL_CHUNK: usize = 64;

fn eval_parts(config: &ModelConfig, params: &ParamStore<f32>, buffers: &ParamStore<f32>, label_scale: f64, s: &Samples) -> Result<f64> {
    if s.is_empty() {
        return Err(Error::InvalidArgument("evaluation on an empty sample set".into()));
    }
    let (xl, yl) = (s.x_len(), s.y_len());
    let mut sum = 0.0;
    for start in (0..s.len()).step_by(EVAL_CHUNK) {
        let end = (start + EVAL_CHUNK).min(s.len());
        let b = end - start;
        let pred = infer(config, params, buffers, &s.x[start * xl..end * xl], [b, s.channels, s.h, s.w], &s.freqs[start..end])?;
        sum += pred
            .iter()
            .zip(&s.y[start * yl..end * yl])
            .map(|(p, y)| {
                let d = *p as f64 * label_scale - *y as f64;
                d * d
            })
            .sum::<f64>();
    }
    Ok(sum / (s.len() * yl) as f64)
}

/// State of one independently optimized network.
struct Fit<'c> {
    config: &'c ModelConfig,
    params: ParamStore<f32>,
    buffers: ParamStore<f32>,
    label_scale: f64,
    seed: u64,
}

enum FitError {
    Diverged { epoch: usize, params: ParamStore<f32>, buffers: ParamStore<f32> },
    Other(Error),
}

/// Frequency, train count, test count and outcome of one PFNO sub-model.
type SubModelFit = (f64, usize, usize, std::result::Result<(History, ParamStore<f32>), FitError>);

impl From<Error> for FitError {
    fn from(e: Error) -> Self {
        FitError::Other(e)
    }
}

impl Fit<'_> {
    fn run(&mut self, train: &Samples, test: Option<&Samples>, cfg: &TrainConfig) -> std::result::Result<History, FitError> {
        if train.is_empty() {
            return Err(Error::InvalidArgument("training on an empty sample set".into()).into());
        }
        if train.channels != self.config.in_channels() {
            return Err(Error::Shape(format!("samples have {} channels, model expects {}", train.channels, self.config.in_channels())).into());
        }
        let mut hist = History::default();
        if let Some(t) = test {
            hist.test_mse.push((0, eval_parts(self.config, &self.params, &self.buffers, self.label_scale, t)?));
        }
        let mut opt = AdamW::new(&self.params, cfg.adamw);
        let inv_scale = (1.0 / self.label_scale) as f32;
        let mut order: Vec<usize> = (0..train.len()).collect();
        for epoch in 0..cfg.epochs {
            let lr = lr_schedule(epoch, cfg);
            let snapshot = (self.params.clone(), self.buffers.clone());
            let mut r = rng::substream(self.seed, rng::SHUFFLE, epoch as u64);
            order.sort_unstable();
            order.shuffle(&mut r);
            let (mut total, mut count) = (0.0, 0usize);
            for idx in order.chunks(cfg.batch_size) {
                let (x, mut y, freqs) = train.gather(idx);
                y.iter_mut().for_each(|v| *v *= inv_scale);
                let b = idx.len();
                let (loss, grads, stats) = {
                    let mut tape = Tape::new();
                    let vars = self.params.bind(&mut tape);
                    let xv = tape.constant(Tensor::new(vec![b, train.channels, train.h, train.w], x)?);
                    let yv = tape.constant(Tensor::new(vec![b, 2, train.h, train.w], y)?);
                    let out = forward_graph(&mut tape, self.config, &self.params, &vars, None, xv, &freqs)?;
                    let loss = training_loss(&mut tape, out.out, yv, cfg.loss)?;
                    let lv = tape.value(loss)[0] as f64;
                    if !lv.is_finite() {
                        let (params, buffers) = snapshot;
                        return Err(FitError::Diverged { epoch, params, buffers });
                    }
                    let mut g = Grads::new();
                    tape.backward(loss, &mut g)?;
                    (lv, self.params.collect_grads(&vars, &g), out.stats)
                };
                opt.step(&mut self.params, &grads, lr)?;
                update_running_stats(&mut self.buffers, &stats)?;
                total += loss * b as f64;
                count += b;
            }
            hist.train_loss.push(total / count as f64);
            let e = epoch + 1;
            if let Some(t) = test {
                if e % cfg.eval_every == 0 || e == cfg.epochs {
                    let m = eval_parts(self.config, &self.params, &self.buffers, self.label_scale, t)?;
                    if !m.is_finite() {
                        let (params, buffers) = snapshot;
                        return Err(FitError::Diverged { epoch, params, buffers });
                    }
                    hist.test_mse.push((e, m));
                }
            }
        }
        Ok(hist)
    }
}

/// Trains `model` in place. On divergence the error carries the last
/// finite state.
pub fn train(model: &mut ModelHandle, train: &Samples, test: Option<&Samples>, cfg: &TrainConfig) -> Result<History> {
    train_with(model, train, test, cfg, |_, _| {})
}

/// Like [`train`] with a per-epoch callback `(epoch, train loss)` (not
/// called for PFNO, whose sub-models train concurrently).
pub fn train_with(model: &mut ModelHandle, train: &Samples, test: Option<&Samples>, cfg: &TrainConfig, mut progress: impl FnMut(usize, f64)) -> Result<History> {
    cfg.validate()?;
    let hist = match model.config.clone() {
        ModelConfig::Pfno(pc) => train_pfno(model, &pc, train, test, cfg)?,
        config => {
            let mut fit = Fit { config: &config, params: model.params.clone(), buffers: model.buffers.clone(), label_scale: model.norm.label_scale, seed: cfg.seed };
            match fit.run(train, test, cfg) {
                Ok(h) => {
                    h.train_loss.iter().enumerate().for_each(|(e, l)| progress(e + 1, *l));
                    model.params = fit.params;
                    model.buffers = fit.buffers;
                    h
                }
                Err(FitError::Other(e)) => return Err(e),
                Err(FitError::Diverged { epoch, params, buffers }) => {
                    let mut last = model.clone();
                    last.params = params;
                    last.buffers = buffers;
                    return Err(Error::Diverged { epoch, last_finite: Box::new(last) });
                }
            }
        }
    };
    model.history_digest = hist.digest();
    Ok(hist)
}

fn train_pfno(model: &mut ModelHandle, pc: &crate::nn::PfnoConfig, train: &Samples, test: Option<&Samples>, cfg: &TrainConfig) -> Result<History> {
    let drop_freq = !pc.keep_frequency && train.channels == 5;
    let prep = |s: &Samples, f: f64| {
        let sub = s.at_frequency(f);
        if drop_freq {
            sub.drop_channel(4)
        } else {
            sub
        }
    };
    let results: Vec<SubModelFit> = pc
        .freqs
        .par_iter()
        .enumerate()
        .map(|(i, &f)| {
            let run = || -> std::result::Result<(History, ParamStore<f32>, usize, usize), FitError> {
                let sub_cfg = ModelConfig::Fno(pc.sub_config(f)?);
                let tr = prep(train, f);
                let te = test.map(|t| prep(t, f));
                let mut fit = Fit {
                    config: &sub_cfg,
                    params: sub_store(&model.params, f),
                    buffers: ParamStore::new(),
                    label_scale: model.norm.label_scale,
                    seed: rng::derive_seed(cfg.seed, "pfno", i as u64),
                };
                let h = fit.run(&tr, te.as_ref(), cfg)?;
                Ok((h, fit.params, tr.len(), te.map_or(0, |t| t.len())))
            };
            match run() {
                Ok((h, p, ntr, nte)) => (f, ntr, nte, Ok((h, p))),
                Err(e) => (f, 0, 0, Err(e)),
            }
        })
        .collect();
    let mut merged = History::default();
    let (mut ntr_total, mut nte_total) = (0usize, 0usize);
    let mut diverged = None;
    for (f, ntr, nte, r) in results {
        match r {
            Ok((h, p)) => {
                merge_sub_store(&mut model.params, f, &p)?;
                if merged.train_loss.is_empty() {
                    merged.train_loss = vec![0.0; h.train_loss.len()];
                    merged.test_mse = h.test_mse.iter().map(|&(e, _)| (e, 0.0)).collect();
                }
                for (a, b) in merged.train_loss.iter_mut().zip(&h.train_loss) {
                    *a += b * ntr as f64;
                }
                for (a, b) in merged.test_mse.iter_mut().zip(&h.test_mse) {
                    a.1 += b.1 * nte as f64;
                }
                ntr_total += ntr;
                nte_total += nte;
            }
            Err(FitError::Other(e)) => return Err(e),
            Err(FitError::Diverged { epoch, params, .. }) => {
                merge_sub_store(&mut model.params, f, &params)?;
                diverged = Some(diverged.map_or(epoch, |d: usize| d.min(epoch)));
            }
        }
    }
    if let Some(epoch) = diverged {
        return Err(Error::Diverged { epoch, last_finite: Box::new(model.clone()) });
    }
    merged.train_loss.iter_mut().for_each(|l| *l /= ntr_total.max(1) as f64);
    merged.test_mse.iter_mut().for_each(|t| t.1 /= nte_total.max(1) as f64);
    Ok(merged)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_steps() {
        let c = TrainConfig::full_scale(0);
        assert_eq!(lr_schedule(0, &c), 0.0016);
        assert_eq!(lr_schedule(124, &c), 0.0016);
        assert_eq!(lr_schedule(125, &c), 0.0008);
        assert!((lr_schedule(600, &c) - 0.0001).abs() < 1e-18);
    }

    #[test]
    fn l2_loss_averages_parts() {
        let mut tape = Tape::<f64>::new();
        // one sample, 2 channels of 1x2: real misfit (0, 2), imaginary (4, 0)
        let pred = tape.constant(Tensor::new(vec![1, 2, 1, 2], vec![0.0, 2.0, 4.0, 0.0]).unwrap());
        let label = tape.constant(Tensor::zeros(&[1, 2, 1, 2]));
        let l = training_loss(&mut tape, pred, label, LossKind::L2).unwrap();
        assert_eq!(tape.value(l), &[3.0]);
        let z = training_loss(&mut tape, label, label, LossKind::L2).unwrap();
        assert_eq!(tape.value(z), &[0.0]);
    }

    #[test]
    fn relative_mse_is_a_ratio() {
        assert!((relative_mse(2e-4, 0.05) - 4e-3).abs() < 1e-15);
    }
}
