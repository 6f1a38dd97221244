use serde::{Deserialize, Serialize};

use super::param::ParamStore;
use super::Real;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 1e-4 }
    }
}

/// AdamW with decoupled weight decay, applied before the Adam update.
#[derive(Debug, Clone)]
pub struct AdamW<T> {
    pub config: AdamWConfig,
    pub step: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Real> AdamW<T> {
    pub fn new(params: &ParamStore<T>, config: AdamWConfig) -> Self {
        Self {
            config,
            step: 0,
            m: params.params.iter().map(|p| vec![T::zero(); p.data.len()]).collect(),
            v: params.params.iter().map(|p| vec![T::zero(); p.data.len()]).collect(),
        }
    }

    /// One update with learning rate `lr`; `grads` is in store order.
    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &[Option<Vec<T>>], lr: f64) -> Result<()> {
        if grads.len() != params.len() || self.m.len() != params.len() {
            return Err(Error::Shape("gradient list does not match the parameter store".into()));
        }
        if let Some(i) = grads.iter().position(|g| g.is_none()) {
            return Err(Error::MissingGradient(params.params[i].name.clone()));
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let (b1, b2) = (T::c(c.beta1), T::c(c.beta2));
        let (ob1, ob2) = (T::c(1.0 - c.beta1), T::c(1.0 - c.beta2));
        let decay = T::c(1.0 - lr * c.weight_decay);
        let step_size = T::c(lr / bc1);
        let inv_bc2 = T::c(1.0 / bc2.sqrt());
        let eps = T::c(c.eps);
        for ((p, g), (m, v)) in params.params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            let g = g.as_ref().expect("checked above");
            if g.len() != p.data.len() {
                return Err(Error::Shape(format!("gradient of `{}` has the wrong length", p.name)));
            }
            for i in 0..p.data.len() {
                p.data[i] = p.data[i] * decay;
                m[i] = b1 * m[i] + ob1 * g[i];
                v[i] = b2 * v[i] + ob2 * g[i] * g[i];
                p.data[i] = p.data[i] - step_size * m[i] / (v[i].sqrt() * inv_bc2 + eps);
            }
        }
        Ok(())
    }
}
