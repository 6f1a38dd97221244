use rand::Rng as _;

use super::tape::{Grads, Tape, Tensor, Var};
use super::Real;
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    /// Stable name used in checkpoints.
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

/// Ordered set of named trainable tensors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore<T> {
    pub params: Vec<Param<T>>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self { params: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total scalar count.
    pub fn count(&self) -> usize {
        self.params.iter().map(|p| p.data.len()).sum()
    }

    pub fn push(&mut self, name: impl Into<String>, shape: &[usize], data: Vec<T>) -> usize {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.params.push(Param { name: name.into(), shape: shape.to_vec(), data });
        self.params.len() - 1
    }

    pub fn zeros(&mut self, name: impl Into<String>, shape: &[usize]) -> usize {
        self.push(name, shape, vec![T::zero(); shape.iter().product()])
    }

    pub fn ones(&mut self, name: impl Into<String>, shape: &[usize]) -> usize {
        self.push(name, shape, vec![T::one(); shape.iter().product()])
    }

    /// Uniform in `[-bound, bound]`.
    pub fn uniform(&mut self, name: impl Into<String>, shape: &[usize], bound: f64, rng: &mut Rng) -> usize {
        let data = (0..shape.iter().product()).map(|_| T::c(rng.gen_range(-bound..=bound))).collect();
        self.push(name, shape, data)
    }

    /// `scale * U(0, 1)`.
    pub fn scaled_unit(&mut self, name: impl Into<String>, shape: &[usize], scale: f64, rng: &mut Rng) -> usize {
        let data = (0..shape.iter().product()).map(|_| T::c(scale * rng.gen::<f64>())).collect();
        self.push(name, shape, data)
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&Param<T>> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param<T>> {
        self.params.iter_mut().find(|p| p.name == name)
    }

    /// Registers every parameter on `tape` as a borrowed trainable leaf.
    pub fn bind<'a>(&'a self, tape: &mut Tape<'a, T>) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| tape.param(&p.data, &p.shape).expect("parameter shape is consistent"))
            .collect()
    }

    /// Registers every parameter as a constant (inference only).
    pub fn bind_frozen<'a>(&'a self, tape: &mut Tape<'a, T>) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| tape.constant_ref(&p.data, &p.shape).expect("parameter shape is consistent"))
            .collect()
    }

    /// Gradients per parameter, in store order.
    pub fn collect_grads(&self, vars: &[Var], grads: &Grads<T>) -> Vec<Option<Vec<T>>> {
        vars.iter().map(|v| grads.get(*v).map(|g| g.to_vec())).collect()
    }

    pub fn tensor(&self, i: usize) -> Tensor<T> {
        Tensor { shape: self.params[i].shape.clone(), data: self.params[i].data.clone() }
    }

    /// Converts element type (e.g. an `f64` copy of `f32` weights for checks).
    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Param { name: p.name.clone(), shape: p.shape.clone(), data: p.data.iter().map(|x| U::c(x.f64())).collect() })
                .collect(),
        }
    }

    /// Checks that `other` has the same names and shapes.
    pub fn check_layout(&self, other: &ParamStore<T>) -> Result<()> {
        for p in &self.params {
            match other.get(&p.name) {
                None => return Err(Error::MissingParameter(p.name.clone())),
                Some(q) if q.shape != p.shape => {
                    return Err(Error::Shape(format!("parameter `{}` has shape {:?}, expected {:?}", p.name, q.shape, p.shape)))
                }
                _ => {}
            }
        }
        Ok(())
    }
}
