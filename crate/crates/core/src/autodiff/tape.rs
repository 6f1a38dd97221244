use std::borrow::Cow;
use std::collections::HashMap;

use super::Real;
use crate::error::{Error, Result};

/// Owned n-dimensional array, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        if shape.len() > 6 {
            return Err(Error::Shape(format!("rank {} exceeds 6", shape.len())));
        }
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::Shape(format!("{} values for shape {:?}", data.len(), shape)));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self { shape: shape.to_vec(), data: vec![T::zero(); shape.iter().product()] }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn id(&self) -> usize {
        self.0
    }
}

/// What a backward rule sees: input values, the output value and which
/// inputs want a gradient.
pub struct Ctx<'s, T> {
    pub inputs: Vec<&'s [T]>,
    pub out: &'s [T],
    pub needs: Vec<bool>,
}

/// Maps the output gradient to one optional gradient per input.
pub type Backward<'a, T> = Box<dyn Fn(&Ctx<'_, T>, &[T]) -> Vec<Option<Vec<T>>> + 'a>;

struct Node<'a, T: Real> {
    value: Cow<'a, [T]>,
    shape: Vec<usize>,
    inputs: Vec<Var>,
    backward: Option<Backward<'a, T>>,
    requires_grad: bool,
}

/// Arena recording a forward computation for reverse-mode differentiation.
///
/// Inputs of a node always have smaller ids than the node, so a reverse
/// sweep over ids is a valid topological order.
pub struct Tape<'a, T: Real> {
    nodes: Vec<Node<'a, T>>,
}

impl<T: Real> Default for Tape<'_, T> {
    fn default() -> Self {
        Self { nodes: Vec::new() }
    }
}

/// Accumulated gradients of leaf variables.
#[derive(Debug, Clone)]
pub struct Grads<T> {
    map: HashMap<usize, Vec<T>>,
}

impl<T> Default for Grads<T> {
    fn default() -> Self {
        Self { map: HashMap::new() }
    }
}

impl<T: Real> Grads<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, v: Var) -> Option<&[T]> {
        self.map.get(&v.0).map(|g| g.as_slice())
    }

    pub fn clear(&mut self) {
        self.map.clear();
    }
}

impl<'a, T: Real> Tape<'a, T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn check_shape(shape: &[usize], len: usize) -> Result<()> {
        if shape.iter().product::<usize>() != len {
            return Err(Error::Shape(format!("{len} values for shape {shape:?}")));
        }
        Ok(())
    }

    /// Trainable leaf borrowing its values.
    pub fn param(&mut self, values: &'a [T], shape: &[usize]) -> Result<Var> {
        Self::check_shape(shape, values.len())?;
        Ok(self.push_node(Cow::Borrowed(values), shape.to_vec(), vec![], None, true))
    }

    /// Trainable leaf owning its values.
    pub fn param_owned(&mut self, t: Tensor<T>) -> Var {
        self.push_node(Cow::Owned(t.data), t.shape, vec![], None, true)
    }

    /// Non-trainable input.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push_node(Cow::Owned(t.data), t.shape, vec![], None, false)
    }

    pub fn constant_ref(&mut self, values: &'a [T], shape: &[usize]) -> Result<Var> {
        Self::check_shape(shape, values.len())?;
        Ok(self.push_node(Cow::Borrowed(values), shape.to_vec(), vec![], None, false))
    }

    fn push_node(&mut self, value: Cow<'a, [T]>, shape: Vec<usize>, inputs: Vec<Var>, backward: Option<Backward<'a, T>>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, shape, inputs, backward, requires_grad });
        Var(self.nodes.len() - 1)
    }

    /// Records an op result. `backward` is dropped when no input needs a gradient.
    pub fn push_op(&mut self, value: Vec<T>, shape: Vec<usize>, inputs: Vec<Var>, backward: Backward<'a, T>) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        let bw = requires_grad.then_some(backward);
        self.push_node(Cow::Owned(value), shape, inputs, bw, requires_grad)
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn tensor(&self, v: Var) -> Tensor<T> {
        Tensor { shape: self.shape(v).to_vec(), data: self.value(v).to_vec() }
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Verifies that every node only references earlier nodes.
    pub fn validate(&self) -> Result<()> {
        for (i, n) in self.nodes.iter().enumerate() {
            if let Some(bad) = n.inputs.iter().find(|v| v.0 >= i) {
                return Err(Error::MalformedGraph(format!("node {i} consumes node {} which is not earlier", bad.0)));
            }
        }
        Ok(())
    }

    /// Reverse sweep from a scalar `loss`, accumulating into `grads`.
    pub fn backward(&self, loss: Var, grads: &mut Grads<T>) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::Shape(format!("loss must be a scalar, got shape {:?}", self.shape(loss))));
        }
        self.backward_with(loss, &[T::one()], grads)
    }

    /// Reverse sweep seeded with an arbitrary output gradient.
    pub fn backward_with(&self, out: Var, seed: &[T], grads: &mut Grads<T>) -> Result<()> {
        if out.0 >= self.nodes.len() {
            return Err(Error::MalformedGraph(format!("variable {} is not on this tape", out.0)));
        }
        if seed.len() != self.value(out).len() {
            return Err(Error::Shape("seed gradient does not match the output".into()));
        }
        self.validate()?;
        let mut g: Vec<Option<Vec<T>>> = (0..=out.0).map(|_| None).collect();
        g[out.0] = Some(seed.to_vec());
        for i in (0..=out.0).rev() {
            let Some(gi) = g[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(bw) = &node.backward else {
                // Leaf: accumulate across calls.
                match grads.map.get_mut(&i) {
                    Some(acc) => acc.iter_mut().zip(&gi).for_each(|(a, b)| *a = *a + *b),
                    None => {
                        grads.map.insert(i, gi);
                    }
                }
                continue;
            };
            let ctx = Ctx {
                inputs: node.inputs.iter().map(|v| self.value(*v)).collect(),
                out: &node.value,
                needs: node.inputs.iter().map(|v| self.nodes[v.0].requires_grad).collect(),
            };
            let contrib = bw(&ctx, &gi);
            for (v, c) in node.inputs.iter().zip(contrib) {
                let Some(c) = c else { continue };
                if !self.nodes[v.0].requires_grad {
                    continue;
                }
                debug_assert_eq!(c.len(), self.value(*v).len());
                match &mut g[v.0] {
                    Some(acc) => acc.iter_mut().zip(&c).for_each(|(a, b)| *a = *a + *b),
                    slot => *slot = Some(c),
                }
            }
        }
        Ok(())
    }
}
