use rand::Rng;

use super::{Real, Tensor};
use crate::error::{Error, Result};

/// Index of a parameter inside its [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A named learnable tensor. The tensor always has `requires_grad` set and
/// carries a gradient buffer of its own shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T: Real = f32> {
    pub name: String,
    pub tensor: Tensor<T>,
}

impl<T: Real> Param<T> {
    pub fn grad(&self) -> &[T] {
        self.tensor.grad.as_deref().expect("param grad buffer")
    }

    pub fn grad_mut(&mut self) -> &mut [T] {
        self.tensor.grad.as_deref_mut().expect("param grad buffer")
    }
}

/// Weight initialisation schemes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Uniform in `±sqrt(6 / fan_in)`.
    KaimingUniform { fan_in: usize },
    Constant(f64),
}

/// Ordered collection of uniquely named parameters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore<T: Real = f32> {
    params: Vec<Param<T>>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self { params: Vec::new() }
    }

    pub fn add(&mut self, name: &str, tensor: Tensor<T>) -> Result<ParamId> {
        if self.params.iter().any(|p| p.name == name) {
            return Err(Error::contract(format!("duplicate parameter name `{name}`")));
        }
        let mut tensor = tensor;
        tensor.requires_grad = true;
        tensor.grad = Some(vec![T::zero(); tensor.numel()]);
        self.params.push(Param {
            name: name.to_string(),
            tensor,
        });
        Ok(ParamId(self.params.len() - 1))
    }

    pub fn add_init<R: Rng>(
        &mut self,
        name: &str,
        shape: &[usize],
        init: Init,
        rng: &mut R,
    ) -> Result<ParamId> {
        let numel: usize = shape.iter().product();
        let data = match init {
            Init::KaimingUniform { fan_in } => {
                let bound = (6.0 / fan_in.max(1) as f64).sqrt();
                (0..numel)
                    .map(|_| T::from_f64_lossy(rng.gen_range(-bound..bound)))
                    .collect()
            }
            Init::Constant(c) => vec![T::from_f64_lossy(c); numel],
        };
        self.add(name, Tensor::new(shape, data)?)
    }

    pub fn get(&self, id: ParamId) -> &Param<T> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param<T> {
        &mut self.params[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total scalar count across all parameters.
    pub fn numel(&self) -> usize {
        self.params.iter().map(|p| p.tensor.numel()).sum()
    }

    pub fn zero_grad(&mut self) {
        self.params.iter_mut().for_each(|p| p.tensor.zero_grad());
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    tensor: p.tensor.cast(),
                })
                .collect(),
        }
    }
}
