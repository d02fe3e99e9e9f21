//! Named parameter storage and binding onto a tape.

use std::collections::BTreeMap;

use rand::Rng;

use crate::autodiff::{Gradients, Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Learnable tensors keyed by stable dotted names, iterated in name order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelParams<T: Scalar = f64> {
    tensors: BTreeMap<String, Tensor<T>>,
}

impl<T: Scalar> ModelParams<T> {
    pub fn new() -> Self {
        Self {
            tensors: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor<T>) {
        self.tensors.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.tensors.get_mut(name)
    }

    pub fn remove(&mut self, name: &str) -> Option<Tensor<T>> {
        self.tensors.remove(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor<T>)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor<T>)> {
        self.tensors.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.tensors.keys()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            tensors: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), Tensor::zeros(v.shape().to_vec())))
                .collect(),
        }
    }

    /// Records every tensor as a tape leaf.
    pub fn bind<'t>(&self, tape: &'t Tape<T>, trainable: bool) -> Bound<'t, T> {
        let vars = self
            .tensors
            .iter()
            .map(|(k, v)| {
                let var = if trainable {
                    tape.leaf(v.clone())
                } else {
                    tape.constant(v.clone())
                };
                (k.clone(), var)
            })
            .collect();
        Bound { vars }
    }

    /// He-uniform weight `[fan_in × fan_out]` and zero bias `[fan_out]`.
    pub fn init_linear<R: Rng + ?Sized>(&mut self, prefix: &str, fan_in: usize, fan_out: usize, bias: bool, rng: &mut R) {
        let lim = (6.0 / fan_in as f64).sqrt();
        self.insert(format!("{prefix}.w"), Tensor::uniform([fan_in, fan_out], -lim, lim, rng));
        if bias {
            self.insert(format!("{prefix}.b"), Tensor::zeros([fan_out]));
        }
    }

    /// He-uniform kernel `[c_out × c_in × k × k]` and zero bias `[c_out]`.
    pub fn init_conv<R: Rng + ?Sized>(&mut self, prefix: &str, c_in: usize, c_out: usize, k: usize, bias: bool, rng: &mut R) {
        let lim = (6.0 / (c_in * k * k) as f64).sqrt();
        self.insert(format!("{prefix}.w"), Tensor::uniform([c_out, c_in, k, k], -lim, lim, rng));
        if bias {
            self.insert(format!("{prefix}.b"), Tensor::zeros([c_out]));
        }
    }

    /// Names and tensors in name order.
    pub fn unzip(&self) -> (Vec<String>, Vec<Tensor<T>>) {
        self.tensors.iter().map(|(k, v)| (k.clone(), v.clone())).unzip()
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            tensors: self.tensors.iter().map(|(k, v)| (k.clone(), v.cast())).collect(),
        }
    }
}

/// Parameters recorded on one tape.
pub struct Bound<'t, T: Scalar = f64> {
    vars: BTreeMap<String, Var<'t, T>>,
}

impl<'t, T: Scalar> Bound<'t, T> {
    /// Binds already-recorded vars under the given names.
    pub fn from_vars(names: &[String], vars: &[Var<'t, T>]) -> Self {
        assert_eq!(names.len(), vars.len());
        Self {
            vars: names.iter().cloned().zip(vars.iter().copied()).collect(),
        }
    }

    pub fn get(&self, name: &str) -> Result<Var<'t, T>> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::Config(format!("missing parameter `{name}`")))
    }

    pub fn opt(&self, name: &str) -> Option<Var<'t, T>> {
        self.vars.get(name).copied()
    }

    /// Affine layer using `{prefix}.w` and, when present, `{prefix}.b`.
    pub fn linear(&self, x: &Var<'t, T>, prefix: &str) -> Result<Var<'t, T>> {
        let w = self.get(&format!("{prefix}.w"))?;
        x.linear(&w, self.opt(&format!("{prefix}.b")).as_ref())
    }

    /// Convolution using `{prefix}.w` and, when present, `{prefix}.b`.
    pub fn conv(&self, x: &Var<'t, T>, prefix: &str, stride: usize, pad: usize) -> Result<Var<'t, T>> {
        let w = self.get(&format!("{prefix}.w"))?;
        x.conv2d(&w, self.opt(&format!("{prefix}.b")).as_ref(), stride, pad)
    }

    /// Collects the gradient of every bound parameter (zeros when unused).
    pub fn gradients(&self, grads: &mut Gradients<T>) -> ModelParams<T> {
        let mut out = ModelParams::new();
        for (k, &v) in &self.vars {
            let g = grads
                .take(v)
                .unwrap_or_else(|| Tensor::zeros(v.shape()));
            out.insert(k.clone(), g);
        }
        out
    }
}
