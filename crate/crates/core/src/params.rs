//! Named parameter collections and their initialisers.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{Gradients, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Ordered, named set of trainable tensors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

/// Parameters of a [`ParamSet`] recorded on a tape, in the same order.
#[derive(Debug, Clone)]
pub struct BoundParams {
    names: Vec<String>,
    vars: Vec<Var>,
}

impl BoundParams {
    pub fn get(&self, name: &str) -> Result<Var> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.vars[i])
            .ok_or_else(|| Error::Schema(format!("missing parameter `{name}`")))
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    /// Gradients for every bound parameter, in set order.
    pub fn collect(&self, grads: &Gradients) -> Vec<Tensor> {
        self.vars.iter().map(|v| grads.get(*v)).collect()
    }
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: Tensor) {
        if let Some(i) = self.names.iter().position(|n| n == name) {
            self.tensors[i] = value;
        } else {
            self.names.push(name.to_string());
            self.tensors.push(value);
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(move |i| &mut self.tensors[i])
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(self.tensors.iter())
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundParams {
        BoundParams {
            names: self.names.clone(),
            vars: self.tensors.iter().map(|t| tape.parameter(t.clone())).collect(),
        }
    }

    /// Checks that `other` has the same names and shapes in the same order.
    pub fn check_layout(&self, other: &[Tensor]) -> Result<()> {
        if other.len() != self.tensors.len() {
            return Err(Error::shape(format!(
                "expected {} tensors, got {}",
                self.tensors.len(),
                other.len()
            )));
        }
        for ((name, mine), theirs) in self.names.iter().zip(&self.tensors).zip(other) {
            if mine.shape() != theirs.shape() {
                return Err(Error::shape(format!(
                    "`{}`: {:?} vs {:?}",
                    name,
                    mine.shape(),
                    theirs.shape()
                )));
            }
        }
        Ok(())
    }
}

/// Gaussian initialisation with the given standard deviation.
pub fn normal_tensor<R: Rng + ?Sized>(shape: &[usize], std: f64, rng: &mut R) -> Tensor {
    let dist = Normal::new(0.0, std).expect("positive std");
    let n = shape.iter().product();
    let data = (0..n).map(|_| dist.sample(rng)).collect();
    Tensor::new(shape.to_vec(), data).expect("consistent shape")
}

/// He-normal initialisation for a layer with `fan_in` inputs.
pub fn he_tensor<R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor {
    normal_tensor(shape, (2.0 / fan_in as f64).sqrt(), rng)
}
