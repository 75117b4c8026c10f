//! Named parameter collections shared by the generator, critic and classifiers.

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{gaussian_sample, Tape, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ModelParams {
    pub fn new() -> Self {
        ModelParams { names: Vec::new(), tensors: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, t: Tensor) {
        self.names.push(name.into());
        self.tensors.push(t);
    }

    /// Weight tensor drawn from `N(0, std²)`.
    pub fn push_gaussian<R: Rng + ?Sized>(&mut self, name: impl Into<String>, shape: &[usize], std: f64, rng: &mut R) {
        self.push(name, gaussian_sample(shape, 0.0, std, rng));
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

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &mut self.tensors[i])
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Registers every tensor on `tape`, in declaration order.
    pub fn bind(&self, tape: &Tape) -> Vec<Tensor> {
        self.tensors.iter().map(|t| tape.var(t)).collect()
    }

    pub fn layout(&self) -> Vec<(String, Vec<usize>)> {
        self.names.iter().zip(&self.tensors).map(|(n, t)| (n.clone(), t.shape().to_vec())).collect()
    }

    /// Concatenated values in declaration order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.count());
        for t in &self.tensors {
            out.extend_from_slice(t.data());
        }
        out
    }

    /// Overwrites all values from a flat slice; returns the number consumed.
    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<usize> {
        let total = self.count();
        if flat.len() < total {
            return Err(Error::InvalidInput(format!("parameter payload has {} values, need {total}", flat.len())));
        }
        let mut off = 0;
        for t in &mut self.tensors {
            let n = t.numel();
            t.data_mut()?.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(off)
    }
}

impl Default for ModelParams {
    fn default() -> Self {
        Self::new()
    }
}
