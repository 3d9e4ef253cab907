use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;

/// A named learnable array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
}

impl Param {
    pub fn zeros(name: impl Into<String>, shape: &[usize]) -> Self {
        Self { name: name.into(), value: Tensor::zeros(shape) }
    }

    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn uniform<R: Rng + ?Sized>(name: impl Into<String>, shape: &[usize], fan_in: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let n = shape.iter().product();
        let data = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
        Self { name: name.into(), value: Tensor { shape: shape.to_vec(), data } }
    }

    pub fn data(&self) -> &[f64] {
        &self.value.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.value.data
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zeros_like(&self) -> Self {
        Self { name: self.name.clone(), value: self.value.zeros_like() }
    }
}

/// Anything that owns learnable parameters, visited in a fixed order.
pub trait Parameterized {
    fn params(&self) -> Vec<&Param>;
    fn params_mut(&mut self) -> Vec<&mut Param>;

    fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// `self += other`, parameter by parameter.
    fn accumulate(&mut self, other: &Self) {
        for (a, b) in self.params_mut().into_iter().zip(other.params()) {
            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += y;
            }
        }
    }

    fn scale(&mut self, s: f64) {
        for p in self.params_mut() {
            p.data_mut().iter_mut().for_each(|v| *v *= s);
        }
    }
}
