//! Differentiable layers. Each forward pass returns whatever the matching
//! backward pass needs; backward passes accumulate parameter gradients into a
//! zero-initialised copy of the layer and return the input gradient.

mod conv;
mod dense;
mod lstm;
mod mha;
mod pool;

pub use conv::Conv1d;
pub use dense::Dense;
pub use lstm::{Lstm, LstmCache};
pub use mha::{Mha, MhaCache};
pub use pool::{maxpool_time, maxpool_time_backward, PoolIndex};

pub fn relu_inplace(x: &mut [f64]) {
    x.iter_mut().for_each(|v| *v = v.max(0.0));
}

/// Zero the gradient wherever the activation output was clipped.
pub fn relu_backward_inplace(out: &[f64], grad: &mut [f64]) {
    for (g, &o) in grad.iter_mut().zip(out) {
        if o <= 0.0 {
            *g = 0.0;
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
