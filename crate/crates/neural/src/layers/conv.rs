use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NeuralError, Result};
use crate::param::{Param, Parameterized};
use crate::tensor::{add_column_sums, axpy, gemm, Tensor};

/// Same-padded 1D convolution along time followed by ReLU.
///
/// Weights are stored `[kernel, c_in, c_out]` so the innermost loops run over
/// contiguous output channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conv1d {
    pub weight: Param,
    pub bias: Param,
}

impl Conv1d {
    pub fn new<R: Rng + ?Sized>(name: &str, c_in: usize, c_out: usize, kernel: usize, rng: &mut R) -> Result<Self> {
        if kernel % 2 == 0 {
            return Err(NeuralError::InvalidConfig { field: "kernel", reason: "must be odd for same padding".into() });
        }
        Ok(Self {
            weight: Param::uniform(format!("{name}.weight"), &[kernel, c_in, c_out], kernel * c_in, rng),
            bias: Param::uniform(format!("{name}.bias"), &[c_out], kernel * c_in, rng),
        })
    }

    pub fn kernel(&self) -> usize {
        self.weight.value.shape[0]
    }

    pub fn c_in(&self) -> usize {
        self.weight.value.shape[1]
    }

    pub fn c_out(&self) -> usize {
        self.weight.value.shape[2]
    }

    /// Rows of `k` zero-padded input frames centred on each output step.
    fn im2col(&self, x: &Tensor) -> Vec<f64> {
        let (t_len, c_in, k) = (x.rows(), self.c_in(), self.kernel());
        let pad = k / 2;
        let mut cols = vec![0.0; t_len * k * c_in];
        for t in 0..t_len {
            for j in 0..k {
                let Some(src) = (t + j).checked_sub(pad).filter(|&s| s < t_len) else { continue };
                let at = (t * k + j) * c_in;
                cols[at..at + c_in].copy_from_slice(x.row(src));
            }
        }
        cols
    }

    /// Output `[T, c_out]`, already passed through ReLU.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        x.expect_cols("conv1d input", self.c_in())?;
        let (t_len, c_out, kc) = (x.rows(), self.c_out(), self.kernel() * self.c_in());
        let mut out = Tensor::zeros(&[t_len, c_out]);
        for t in 0..t_len {
            out.row_mut(t).copy_from_slice(self.bias.data());
        }
        gemm(t_len, kc, c_out, &self.im2col(x), (kc, 1), self.weight.data(), (c_out, 1), 1.0, &mut out.data);
        super::relu_inplace(&mut out.data);
        Ok(out)
    }

    /// `out` is this layer's forward output; `grad_out` is consumed.
    pub fn backward(&self, x: &Tensor, out: &Tensor, grad_out: Tensor, grads: &mut Conv1d) -> Tensor {
        self.backward_impl(x, out, grad_out, grads, true)
    }

    /// Parameter gradients only; skips the input gradient of a first layer.
    pub fn backward_params(&self, x: &Tensor, out: &Tensor, grad_out: Tensor, grads: &mut Conv1d) {
        self.backward_impl(x, out, grad_out, grads, false);
    }

    fn backward_impl(&self, x: &Tensor, out: &Tensor, mut grad_out: Tensor, grads: &mut Conv1d, want_dx: bool) -> Tensor {
        super::relu_backward_inplace(&out.data, &mut grad_out.data);
        let (t_len, c_in, c_out, k) = (x.rows(), self.c_in(), self.c_out(), self.kernel());
        let kc = k * c_in;
        add_column_sums(grads.bias.data_mut(), &grad_out.data, c_out);
        let cols = self.im2col(x);
        gemm(kc, t_len, c_out, &cols, (1, kc), &grad_out.data, (c_out, 1), 1.0, grads.weight.data_mut());
        let mut dx = Tensor::zeros(&[t_len, c_in]);
        if want_dx {
            let mut dcols = vec![0.0; t_len * kc];
            gemm(t_len, c_out, kc, &grad_out.data, (c_out, 1), self.weight.data(), (1, c_out), 0.0, &mut dcols);
            let pad = k / 2;
            for t in 0..t_len {
                for j in 0..k {
                    let Some(src) = (t + j).checked_sub(pad).filter(|&s| s < t_len) else { continue };
                    let at = (t * k + j) * c_in;
                    axpy(dx.row_mut(src), 1.0, &dcols[at..at + c_in]);
                }
            }
        }
        dx
    }
}

impl Parameterized for Conv1d {
    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}
