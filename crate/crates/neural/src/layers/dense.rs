use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::param::{Param, Parameterized};
use crate::tensor::{add_column_sums, gemm, Tensor};

/// Affine map applied to every row: `y = x W + b`, `W` stored `[in, out]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Param,
    pub bias: Param,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(name: &str, d_in: usize, d_out: usize, rng: &mut R) -> Self {
        Self {
            weight: Param::uniform(format!("{name}.weight"), &[d_in, d_out], d_in, rng),
            bias: Param::uniform(format!("{name}.bias"), &[d_out], d_in, rng),
        }
    }

    pub fn d_in(&self) -> usize {
        self.weight.value.shape[0]
    }

    pub fn d_out(&self) -> usize {
        self.weight.value.shape[1]
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        x.expect_cols("dense input", self.d_in())?;
        let (d_in, d_out) = (self.d_in(), self.d_out());
        let mut out = Tensor::zeros(&[x.rows(), d_out]);
        for r in 0..x.rows() {
            out.row_mut(r).copy_from_slice(self.bias.data());
        }
        gemm(x.rows(), d_in, d_out, &x.data, (d_in, 1), self.weight.data(), (d_out, 1), 1.0, &mut out.data);
        Ok(out)
    }

    pub fn backward(&self, x: &Tensor, grad_out: &Tensor, grads: &mut Dense) -> Tensor {
        let (rows, d_in, d_out) = (x.rows(), self.d_in(), self.d_out());
        add_column_sums(grads.bias.data_mut(), &grad_out.data, d_out);
        gemm(d_in, rows, d_out, &x.data, (1, d_in), &grad_out.data, (d_out, 1), 1.0, grads.weight.data_mut());
        let mut dx = Tensor::zeros(&[rows, d_in]);
        gemm(rows, d_out, d_in, &grad_out.data, (d_out, 1), self.weight.data(), (1, d_out), 0.0, &mut dx.data);
        dx
    }
}

impl Parameterized for Dense {
    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}
