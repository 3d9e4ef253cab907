use rand::Rng;
use serde::{Deserialize, Serialize};

use super::sigmoid;
use crate::error::Result;
use crate::param::{Param, Parameterized};
use crate::tensor::{add_column_sums, axpy, dot, gemm, Tensor};

/// Single-layer LSTM with zero initial state. Gate blocks in the packed
/// weights are ordered input, forget, candidate, output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lstm {
    /// `[C, 4H]`
    pub w_x: Param,
    /// `[H, 4H]`
    pub w_h: Param,
    /// `[4H]`
    pub bias: Param,
}

/// Activated gates `[T, 4H]` and cell states `[T, H]`.
#[derive(Debug, Clone)]
pub struct LstmCache {
    gates: Tensor,
    cells: Tensor,
}

impl Lstm {
    pub fn new<R: Rng + ?Sized>(name: &str, c_in: usize, hidden: usize, rng: &mut R) -> Self {
        let mut bias = Param::uniform(format!("{name}.bias"), &[4 * hidden], hidden, rng);
        bias.data_mut()[hidden..2 * hidden].iter_mut().for_each(|b| *b += 1.0);
        Self {
            w_x: Param::uniform(format!("{name}.w_x"), &[c_in, 4 * hidden], c_in, rng),
            w_h: Param::uniform(format!("{name}.w_h"), &[hidden, 4 * hidden], hidden, rng),
            bias,
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_h.value.shape[0]
    }

    pub fn c_in(&self) -> usize {
        self.w_x.value.shape[0]
    }

    /// All hidden states `[T, H]`.
    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, LstmCache)> {
        x.expect_cols("lstm input", self.c_in())?;
        let (t_len, h, c_in) = (x.rows(), self.hidden(), self.c_in());
        let wh = self.w_h.data();
        let mut hs = Tensor::zeros(&[t_len, h]);
        let mut cells = Tensor::zeros(&[t_len, h]);
        // Input projections for every step at once; recurrent terms added below.
        let mut gates = Tensor::zeros(&[t_len, 4 * h]);
        for t in 0..t_len {
            gates.row_mut(t).copy_from_slice(self.bias.data());
        }
        gemm(t_len, c_in, 4 * h, &x.data, (c_in, 1), self.w_x.data(), (4 * h, 1), 1.0, &mut gates.data);
        for t in 0..t_len {
            if t > 0 {
                let prev = &hs.data[(t - 1) * h..t * h];
                let z = gates.row_mut(t);
                for (j, &hv) in prev.iter().enumerate() {
                    axpy(z, hv, &wh[j * 4 * h..(j + 1) * 4 * h]);
                }
            }
            let g = gates.row_mut(t);
            for j in 0..h {
                g[j] = sigmoid(g[j]);
                g[h + j] = sigmoid(g[h + j]);
                g[2 * h + j] = g[2 * h + j].tanh();
                g[3 * h + j] = sigmoid(g[3 * h + j]);
            }
            let g = &gates.data[t * 4 * h..(t + 1) * 4 * h];
            for j in 0..h {
                let c_prev = if t > 0 { cells.data[(t - 1) * h + j] } else { 0.0 };
                let c = g[h + j] * c_prev + g[j] * g[2 * h + j];
                cells.data[t * h + j] = c;
                hs.data[t * h + j] = g[3 * h + j] * c.tanh();
            }
        }
        Ok((hs, LstmCache { gates, cells }))
    }

    /// Backpropagation through time.
    pub fn backward(&self, x: &Tensor, hs: &Tensor, cache: &LstmCache, grad_out: &Tensor, grads: &mut Lstm) -> Tensor {
        let (t_len, h, c_in) = (x.rows(), self.hidden(), self.c_in());
        let wh = self.w_h.data();
        let mut dz_all = Tensor::zeros(&[t_len, 4 * h]);
        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        for t in (0..t_len).rev() {
            let g = &cache.gates.data[t * 4 * h..(t + 1) * 4 * h];
            let dz = &mut dz_all.data[t * 4 * h..(t + 1) * 4 * h];
            let dy = &grad_out.data[t * h..(t + 1) * h];
            let cells = &cache.cells.data;
            for j in 0..h {
                let dh = dy[j] + dh_next[j];
                let c = cells[t * h + j];
                let tc = c.tanh();
                let c_prev = if t > 0 { cells[(t - 1) * h + j] } else { 0.0 };
                let (i, f, gg, o) = (g[j], g[h + j], g[2 * h + j], g[3 * h + j]);
                let dc = dh * o * (1.0 - tc * tc) + dc_next[j];
                dz[j] = dc * gg * i * (1.0 - i);
                dz[h + j] = dc * c_prev * f * (1.0 - f);
                dz[2 * h + j] = dc * i * (1.0 - gg * gg);
                dz[3 * h + j] = dh * tc * o * (1.0 - o);
                dc_next[j] = dc * f;
            }
            for j in 0..h {
                dh_next[j] = dot(&wh[j * 4 * h..(j + 1) * 4 * h], dz);
            }
        }
        let g4 = 4 * h;
        add_column_sums(grads.bias.data_mut(), &dz_all.data, g4);
        gemm(c_in, t_len, g4, &x.data, (1, c_in), &dz_all.data, (g4, 1), 1.0, grads.w_x.data_mut());
        if t_len > 1 {
            // h_{t-1}^T dz_t summed over t >= 1.
            gemm(h, t_len - 1, g4, &hs.data, (1, h), &dz_all.data[g4..], (g4, 1), 1.0, grads.w_h.data_mut());
        }
        let mut dx = Tensor::zeros(&[t_len, c_in]);
        gemm(t_len, g4, c_in, &dz_all.data, (g4, 1), self.w_x.data(), (1, g4), 0.0, &mut dx.data);
        dx
    }
}

impl Parameterized for Lstm {
    fn params(&self) -> Vec<&Param> {
        vec![&self.w_x, &self.w_h, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.w_x, &mut self.w_h, &mut self.bias]
    }
}
