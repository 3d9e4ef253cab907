use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Dense;
use crate::error::{shape_err, NeuralError, Result};
use crate::param::{Param, Parameterized};
use crate::tensor::{axpy, dot, Tensor};

/// Multi-head scaled dot-product attention with separate query, key and
/// value source sequences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mha {
    pub n_heads: usize,
    pub q: Dense,
    pub k: Dense,
    pub v: Dense,
    pub o: Dense,
}

#[derive(Debug, Clone)]
pub struct MhaCache {
    q: Tensor,
    k: Tensor,
    v: Tensor,
    /// Per head, row-major `[T_q, T_k]` attention weights.
    attn: Vec<Vec<f64>>,
    concat: Tensor,
}

impl MhaCache {
    pub fn attention(&self, head: usize) -> &[f64] {
        &self.attn[head]
    }
}

impl Mha {
    pub fn new<R: Rng + ?Sized>(name: &str, d: usize, n_heads: usize, rng: &mut R) -> Result<Self> {
        if n_heads == 0 || d % n_heads != 0 {
            return Err(NeuralError::InvalidConfig {
                field: "n_heads",
                reason: format!("model width {d} is not divisible by {n_heads} heads"),
            });
        }
        Ok(Self {
            n_heads,
            q: Dense::new(&format!("{name}.q"), d, d, rng),
            k: Dense::new(&format!("{name}.k"), d, d, rng),
            v: Dense::new(&format!("{name}.v"), d, d, rng),
            o: Dense::new(&format!("{name}.o"), d, d, rng),
        })
    }

    pub fn width(&self) -> usize {
        self.q.d_in()
    }

    fn head_dim(&self) -> usize {
        self.width() / self.n_heads
    }

    /// Output `[T_q, D]`. Keys and values must have equal length.
    pub fn forward(&self, query: &Tensor, key: &Tensor, value: &Tensor) -> Result<(Tensor, MhaCache)> {
        if key.rows() != value.rows() {
            return Err(shape_err("mha key/value length", &[key.rows()], &[value.rows()]));
        }
        let q = self.q.forward(query)?;
        let k = self.k.forward(key)?;
        let v = self.v.forward(value)?;
        let (tq, tk, dh) = (q.rows(), k.rows(), self.head_dim());
        let scale = 1.0 / (dh as f64).sqrt();
        let d = self.width();
        let mut concat = Tensor::zeros(&[tq, d]);
        let mut attn = Vec::with_capacity(self.n_heads);
        for head in 0..self.n_heads {
            let cols = head * dh..(head + 1) * dh;
            let mut a = vec![0.0; tq * tk];
            for i in 0..tq {
                let row = &mut a[i * tk..(i + 1) * tk];
                for (j, s) in row.iter_mut().enumerate() {
                    *s = scale * dot(&q.row(i)[cols.clone()], &k.row(j)[cols.clone()]);
                }
                let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for s in row.iter_mut() {
                    *s = (*s - m).exp();
                    sum += *s;
                }
                row.iter_mut().for_each(|s| *s /= sum);
                let out = &mut concat.row_mut(i)[cols.clone()];
                for j in 0..tk {
                    axpy(out, a[i * tk + j], &v.row(j)[cols.clone()]);
                }
            }
            attn.push(a);
        }
        let out = self.o.forward(&concat)?;
        Ok((out, MhaCache { q, k, v, attn, concat }))
    }

    /// Gradients with respect to the query, key and value sources.
    pub fn backward(
        &self,
        query: &Tensor,
        key: &Tensor,
        value: &Tensor,
        cache: &MhaCache,
        grad_out: &Tensor,
        grads: &mut Mha,
    ) -> (Tensor, Tensor, Tensor) {
        let d_concat = self.o.backward(&cache.concat, grad_out, &mut grads.o);
        let (tq, tk, dh) = (cache.q.rows(), cache.k.rows(), self.head_dim());
        let scale = 1.0 / (dh as f64).sqrt();
        let mut dq = cache.q.zeros_like();
        let mut dk = cache.k.zeros_like();
        let mut dv = cache.v.zeros_like();
        let d = self.width();
        for head in 0..self.n_heads {
            let cols = head * dh..(head + 1) * dh;
            let a = &cache.attn[head];
            for i in 0..tq {
                let g_out = &d_concat.row(i)[cols.clone()];
                // dA_ij = dO_i . V_j, then through the softmax.
                let da: Vec<f64> = (0..tk).map(|j| dot(g_out, &cache.v.row(j)[cols.clone()])).collect();
                let weighted: f64 = (0..tk).map(|j| a[i * tk + j] * da[j]).sum();
                for j in 0..tk {
                    let aij = a[i * tk + j];
                    axpy(&mut dv.data[j * d + cols.start..j * d + cols.end], aij, g_out);
                    let ds = aij * (da[j] - weighted) * scale;
                    axpy(&mut dq.data[i * d + cols.start..i * d + cols.end], ds, &cache.k.row(j)[cols.clone()]);
                    axpy(&mut dk.data[j * d + cols.start..j * d + cols.end], ds, &cache.q.row(i)[cols.clone()]);
                }
            }
        }
        let d_query = self.q.backward(query, &dq, &mut grads.q);
        let d_key = self.k.backward(key, &dk, &mut grads.k);
        let d_value = self.v.backward(value, &dv, &mut grads.v);
        (d_query, d_key, d_value)
    }
}

impl Parameterized for Mha {
    fn params(&self) -> Vec<&Param> {
        [&self.q, &self.k, &self.v, &self.o].into_iter().flat_map(|l| l.params()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        [&mut self.q, &mut self.k, &mut self.v, &mut self.o].into_iter().flat_map(|l| l.params_mut()).collect()
    }
}
