use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result};
use crate::param::Parameterized;

pub const DEFAULT_LR: f64 = 5e-5;

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: Vec::new(), v: Vec::new() }
    }

    /// One update of `params` from gradients laid out identically.
    pub fn step<M: Parameterized>(&mut self, params: &mut M, grads: &M) -> Result<()> {
        let gs = grads.params();
        let mut ps = params.params_mut();
        if gs.len() != ps.len() {
            return Err(shape_err("adam parameter count", &[ps.len()], &[gs.len()]));
        }
        for (p, g) in ps.iter().zip(&gs) {
            if p.value.shape != g.value.shape {
                return Err(shape_err("adam gradient", &p.value.shape, &g.value.shape));
            }
        }
        if self.m.is_empty() {
            self.m = gs.iter().map(|g| vec![0.0; g.len()]).collect();
            self.v = self.m.clone();
        } else if self.m.len() != gs.len() || self.m.iter().zip(&gs).any(|(m, g)| m.len() != g.len()) {
            return Err(shape_err("adam state", &[self.m.len()], &[gs.len()]));
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (k, (p, g)) in ps.iter_mut().zip(&gs).enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for (i, (w, &gi)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                *w -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
