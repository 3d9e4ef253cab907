//! Central-difference verification of hand-written backward passes.

use serde::{Deserialize, Serialize};

use crate::param::Parameterized;
use crate::tensor::Tensor;

pub const DEFAULT_STEP: f64 = 1e-3;

/// `|a - n| / max(|a| + |n|, 1e-6)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-6)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Coordinates skipped because a perturbation crossed a ReLU or
    /// max-pool switching point.
    pub excluded: usize,
    pub worst: Option<String>,
}

impl Default for GradCheckReport {
    fn default() -> Self {
        Self { max_rel_error: 0.0, checked: 0, excluded: 0, worst: None }
    }
}

impl GradCheckReport {
    fn record(&mut self, label: impl FnOnce() -> String, analytic: f64, numeric: f64) {
        let e = relative_error(analytic, numeric);
        self.checked += 1;
        if e > self.max_rel_error || self.worst.is_none() {
            self.max_rel_error = self.max_rel_error.max(e);
            self.worst = Some(label());
        }
    }

    pub fn merge(&mut self, other: GradCheckReport) {
        if other.max_rel_error >= self.max_rel_error && other.worst.is_some() {
            self.worst = other.worst;
        }
        self.max_rel_error = self.max_rel_error.max(other.max_rel_error);
        self.checked += other.checked;
        self.excluded += other.excluded;
    }
}

/// Objective evaluated during a check: the scalar loss and a signature of
/// the non-smooth choices made on the way (empty when there are none).
pub type Probe = (f64, Vec<u64>);

/// Check every `stride`-th coordinate of every parameter of `model` against
/// `analytic`, a gradient buffer with the same layout.
pub fn check_params<M, F>(model: &M, analytic: &M, objective: F, step: f64, stride: usize) -> GradCheckReport
where
    M: Parameterized + Clone,
    F: Fn(&M) -> Probe,
{
    let stride = stride.max(1);
    let (_, base_sig) = objective(model);
    let mut probe = model.clone();
    let grads = analytic.params();
    let mut report = GradCheckReport::default();
    for (k, g) in grads.iter().enumerate() {
        for i in (k % stride..g.len()).step_by(stride) {
            let orig = probe.params()[k].data()[i];
            probe.params_mut()[k].data_mut()[i] = orig + step;
            let (plus, sig_p) = objective(&probe);
            probe.params_mut()[k].data_mut()[i] = orig - step;
            let (minus, sig_m) = objective(&probe);
            probe.params_mut()[k].data_mut()[i] = orig;
            if sig_p != base_sig || sig_m != base_sig {
                report.excluded += 1;
                continue;
            }
            report.record(|| format!("{}[{i}]", g.name), g.data()[i], (plus - minus) / (2.0 * step));
        }
    }
    report
}

/// Check the gradient of `objective` with respect to an input tensor.
pub fn check_input<F>(x: &Tensor, analytic: &Tensor, objective: F, step: f64, stride: usize) -> GradCheckReport
where
    F: Fn(&Tensor) -> Probe,
{
    let stride = stride.max(1);
    let (_, base_sig) = objective(x);
    let mut probe = x.clone();
    let mut report = GradCheckReport::default();
    for i in (0..x.len()).step_by(stride) {
        let orig = x.data[i];
        probe.data[i] = orig + step;
        let (plus, sig_p) = objective(&probe);
        probe.data[i] = orig - step;
        let (minus, sig_m) = objective(&probe);
        probe.data[i] = orig;
        if sig_p != base_sig || sig_m != base_sig {
            report.excluded += 1;
            continue;
        }
        report.record(|| format!("input[{i}]"), analytic.data[i], (plus - minus) / (2.0 * step));
    }
    report
}
