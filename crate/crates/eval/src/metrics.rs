use serde::{Deserialize, Serialize};

use dropsync_core::drops::DropEvent;

use crate::detector::DeviceDecision;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Harmonic mean; 0 when both inputs are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

impl MetricsReport {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        Self { tp, fp, fn_, tn, precision, recall, f1: f1_score(precision, recall) }
    }

    /// F1 straight from counts: `2 TP / (2 TP + FP + FN)`.
    pub fn f1_from_counts(&self) -> f64 {
        ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }
}

/// Event-level scoring of detector output. A positive decision is a true
/// positive when its window contains a not yet matched onset of the same
/// device; onsets left unmatched are false negatives. Negative decisions
/// count as true negatives unless their window contains an onset.
pub fn compute_metrics(decisions: &[DeviceDecision], ground_truth: &[DropEvent]) -> MetricsReport {
    let mut order: Vec<&DeviceDecision> = decisions.iter().collect();
    order.sort_by_key(|d| (d.device_id, d.window_start_sample, d.window_end_sample));
    let mut events: Vec<&DropEvent> = ground_truth.iter().collect();
    events.sort_by_key(|e| (e.device_id, e.onset_sample, e.duration_samples));
    let mut matched = vec![false; events.len()];
    let contains = |d: &DeviceDecision, e: &DropEvent| {
        e.device_id == d.device_id && d.window_start_sample <= e.onset_sample && e.onset_sample < d.window_end_sample
    };
    let (mut tp, mut fp, mut tn) = (0, 0, 0);
    for d in order {
        if d.label == 1 {
            match events.iter().enumerate().find(|(i, e)| !matched[*i] && contains(d, e)) {
                Some((i, _)) => {
                    matched[i] = true;
                    tp += 1;
                }
                None => fp += 1,
            }
        } else if !events.iter().any(|e| contains(d, e)) {
            tn += 1;
        }
    }
    let fn_ = matched.iter().filter(|m| !**m).count();
    MetricsReport::from_counts(tp, fp, fn_, tn)
}

/// Window-level scoring: each decision is compared with its own label.
pub fn window_metrics(predicted: &[u8], truth: &[u8]) -> MetricsReport {
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (&p, &t) in predicted.iter().zip(truth) {
        match (p == 1, t == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    MetricsReport::from_counts(tp, fp, fn_, tn)
}
