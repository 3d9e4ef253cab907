//! Combination of per-reference probabilities into one device score.

use serde::{Deserialize, Serialize};

use dropsync_core::registry::Registry;

use crate::error::{EvalError, Result};

pub const DECISION_THRESHOLD: f64 = 0.5;

pub trait Combiner: Send + Sync {
    fn name(&self) -> &'static str;
    /// Combined score in `[0, 1]`; the label is `score >= 0.5`.
    fn combine(&self, probs: &[f64]) -> f64;
}

pub struct Mean;
pub struct Median;
/// Fraction of references whose probability reaches the threshold.
pub struct Majority;

impl Combiner for Mean {
    fn name(&self) -> &'static str {
        "mean"
    }

    fn combine(&self, probs: &[f64]) -> f64 {
        if probs.is_empty() {
            return 0.0;
        }
        probs.iter().sum::<f64>() / probs.len() as f64
    }
}

impl Combiner for Median {
    fn name(&self) -> &'static str {
        "median"
    }

    fn combine(&self, probs: &[f64]) -> f64 {
        if probs.is_empty() {
            return 0.0;
        }
        let mut v = probs.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        }
    }
}

impl Combiner for Majority {
    fn name(&self) -> &'static str {
        "majority"
    }

    fn combine(&self, probs: &[f64]) -> f64 {
        if probs.is_empty() {
            return 0.0;
        }
        probs.iter().filter(|&&p| p >= DECISION_THRESHOLD).count() as f64 / probs.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CombinerKind {
    Mean,
    Median,
    Majority,
}

impl CombinerKind {
    pub fn name(self) -> &'static str {
        match self {
            CombinerKind::Mean => "mean",
            CombinerKind::Median => "median",
            CombinerKind::Majority => "majority",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "mean" => Ok(CombinerKind::Mean),
            "median" => Ok(CombinerKind::Median),
            "majority" => Ok(CombinerKind::Majority),
            other => Err(EvalError::config("combiner", format!("unknown combiner `{other}` (mean, median, majority)"))),
        }
    }

    pub fn build(self) -> Box<dyn Combiner> {
        registry().create(self.name()).expect("every kind is registered")
    }
}

pub fn registry() -> Registry<Box<dyn Combiner>> {
    let mut r: Registry<Box<dyn Combiner>> = Registry::new("combiner");
    r.register("mean", "average of per-reference probabilities", || Box::new(Mean))
        .register("median", "median of per-reference probabilities", || Box::new(Median))
        .register("majority", "fraction of references voting for a drop", || Box::new(Majority));
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enumerated_cases() {
        let p = [0.9, 0.9, 0.9, 0.1, 0.2];
        assert_eq!(Median.combine(&p), 0.9);
        assert!((Mean.combine(&p) - 0.6).abs() < 1e-12);
        assert!((Majority.combine(&p) - 0.6).abs() < 1e-12);
        let low = [0.5 - 1e-9; 5];
        for kind in [CombinerKind::Mean, CombinerKind::Median, CombinerKind::Majority] {
            assert!(kind.build().combine(&low) < DECISION_THRESHOLD, "{}", kind.name());
        }
    }

    #[test]
    fn registry_resolves_names() {
        let r = registry();
        assert_eq!(r.names(), vec!["majority", "mean", "median"]);
        assert_eq!(r.create("median").unwrap().name(), "median");
        assert!(r.create("max").is_err());
    }
}
