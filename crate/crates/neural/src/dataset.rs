use serde::{Deserialize, Serialize};

use dropsync_core::Spectrogram;

use crate::error::{shape_err, NeuralError, Result};
use crate::model::Normalizer;
use crate::tensor::Tensor;

/// One labelled hypothesis/reference window pair of raw dB features,
/// stored row-major `[frames, bins]` in single precision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairExample {
    pub hyp: Vec<f32>,
    pub reference: Vec<f32>,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSet {
    pub frames: usize,
    pub bins: usize,
    pub examples: Vec<PairExample>,
}

pub fn features(s: &Spectrogram) -> Vec<f32> {
    s.values.iter().map(|&v| v as f32).collect()
}

impl PairSet {
    pub fn new(frames: usize, bins: usize) -> Self {
        Self { frames, bins, examples: Vec::new() }
    }

    pub fn push(&mut self, example: PairExample) -> Result<()> {
        let n = self.frames * self.bins;
        if example.hyp.len() != n || example.reference.len() != n {
            return Err(shape_err("pair example", &[n, n], &[example.hyp.len(), example.reference.len()]));
        }
        if example.label > 1 {
            return Err(NeuralError::InvalidConfig { field: "label", reason: format!("{} is not 0 or 1", example.label) });
        }
        self.examples.push(example);
        Ok(())
    }

    pub fn push_spectrograms(&mut self, hyp: &Spectrogram, reference: &Spectrogram, label: u8) -> Result<()> {
        self.push(PairExample { hyp: features(hyp), reference: features(reference), label })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.examples.iter().filter(|e| e.label == 1).count()
    }

    pub fn fit_normalizer(&self) -> Result<Normalizer> {
        Normalizer::fit(self.examples.iter().flat_map(|e| [e.hyp.as_slice(), e.reference.as_slice()]))
    }

    pub fn tensors(&self, i: usize, norm: &Normalizer) -> Result<(Tensor, Tensor)> {
        let e = &self.examples[i];
        Ok((norm.apply(&e.hyp, self.bins)?, norm.apply(&e.reference, self.bins)?))
    }
}
