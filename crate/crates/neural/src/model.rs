use rand::Rng;
use serde::{Deserialize, Serialize};

use dropsync_core::registry::Registry;

use crate::error::{shape_err, NeuralError, Result};
use crate::layers::{maxpool_time, maxpool_time_backward, relu_backward_inplace, sigmoid, Conv1d, Dense, Lstm, LstmCache, Mha, MhaCache, PoolIndex};
use crate::param::{Param, Parameterized};
use crate::tensor::Tensor;

/// How the two encoded sequences are related before the classifier MLP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeadKind {
    /// Queries and keys from the hypothesis, values from the reference.
    Attention,
    /// Queries from the hypothesis, keys and values from the reference.
    AttentionKeyRef,
    /// No attention: last hypothesis and reference states side by side.
    Concat,
}

impl HeadKind {
    pub fn name(self) -> &'static str {
        match self {
            HeadKind::Attention => "attention",
            HeadKind::AttentionKeyRef => "attention-kref",
            HeadKind::Concat => "concat",
        }
    }

    pub fn registry() -> Registry<HeadKind> {
        let mut r = Registry::new("head");
        r.register("attention", "Q and K from the hypothesis, V from the reference", || HeadKind::Attention)
            .register("attention-kref", "Q from the hypothesis, K and V from the reference", || HeadKind::AttentionKeyRef)
            .register("concat", "no attention; concatenated last encoder states", || HeadKind::Concat);
        r
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::registry().create(name).map_err(NeuralError::from)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Desk,
    Paper,
}

impl Preset {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            other => Err(NeuralError::InvalidConfig { field: "preset", reason: format!("unknown preset `{other}` (desk, paper)") }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_bins: usize,
    pub conv_channels: usize,
    pub kernel: usize,
    pub lstm_hidden: usize,
    pub mlp_hidden: usize,
    pub n_heads: usize,
    pub head: HeadKind,
}

impl ModelConfig {
    pub fn preset(preset: Preset, n_bins: usize) -> Self {
        match preset {
            Preset::Desk => Self { n_bins, conv_channels: 64, kernel: 5, lstm_hidden: 128, mlp_hidden: 64, n_heads: 4, head: HeadKind::Attention },
            Preset::Paper => Self { n_bins, conv_channels: 512, kernel: 5, lstm_hidden: 1024, mlp_hidden: 512, n_heads: 8, head: HeadKind::Attention },
        }
    }

    pub fn with_head(mut self, head: HeadKind) -> Self {
        self.head = head;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_bins", self.n_bins),
            ("conv_channels", self.conv_channels),
            ("lstm_hidden", self.lstm_hidden),
            ("mlp_hidden", self.mlp_hidden),
            ("n_heads", self.n_heads),
        ];
        for (field, v) in positive {
            if v == 0 {
                return Err(NeuralError::InvalidConfig { field, reason: "must be positive".into() });
            }
        }
        if self.kernel % 2 == 0 {
            return Err(NeuralError::InvalidConfig { field: "kernel", reason: "must be odd".into() });
        }
        if self.head != HeadKind::Concat && self.lstm_hidden % self.n_heads != 0 {
            return Err(NeuralError::InvalidConfig {
                field: "n_heads",
                reason: format!("lstm_hidden {} not divisible by {} heads", self.lstm_hidden, self.n_heads),
            });
        }
        Ok(())
    }

    fn mlp_input(&self) -> usize {
        match self.head {
            HeadKind::Concat => 2 * self.lstm_hidden,
            _ => self.lstm_hidden,
        }
    }
}

/// Global feature standardisation fitted on training spectrograms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: f64,
    pub std: f64,
}

impl Default for Normalizer {
    fn default() -> Self {
        Self { mean: 0.0, std: 1.0 }
    }
}

impl Normalizer {
    pub fn fit<'a>(windows: impl IntoIterator<Item = &'a [f32]>) -> Result<Self> {
        let (mut n, mut sum, mut sq) = (0usize, 0.0f64, 0.0f64);
        for w in windows {
            for &v in w {
                n += 1;
                sum += v as f64;
                sq += (v as f64) * (v as f64);
            }
        }
        if n == 0 {
            return Err(NeuralError::EmptyDataset("normalizer fit"));
        }
        let mean = sum / n as f64;
        let var = (sq / n as f64 - mean * mean).max(0.0);
        Ok(Self { mean, std: var.sqrt().max(1e-6) })
    }

    /// Standardised `[frames, bins]` tensor.
    pub fn apply(&self, values: &[f32], bins: usize) -> Result<Tensor> {
        if bins == 0 || values.len() % bins != 0 {
            return Err(shape_err("normalizer input", &[bins], &[values.len()]));
        }
        let data = values.iter().map(|&v| (v as f64 - self.mean) / self.std).collect();
        Tensor::new(vec![values.len() / bins, bins], data)
    }
}

/// Shared CNN-LSTM branch: three conv blocks (max-pool after the first two)
/// and an LSTM. Decimates time by 4.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    pub conv1: Conv1d,
    pub conv2: Conv1d,
    pub conv3: Conv1d,
    pub lstm: Lstm,
}

#[derive(Debug, Clone)]
pub struct EncoderCache {
    input: Tensor,
    c1: Tensor,
    p1: Tensor,
    i1: PoolIndex,
    c2: Tensor,
    p2: Tensor,
    i2: PoolIndex,
    c3: Tensor,
    hs: Tensor,
    lstm: LstmCache,
}

impl EncoderCache {
    pub fn output(&self) -> &Tensor {
        &self.hs
    }
}

impl Encoder {
    pub fn new<R: Rng + ?Sized>(cfg: &ModelConfig, rng: &mut R) -> Result<Self> {
        let c = cfg.conv_channels;
        Ok(Self {
            conv1: Conv1d::new("encoder.conv1", cfg.n_bins, c, cfg.kernel, rng)?,
            conv2: Conv1d::new("encoder.conv2", c, c, cfg.kernel, rng)?,
            conv3: Conv1d::new("encoder.conv3", c, c, cfg.kernel, rng)?,
            lstm: Lstm::new("encoder.lstm", c, cfg.lstm_hidden, rng),
        })
    }

    pub fn output_len(t: usize) -> usize {
        t.div_ceil(2).div_ceil(2)
    }

    pub fn forward(&self, x: &Tensor) -> Result<EncoderCache> {
        if x.rows() < 2 {
            return Err(shape_err("encoder input frames", &[2], &[x.rows()]));
        }
        let c1 = self.conv1.forward(x)?;
        let (p1, i1) = maxpool_time(&c1);
        let c2 = self.conv2.forward(&p1)?;
        let (p2, i2) = maxpool_time(&c2);
        let c3 = self.conv3.forward(&p2)?;
        let (hs, lstm) = self.lstm.forward(&c3)?;
        Ok(EncoderCache { input: x.clone(), c1, p1, i1, c2, p2, i2, c3, hs, lstm })
    }

    /// Returns the input gradient when `want_input_grad` is set.
    pub fn backward(&self, cache: &EncoderCache, grad_hs: &Tensor, grads: &mut Encoder, want_input_grad: bool) -> Option<Tensor> {
        let d_c3 = self.lstm.backward(&cache.c3, &cache.hs, &cache.lstm, grad_hs, &mut grads.lstm);
        let d_p2 = self.conv3.backward(&cache.p2, &cache.c3, d_c3, &mut grads.conv3);
        let d_c2 = maxpool_time_backward(cache.c2.rows(), &cache.i2, &d_p2);
        let d_p1 = self.conv2.backward(&cache.p1, &cache.c2, d_c2, &mut grads.conv2);
        let d_c1 = maxpool_time_backward(cache.c1.rows(), &cache.i1, &d_p1);
        if want_input_grad {
            Some(self.conv1.backward(&cache.input, &cache.c1, d_c1, &mut grads.conv1))
        } else {
            self.conv1.backward_params(&cache.input, &cache.c1, d_c1, &mut grads.conv1);
            None
        }
    }
}

impl Parameterized for Encoder {
    fn params(&self) -> Vec<&Param> {
        let mut v = self.conv1.params();
        v.extend(self.conv2.params());
        v.extend(self.conv3.params());
        v.extend(self.lstm.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.conv1.params_mut();
        v.extend(self.conv2.params_mut());
        v.extend(self.conv3.params_mut());
        v.extend(self.lstm.params_mut());
        v
    }
}

/// Siamese drop classifier: one encoder applied to both inputs, an
/// attention (or concatenation) head, the last time step, an MLP with one
/// ReLU hidden layer and a sigmoid output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiameseModel {
    pub config: ModelConfig,
    pub normalizer: Normalizer,
    pub encoder: Encoder,
    pub attention: Option<Mha>,
    pub hidden: Dense,
    pub output: Dense,
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub hyp: EncoderCache,
    pub reference: EncoderCache,
    attention: Option<MhaCache>,
    attended: Option<Tensor>,
    features: Tensor,
    hidden: Tensor,
    pub logit: f64,
}

impl ForwardCache {
    pub fn probability(&self) -> f64 {
        sigmoid(self.logit)
    }

    /// ReLU masks and pooling choices, used to spot finite-difference steps
    /// that cross a non-differentiable point.
    pub fn kink_signature(&self) -> Vec<u64> {
        let mut sig = Vec::new();
        for enc in [&self.hyp, &self.reference] {
            for t in [&enc.c1, &enc.c2, &enc.c3] {
                sig.extend(t.data.iter().map(|&v| (v > 0.0) as u64));
            }
            sig.extend(enc.i1.iter().map(|&i| i as u64));
            sig.extend(enc.i2.iter().map(|&i| i as u64));
        }
        sig.extend(self.hidden.data.iter().map(|&v| (v > 0.0) as u64));
        sig
    }
}

impl SiameseModel {
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let encoder = Encoder::new(&config, rng)?;
        let attention = match config.head {
            HeadKind::Concat => None,
            _ => Some(Mha::new("attention", config.lstm_hidden, config.n_heads, rng)?),
        };
        let hidden = Dense::new("mlp.hidden", config.mlp_input(), config.mlp_hidden, rng);
        let output = Dense::new("mlp.output", config.mlp_hidden, 1, rng);
        Ok(Self { config, normalizer: Normalizer::default(), encoder, attention, hidden, output })
    }

    /// Gradient buffer with the same layout, all zeros.
    pub fn zeros_like(&self) -> Self {
        let mut g = self.clone();
        g.zero_grads();
        g
    }

    /// The encoders used for the hypothesis and the reference. Both are the
    /// same object.
    pub fn branches(&self) -> (&Encoder, &Encoder) {
        (&self.encoder, &self.encoder)
    }

    /// Inputs are standardised `[frames, bins]` tensors of identical shape.
    pub fn forward(&self, hyp: &Tensor, reference: &Tensor) -> Result<ForwardCache> {
        if hyp.shape != reference.shape {
            return Err(shape_err("hypothesis/reference shape", &hyp.shape, &reference.shape));
        }
        hyp.expect_cols("model input bins", self.config.n_bins)?;
        let (enc_h, enc_r) = self.branches();
        let h = enc_h.forward(hyp)?;
        let r = enc_r.forward(reference)?;
        let last = h.hs.rows() - 1;
        let (attention, attended, features) = match (&self.attention, self.config.head) {
            (Some(mha), HeadKind::Attention) => {
                let (out, cache) = mha.forward(&h.hs, &h.hs, &r.hs)?;
                let f = Tensor::matrix(1, out.cols(), out.row(last).to_vec())?;
                (Some(cache), Some(out), f)
            }
            (Some(mha), HeadKind::AttentionKeyRef) => {
                let (out, cache) = mha.forward(&h.hs, &r.hs, &r.hs)?;
                let f = Tensor::matrix(1, out.cols(), out.row(last).to_vec())?;
                (Some(cache), Some(out), f)
            }
            (None, HeadKind::Concat) => {
                let mut f = h.hs.row(last).to_vec();
                f.extend_from_slice(r.hs.row(last));
                (None, None, Tensor::matrix(1, f.len(), f)?)
            }
            _ => return Err(NeuralError::InvalidConfig { field: "head", reason: "attention weights do not match head kind".into() }),
        };
        let mut hidden = self.hidden.forward(&features)?;
        crate::layers::relu_inplace(&mut hidden.data);
        let logit = self.output.forward(&hidden)?.data[0];
        Ok(ForwardCache { hyp: h, reference: r, attention, attended, features, hidden, logit })
    }

    pub fn predict(&self, hyp: &Tensor, reference: &Tensor) -> Result<f64> {
        Ok(self.forward(hyp, reference)?.probability())
    }

    /// Standardise raw dB windows with the stored normalizer, then predict.
    pub fn predict_raw(&self, hyp: &[f32], reference: &[f32]) -> Result<f64> {
        let b = self.config.n_bins;
        self.predict(&self.normalizer.apply(hyp, b)?, &self.normalizer.apply(reference, b)?)
    }

    /// Backpropagate `d loss / d logit`. Parameter gradients accumulate into
    /// `grads`; input gradients are returned when requested.
    pub fn backward(&self, cache: &ForwardCache, d_logit: f64, grads: &mut SiameseModel, want_input_grad: bool) -> (Option<Tensor>, Option<Tensor>) {
        let d_out = Tensor { shape: vec![1, 1], data: vec![d_logit] };
        let mut d_hidden = self.output.backward(&cache.hidden, &d_out, &mut grads.output);
        relu_backward_inplace(&cache.hidden.data, &mut d_hidden.data);
        let d_features = self.hidden.backward(&cache.features, &d_hidden, &mut grads.hidden);
        let (t_len, h) = (cache.hyp.hs.rows(), self.config.lstm_hidden);
        let last = t_len - 1;
        let mut d_hh = Tensor::zeros(&[t_len, h]);
        let mut d_hr = Tensor::zeros(&[t_len, h]);
        match (&self.attention, &cache.attention, &cache.attended) {
            (Some(mha), Some(mc), Some(out)) => {
                let mut d_att = out.zeros_like();
                d_att.row_mut(last).copy_from_slice(&d_features.data);
                let g = grads.attention.as_mut().expect("gradient buffer has attention");
                let (hh, hr) = (&cache.hyp.hs, &cache.reference.hs);
                match self.config.head {
                    HeadKind::AttentionKeyRef => {
                        let (dq, dk, dv) = mha.backward(hh, hr, hr, mc, &d_att, g);
                        d_hh = dq;
                        d_hr = add(&dk, &dv);
                    }
                    _ => {
                        let (dq, dk, dv) = mha.backward(hh, hh, hr, mc, &d_att, g);
                        d_hh = add(&dq, &dk);
                        d_hr = dv;
                    }
                }
            }
            _ => {
                d_hh.row_mut(last).copy_from_slice(&d_features.data[..h]);
                d_hr.row_mut(last).copy_from_slice(&d_features.data[h..]);
            }
        }
        // Both branches share one encoder, so both gradients land in the same buffer.
        let dx_h = self.encoder.backward(&cache.hyp, &d_hh, &mut grads.encoder, want_input_grad);
        let dx_r = self.encoder.backward(&cache.reference, &d_hr, &mut grads.encoder, want_input_grad);
        (dx_h, dx_r)
    }
}

fn add(a: &Tensor, b: &Tensor) -> Tensor {
    Tensor { shape: a.shape.clone(), data: a.data.iter().zip(&b.data).map(|(x, y)| x + y).collect() }
}

impl Parameterized for SiameseModel {
    fn params(&self) -> Vec<&Param> {
        let mut v = self.encoder.params();
        if let Some(m) = &self.attention {
            v.extend(m.params());
        }
        v.extend(self.hidden.params());
        v.extend(self.output.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.encoder.params_mut();
        if let Some(m) = &mut self.attention {
            v.extend(m.params_mut());
        }
        v.extend(self.hidden.params_mut());
        v.extend(self.output.params_mut());
        v
    }
}
