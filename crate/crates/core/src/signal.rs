//! Sampled signals, FFT, short-time Fourier analysis and dB spectrograms.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

/// Magnitude floor applied before taking the logarithm (-120 dB).
pub const MAGNITUDE_FLOOR: f64 = 1e-6;
pub const DB_FLOOR: f64 = -120.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate_hz: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self> {
        if sample_rate_hz == 0 {
            return Err(Error::InvalidWaveform("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidWaveform(format!("non-finite sample at index {i}")));
        }
        Ok(Self { samples, sample_rate_hz })
    }

    pub fn zeros(len: usize, sample_rate_hz: u32) -> Self {
        Self { samples: vec![0.0; len], sample_rate_hz }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    /// Mean square over the full length.
    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|v| v * v).sum::<f64>() / self.samples.len() as f64
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Copy of `[start, start + len)`, zero-filled past the end.
    pub fn slice(&self, start: usize, len: usize) -> Waveform {
        let mut out = vec![0.0; len];
        if start < self.samples.len() {
            let n = len.min(self.samples.len() - start);
            out[..n].copy_from_slice(&self.samples[start..start + n]);
        }
        Waveform { samples: out, sample_rate_hz: self.sample_rate_hz }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftConfig {
    pub frame_len_ms: u32,
    pub sample_rate_hz: u32,
}

impl StftConfig {
    pub fn new(frame_len_ms: u32, sample_rate_hz: u32) -> Result<Self> {
        if frame_len_ms != 32 && frame_len_ms != 64 {
            return Err(Error::config("frame_len_ms", format!("must be 32 or 64, got {frame_len_ms}")));
        }
        if sample_rate_hz == 0 || (frame_len_ms as u64 * sample_rate_hz as u64) % 1000 != 0 {
            return Err(Error::config(
                "sample_rate_hz",
                format!("{frame_len_ms} ms is not an integer number of samples at {sample_rate_hz} Hz"),
            ));
        }
        Ok(Self { frame_len_ms, sample_rate_hz })
    }

    pub fn frame_samples(&self) -> usize {
        (self.frame_len_ms as usize * self.sample_rate_hz as usize) / 1000
    }

    pub fn hop_samples(&self) -> usize {
        self.frame_samples() / 2
    }

    pub fn fft_size(&self) -> usize {
        self.frame_samples().next_power_of_two()
    }

    pub fn bins(&self) -> usize {
        self.fft_size() / 2 + 1
    }

    /// Number of complete frames in a signal of `len` samples.
    pub fn frame_count(&self, len: usize) -> usize {
        let frame = self.frame_samples();
        if len < frame {
            0
        } else {
            (len - frame) / self.hop_samples() + 1
        }
    }
}

impl Default for StftConfig {
    fn default() -> Self {
        Self { frame_len_ms: 32, sample_rate_hz: DEFAULT_SAMPLE_RATE }
    }
}

/// One-sided complex STFT, row-major `frames x bins`.
#[derive(Debug, Clone)]
pub struct ComplexFrames {
    pub data: Vec<Complex64>,
    pub frames: usize,
    pub bins: usize,
    pub hop_samples: usize,
    pub frame_samples: usize,
    pub sample_rate_hz: u32,
    pub start_sample: usize,
}

impl ComplexFrames {
    pub fn frame(&self, t: usize) -> &[Complex64] {
        &self.data[t * self.bins..(t + 1) * self.bins]
    }
}

/// Log-magnitude spectrogram in dB, row-major `frames x bins`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrogram {
    pub values: Vec<f64>,
    pub frames: usize,
    pub bins: usize,
    pub hop_samples: usize,
    pub frame_samples: usize,
    pub sample_rate_hz: u32,
    pub start_sample: usize,
}

impl Spectrogram {
    pub fn frame(&self, t: usize) -> &[f64] {
        &self.values[t * self.bins..(t + 1) * self.bins]
    }

    pub fn at(&self, t: usize, k: usize) -> f64 {
        self.values[t * self.bins + k]
    }

    /// Frames `[start, start + n)` as a new spectrogram.
    pub fn frames_range(&self, start: usize, n: usize) -> Spectrogram {
        assert!(start + n <= self.frames, "frame range out of bounds");
        Spectrogram {
            values: self.values[start * self.bins..(start + n) * self.bins].to_vec(),
            frames: n,
            bins: self.bins,
            hop_samples: self.hop_samples,
            frame_samples: self.frame_samples,
            sample_rate_hz: self.sample_rate_hz,
            start_sample: self.start_sample + start * self.hop_samples,
        }
    }

    /// Absolute sample index of the first sample of frame `t`.
    pub fn frame_start_sample(&self, t: usize) -> usize {
        self.start_sample + t * self.hop_samples
    }
}

/// Forward and inverse transforms of one power-of-two size.
#[derive(Clone)]
pub struct FftPlan {
    size: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FftPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftPlan").field("size", &self.size).finish()
    }
}

impl FftPlan {
    pub fn new(size: usize) -> Result<Self> {
        if size == 0 || !size.is_power_of_two() {
            return Err(Error::NotPowerOfTwo(size));
        }
        let mut planner = FftPlanner::new();
        Ok(Self { size, forward: planner.plan_fft_forward(size), inverse: planner.plan_fft_inverse(size) })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn forward(&self, buf: &mut [Complex64]) {
        assert_eq!(buf.len(), self.size, "buffer length must equal plan size");
        self.forward.process(buf);
    }

    /// Inverse transform including the `1/size` normalisation.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        assert_eq!(buf.len(), self.size, "buffer length must equal plan size");
        self.inverse.process(buf);
        let scale = 1.0 / self.size as f64;
        for v in buf.iter_mut() {
            *v *= scale;
        }
    }
}

/// Forward DFT of `x` zero-padded (or truncated) to `size`, which must be a
/// power of two.
pub fn fft(x: &[Complex64], size: usize) -> Result<Vec<Complex64>> {
    let plan = FftPlan::new(size)?;
    let mut buf = vec![Complex64::new(0.0, 0.0); size];
    let n = x.len().min(size);
    buf[..n].copy_from_slice(&x[..n]);
    plan.forward(&mut buf);
    Ok(buf)
}

/// Periodic Hann window; sums to a constant under 50% overlap-add.
pub fn hann(len: usize) -> Vec<f64> {
    (0..len).map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos()).collect()
}

pub fn stft(w: &Waveform, cfg: &StftConfig) -> Result<ComplexFrames> {
    let frame = cfg.frame_samples();
    if w.len() < frame {
        return Err(Error::InputTooShort { needed: frame, got: w.len() });
    }
    let hop = cfg.hop_samples();
    let size = cfg.fft_size();
    let bins = cfg.bins();
    let frames = cfg.frame_count(w.len());
    let plan = FftPlan::new(size)?;
    let window = hann(frame);
    let mut data = Vec::with_capacity(frames * bins);
    let mut buf = vec![Complex64::new(0.0, 0.0); size];
    for t in 0..frames {
        let seg = &w.samples[t * hop..t * hop + frame];
        for (i, slot) in buf.iter_mut().enumerate() {
            *slot = if i < frame { Complex64::new(seg[i] * window[i], 0.0) } else { Complex64::new(0.0, 0.0) };
        }
        plan.forward(&mut buf);
        data.extend_from_slice(&buf[..bins]);
    }
    Ok(ComplexFrames {
        data,
        frames,
        bins,
        hop_samples: hop,
        frame_samples: frame,
        sample_rate_hz: w.sample_rate_hz,
        start_sample: 0,
    })
}

pub fn magnitude_to_db(mag: f64) -> f64 {
    (20.0 * mag.max(MAGNITUDE_FLOOR).log10()).max(DB_FLOOR)
}

pub fn log_magnitude(frames: &ComplexFrames) -> Spectrogram {
    Spectrogram {
        values: frames.data.iter().map(|c| magnitude_to_db(c.norm())).collect(),
        frames: frames.frames,
        bins: frames.bins,
        hop_samples: frames.hop_samples,
        frame_samples: frames.frame_samples,
        sample_rate_hz: frames.sample_rate_hz,
        start_sample: frames.start_sample,
    }
}

/// STFT followed by dB conversion.
pub fn spectrogram(w: &Waveform, cfg: &StftConfig) -> Result<Spectrogram> {
    Ok(log_magnitude(&stft(w, cfg)?))
}

/// Linear convolution of `signal` with `kernel` by FFT overlap-add.
/// Output length is `signal.len()`; the tail past the input is dropped.
pub fn fft_convolve(signal: &[f64], kernel: &[f64]) -> Vec<f64> {
    let n = signal.len();
    let mut out = vec![0.0; n];
    let klen = kernel.iter().rposition(|&v| v != 0.0).map_or(0, |i| i + 1);
    if n == 0 || klen == 0 {
        return out;
    }
    let kernel = &kernel[..klen];
    if klen <= 32 {
        for (j, &k) in kernel.iter().enumerate() {
            if k == 0.0 {
                continue;
            }
            for i in j..n {
                out[i] += k * signal[i - j];
            }
        }
        return out;
    }
    let size = (4 * klen).next_power_of_two().max(4096);
    let block = size - klen + 1;
    let plan = FftPlan::new(size).expect("power of two");
    let mut kspec = vec![Complex64::new(0.0, 0.0); size];
    for (slot, &k) in kspec.iter_mut().zip(kernel) {
        *slot = Complex64::new(k, 0.0);
    }
    plan.forward(&mut kspec);
    let mut buf = vec![Complex64::new(0.0, 0.0); size];
    let mut start = 0;
    while start < n {
        let end = (start + block).min(n);
        for (i, slot) in buf.iter_mut().enumerate() {
            let idx = start + i;
            *slot = if idx < end { Complex64::new(signal[idx], 0.0) } else { Complex64::new(0.0, 0.0) };
        }
        plan.forward(&mut buf);
        for (b, k) in buf.iter_mut().zip(&kspec) {
            *b *= k;
        }
        plan.inverse(&mut buf);
        for (i, v) in buf.iter().enumerate() {
            let idx = start + i;
            if idx >= n {
                break;
            }
            out[idx] += v.re;
        }
        start = end;
    }
    out
}
