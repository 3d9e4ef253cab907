//! Speech-like source material: a glottal pulse train shaped by a parallel
//! bank of time-varying formant resonators, interleaved with unvoiced noise
//! bursts and silent pauses.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::rng;
use crate::signal::Waveform;

const PEAK: f64 = 0.5;

/// Per-speaker parameters drawn from a seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeechParams {
    pub f0_hz: f64,
    /// Nominal formant centre frequencies (2 to 4 of them).
    pub formants_hz: Vec<f64>,
    pub bandwidths_hz: Vec<f64>,
    pub pause_fraction: f64,
}

impl SpeechParams {
    pub fn from_seed(seed: u64) -> Self {
        let mut r = rng::rng_at(seed, &[0x5_0ee_c4]);
        let n = r.gen_range(2..=4);
        let ranges = [(400.0, 700.0), (1100.0, 1800.0), (2300.0, 2900.0), (3300.0, 3900.0)];
        let formants_hz = ranges[..n].iter().map(|&(lo, hi)| r.gen_range(lo..hi)).collect();
        let bandwidths_hz = (0..n).map(|i| r.gen_range(60.0..100.0) * (1.0 + 0.3 * i as f64)).collect();
        Self {
            f0_hz: r.gen_range(90.0..220.0),
            formants_hz,
            bandwidths_hz,
            pause_fraction: r.gen_range(0.2..0.4),
        }
    }
}

/// Two-pole resonator with unit gain at its centre frequency.
struct Resonator {
    y1: f64,
    y2: f64,
}

impl Resonator {
    fn step(&mut self, x: f64, freq: f64, bw: f64, fs: f64) -> f64 {
        let r = (-PI * bw / fs).exp();
        let theta = 2.0 * PI * freq / fs;
        let a1 = 2.0 * r * theta.cos();
        let a2 = -r * r;
        let gain = (1.0 - r) * (1.0 - 2.0 * r * (2.0 * theta).cos() + r * r).sqrt();
        let y = gain * x + a1 * self.y1 + a2 * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

fn envelope(i: usize, len: usize) -> f64 {
    let ramp = (len / 5).max(1);
    if i < ramp {
        0.5 - 0.5 * (PI * i as f64 / ramp as f64).cos()
    } else if i >= len - ramp {
        0.5 - 0.5 * (PI * (len - i) as f64 / ramp as f64).cos()
    } else {
        1.0
    }
}

/// Segments are scaled to a target RMS so that the cascade gain of a given
/// formant set does not decide the voiced/unvoiced balance.
fn add_at_rms(out: &mut [f64], seg: &[f64], rms: f64) {
    let cur = (seg.iter().map(|v| v * v).sum::<f64>() / seg.len().max(1) as f64).sqrt();
    if cur > 0.0 {
        for (o, v) in out.iter_mut().zip(seg) {
            *o += v * rms / cur;
        }
    }
}

pub fn synth_speech_surrogate(duration_s: f64, sample_rate_hz: u32, seed: u64) -> Waveform {
    let params = SpeechParams::from_seed(seed);
    let fs = sample_rate_hz as f64;
    let total = (duration_s.max(0.0) * fs).round() as usize;
    let mut r = rng::rng_at(seed, &[0x5_0ee_c5]);
    let mut out = vec![0.0; total];
    let mut resonators: Vec<Resonator> = params.formants_hz.iter().map(|_| Resonator { y1: 0.0, y2: 0.0 }).collect();
    let mut hiss = Resonator { y1: 0.0, y2: 0.0 };
    let mut pos = 0usize;
    let mut paused = 0usize;
    let mut phase = 0.0f64;
    let mut tilt = 0.0f64;
    // Start with a short lead-in pause so onsets are not flush with t = 0.
    let lead = (r.gen_range(0.05..0.2) * fs) as usize;
    pos += lead.min(total);
    paused += lead.min(total);
    while pos < total {
        if (paused as f64) < params.pause_fraction * pos as f64 {
            let len = ((r.gen_range(0.1..0.4) * fs) as usize).min(total - pos);
            pos += len;
            paused += len;
            continue;
        }
        if r.gen_bool(0.7) {
            let len = ((r.gen_range(0.08..0.3) * fs) as usize).min(total - pos);
            let f0_start = (params.f0_hz * r.gen_range(0.85..1.15)).clamp(80.0, 250.0);
            let f0_end = (f0_start * r.gen_range(0.85..1.15)).clamp(80.0, 250.0);
            let shifts: Vec<(f64, f64)> =
                params.formants_hz.iter().map(|_| (r.gen_range(0.96..1.04), r.gen_range(0.96..1.04))).collect();
            let level = r.gen_range(0.5..1.0);
            let mut seg = vec![0.0; len];
            for i in 0..len {
                let frac = i as f64 / len as f64;
                let f0 = f0_start + (f0_end - f0_start) * frac;
                phase += f0 / fs;
                // Glottal excitation: impulse per period through a one-pole
                // low-pass for spectral tilt.
                let pulse = if phase >= 1.0 {
                    phase -= 1.0;
                    1.0
                } else {
                    0.0
                };
                tilt = 0.7 * tilt + pulse;
                let mut y = 0.0;
                let mut amp = 1.0;
                for ((res, (&f, &bw)), &(s0, s1)) in resonators
                    .iter_mut()
                    .zip(params.formants_hz.iter().zip(&params.bandwidths_hz))
                    .zip(&shifts)
                {
                    y += amp * res.step(tilt, f * (s0 + (s1 - s0) * frac), bw, fs);
                    amp *= 0.6;
                }
                seg[i] = envelope(i, len) * y;
            }
            add_at_rms(&mut out[pos..pos + len], &seg, level);
            pos += len;
        } else {
            let len = ((r.gen_range(0.04..0.12) * fs) as usize).min(total - pos);
            let centre = r.gen_range(3000.0..5000.0f64).min(0.45 * fs);
            let level = r.gen_range(0.05..0.2);
            let seg: Vec<f64> = (0..len)
                .map(|i| {
                    let n: f64 = r.sample(StandardNormal);
                    envelope(i, len) * hiss.step(n, centre, 800.0, fs)
                })
                .collect();
            add_at_rms(&mut out[pos..pos + len], &seg, level);
            pos += len;
        }
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        out.iter_mut().for_each(|v| *v *= PEAK / peak);
    }
    Waveform { samples: out, sample_rate_hz }
}
