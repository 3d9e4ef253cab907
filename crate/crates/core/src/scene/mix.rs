use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng;
use crate::signal::Waveform;

/// `clean + g * noise` with `g` set so that `10 log10(P_clean / P_gnoise)`
/// equals `snr_db`, powers measured as mean square over the full length.
pub fn mix_at_snr(clean: &Waveform, noise: &Waveform, snr_db: f64) -> Result<Waveform> {
    if clean.len() != noise.len() {
        return Err(Error::LengthMismatch(clean.len(), noise.len()));
    }
    let pc = clean.power();
    let pn = noise.power();
    if pc == 0.0 {
        return Err(Error::ZeroPower("clean"));
    }
    if pn == 0.0 {
        return Err(Error::ZeroPower("noise"));
    }
    let g = (pc / (pn * 10f64.powf(snr_db / 10.0))).sqrt();
    let samples = clean.samples.iter().zip(&noise.samples).map(|(c, n)| c + g * n).collect();
    Ok(Waveform { samples, sample_rate_hz: clean.sample_rate_hz })
}

/// Resample by `1 + drift_ppm * 1e-6` with linear interpolation. A positive
/// drift models a device clock running slow relative to the nominal rate, so
/// the recording comes out shorter.
pub fn apply_clock_drift(w: &Waveform, drift_ppm: f64) -> Result<Waveform> {
    if drift_ppm.abs() > 1000.0 {
        return Err(Error::config("clock_drift_ppm", "magnitude must not exceed 1000 ppm"));
    }
    if drift_ppm == 0.0 {
        return Ok(w.clone());
    }
    let ratio = 1.0 + drift_ppm * 1e-6;
    let n = w.len();
    let out_len = (n as f64 / ratio).round() as usize;
    let x = &w.samples;
    let samples = (0..out_len)
        .map(|i| {
            let pos = i as f64 * ratio;
            let i0 = pos.floor() as usize;
            let frac = pos - i0 as f64;
            let a = x.get(i0).copied().unwrap_or(0.0);
            let b = x.get(i0 + 1).copied().unwrap_or(0.0);
            a + frac * (b - a)
        })
        .collect();
    Ok(Waveform { samples, sample_rate_hz: w.sample_rate_hz })
}

pub fn white_noise(len: usize, sample_rate_hz: u32, seed: u64) -> Waveform {
    let mut r = rng::rng(seed);
    let samples = (0..len).map(|_| r.sample::<f64, _>(StandardNormal) * 0.1).collect();
    Waveform { samples, sample_rate_hz }
}

/// Pink (1/f) noise from white noise through Paul Kellet's refined filter.
pub fn pink_noise(len: usize, sample_rate_hz: u32, seed: u64) -> Waveform {
    let mut r = rng::rng(seed);
    let mut b = [0.0f64; 7];
    let samples = (0..len)
        .map(|_| {
            let white: f64 = r.sample::<f64, _>(StandardNormal) * 0.1;
            b[0] = 0.99886 * b[0] + white * 0.0555179;
            b[1] = 0.99332 * b[1] + white * 0.0750759;
            b[2] = 0.96900 * b[2] + white * 0.1538520;
            b[3] = 0.86650 * b[3] + white * 0.3104856;
            b[4] = 0.55000 * b[4] + white * 0.5329522;
            b[5] = -0.7616 * b[5] - white * 0.0168980;
            let out = b[0] + b[1] + b[2] + b[3] + b[4] + b[5] + b[6] + white * 0.5362;
            b[6] = white * 0.115926;
            out * 0.2
        })
        .collect();
    Waveform { samples, sample_rate_hz }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::fft;
    use num_complex::Complex64;
    use std::f64::consts::PI;

    fn unit_power(len: usize, seed: u64) -> Waveform {
        let mut w = white_noise(len, 16_000, seed);
        let p = w.power().sqrt();
        w.samples.iter_mut().for_each(|v| *v /= p);
        w
    }

    #[test]
    fn snr_gain_closed_form() {
        let clean = unit_power(4000, 1);
        let noise = unit_power(4000, 2);
        for (snr, g) in [(0.0, 1.0), (20.0, 0.1)] {
            let mixed = mix_at_snr(&clean, &noise, snr).unwrap();
            let recovered = (mixed.samples[17] - clean.samples[17]) / noise.samples[17];
            assert!((recovered - g).abs() < 1e-9);
        }
    }

    #[test]
    fn mixed_snr_is_exact() {
        for seed in 0..20 {
            let clean = white_noise(5000, 16_000, 100 + seed);
            let noise = pink_noise(5000, 16_000, 200 + seed);
            let snr = 5.0 + seed as f64;
            let mixed = mix_at_snr(&clean, &noise, snr).unwrap();
            let residual: Vec<f64> = mixed.samples.iter().zip(&clean.samples).map(|(m, c)| m - c).collect();
            let pr = residual.iter().map(|v| v * v).sum::<f64>() / residual.len() as f64;
            let measured = 10.0 * (clean.power() / pr).log10();
            assert!((measured - snr).abs() < 0.01, "{measured} vs {snr}");
        }
    }

    #[test]
    fn zero_power_is_rejected() {
        let z = Waveform::zeros(10, 16_000);
        let n = white_noise(10, 16_000, 1);
        assert!(matches!(mix_at_snr(&n, &z, 10.0), Err(Error::ZeroPower("noise"))));
        assert!(matches!(mix_at_snr(&z, &n, 10.0), Err(Error::ZeroPower("clean"))));
        assert!(mix_at_snr(&n, &white_noise(11, 16_000, 1), 10.0).is_err());
    }

    #[test]
    fn zero_drift_is_identity() {
        let w = white_noise(1000, 16_000, 3);
        assert_eq!(apply_clock_drift(&w, 0.0).unwrap(), w);
    }

    #[test]
    fn drift_length_arithmetic() {
        let w = Waveform::zeros(16_000_000, 16_000);
        let out = apply_clock_drift(&w, 100.0).unwrap();
        assert!((out.len() as i64 - 15_998_400).abs() <= 1);
    }

    #[test]
    fn drift_scales_frequency() {
        // A tone on an exact bin of a long transform; the resampled tone's
        // peak is located with sub-bin precision by a parabolic fit.
        let n = 1 << 16;
        let f = 1000.0;
        let samples = (0..n + 100).map(|i| (2.0 * PI * f * i as f64 / 16_000.0).sin()).collect();
        let w = Waveform::new(samples, 16_000).unwrap();
        let out = apply_clock_drift(&w, 100.0).unwrap();
        let win: Vec<Complex64> = (0..n)
            .map(|i| Complex64::new(out.samples[i] * (0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()), 0.0))
            .collect();
        let spec = fft(&win, n).unwrap();
        let mags: Vec<f64> = spec[..n / 2].iter().map(|v| v.norm().ln()).collect();
        let k = (1..n / 2 - 1).max_by(|&a, &b| mags[a].partial_cmp(&mags[b]).unwrap()).unwrap();
        let (a, b, c) = (mags[k - 1], mags[k], mags[k + 1]);
        let delta = 0.5 * (a - c) / (a - 2.0 * b + c);
        let est = (k as f64 + delta) * 16_000.0 / n as f64;
        assert!((est / f - 1.0001).abs() < 1e-5, "{}", est / f);
    }

    #[test]
    fn noise_is_deterministic() {
        assert_eq!(pink_noise(100, 16_000, 9), pink_noise(100, 16_000, 9));
        assert_ne!(pink_noise(100, 16_000, 9), pink_noise(100, 16_000, 10));
    }
}
