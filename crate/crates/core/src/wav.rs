//! PCM 16-bit little-endian WAV files with the canonical 44-byte header.
//!
//! Samples are scaled by 1/32768 on read; on write they are scaled by 32768,
//! rounded and clamped to the i16 range.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::signal::Waveform;

pub fn to_pcm16(v: f64) -> i16 {
    (v * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

pub fn from_pcm16(v: i16) -> f64 {
    v as f64 / 32768.0
}

/// Encode equal-length channels as an interleaved PCM16 WAV byte stream.
pub fn encode(channels: &[Waveform]) -> Result<Vec<u8>> {
    let first = channels.first().ok_or_else(|| Error::Wav("no channels".into()))?;
    let rate = first.sample_rate_hz;
    let len = first.len();
    for ch in channels {
        if ch.len() != len {
            return Err(Error::LengthMismatch(len, ch.len()));
        }
        if ch.sample_rate_hz != rate {
            return Err(Error::Wav("channels disagree on sample rate".into()));
        }
    }
    let n_ch = channels.len() as u16;
    let block_align = n_ch as u32 * 2;
    let data_len = len as u32 * block_align;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&n_ch.to_le_bytes());
    out.extend_from_slice(&rate.to_le_bytes());
    out.extend_from_slice(&(rate * block_align).to_le_bytes());
    out.extend_from_slice(&(block_align as u16).to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for i in 0..len {
        for ch in channels {
            out.extend_from_slice(&to_pcm16(ch.samples[i]).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<Vec<Waveform>> {
    let bad = |m: &str| Error::Wav(m.to_string());
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(bad("not a RIFF/WAVE file"));
    }
    let u16_at = |i: usize| u16::from_le_bytes([bytes[i], bytes[i + 1]]);
    let u32_at = |i: usize| u32::from_le_bytes([bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]]);
    let mut pos = 12;
    let mut fmt: Option<(u16, u32)> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(pos + 4) as usize;
        let body = pos + 8;
        if body + size > bytes.len() {
            return Err(bad("truncated chunk"));
        }
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(bad("short fmt chunk"));
                }
                if u16_at(body) != 1 {
                    return Err(bad("only PCM format is supported"));
                }
                if u16_at(body + 14) != 16 {
                    return Err(bad("only 16-bit samples are supported"));
                }
                fmt = Some((u16_at(body + 2), u32_at(body + 4)));
            }
            b"data" => {
                let (n_ch, rate) = fmt.ok_or_else(|| bad("data chunk before fmt chunk"))?;
                if n_ch == 0 || rate == 0 {
                    return Err(bad("zero channels or sample rate"));
                }
                let n_ch = n_ch as usize;
                let frames = size / (2 * n_ch);
                let mut channels = vec![Vec::with_capacity(frames); n_ch];
                for f in 0..frames {
                    for (c, ch) in channels.iter_mut().enumerate() {
                        let i = body + 2 * (f * n_ch + c);
                        ch.push(from_pcm16(i16::from_le_bytes([bytes[i], bytes[i + 1]])));
                    }
                }
                return Ok(channels.into_iter().map(|s| Waveform { samples: s, sample_rate_hz: rate }).collect());
            }
            _ => {}
        }
        pos = body + size + (size & 1);
    }
    Err(bad("missing data chunk"))
}

pub fn write(path: impl AsRef<Path>, channels: &[Waveform]) -> Result<()> {
    let bytes = encode(channels)?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn read(path: impl AsRef<Path>) -> Result<Vec<Waveform>> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_is_canonical() {
        let ch = vec![Waveform::zeros(10, 16_000); 4];
        let bytes = encode(&ch).unwrap();
        assert_eq!(bytes.len(), 44 + 10 * 4 * 2);
        assert_eq!(&bytes[36..40], b"data");
        assert_eq!(u16::from_le_bytes([bytes[22], bytes[23]]), 4);
        assert_eq!(u32::from_le_bytes([bytes[28], bytes[29], bytes[30], bytes[31]]), 16_000 * 8);
    }

    #[test]
    fn amplitude_scaling() {
        assert_eq!(to_pcm16(1.0), 32767);
        assert_eq!(to_pcm16(-1.0), -32768);
        assert_eq!(from_pcm16(-32768), -1.0);
        assert_eq!(to_pcm16(0.5), 16384);
    }

    #[test]
    fn rejects_garbage() {
        assert!(decode(b"RIFX0000WAVE").is_err());
        assert!(encode(&[]).is_err());
    }

    proptest! {
        #[test]
        fn quantized_samples_round_trip(vals in prop::collection::vec(-32768i16..=32767, 1..200), n_ch in 1usize..5) {
            let chans: Vec<Waveform> = (0..n_ch)
                .map(|c| Waveform { samples: vals.iter().map(|&v| from_pcm16(v.wrapping_add(c as i16))).collect(), sample_rate_hz: 16_000 })
                .collect();
            let back = decode(&encode(&chans).unwrap()).unwrap();
            prop_assert_eq!(back, chans);
        }
    }
}
