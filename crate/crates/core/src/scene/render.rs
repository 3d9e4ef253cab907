use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::mix::{apply_clock_drift, mix_at_snr, pink_noise, white_noise};
use super::room::{Point, RirRequest, RoomSpec};
use super::speech::synth_speech_surrogate;
use crate::drops::DropEvent;
use crate::error::{Error, Result};
use crate::rng;
use crate::signal::{fft_convolve, Waveform, DEFAULT_SAMPLE_RATE};
use crate::wav;

pub const SCENE_SCHEMA_VERSION: u32 = 1;
pub const MICS_PER_DEVICE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Speech,
    Noise,
}

/// Where a source's dry signal comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SignalSpec {
    Speech { seed: u64 },
    PinkNoise { seed: u64 },
    WhiteNoise { seed: u64 },
    /// First channel of a WAV file, looped or truncated to the scene length.
    Wav { path: PathBuf },
}

impl SignalSpec {
    pub fn resolve(&self, len: usize, sample_rate_hz: u32) -> Result<Waveform> {
        Ok(match self {
            SignalSpec::Speech { seed } => {
                let mut w = synth_speech_surrogate(len as f64 / sample_rate_hz as f64, sample_rate_hz, *seed);
                w.samples.resize(len, 0.0);
                w
            }
            SignalSpec::PinkNoise { seed } => pink_noise(len, sample_rate_hz, *seed),
            SignalSpec::WhiteNoise { seed } => white_noise(len, sample_rate_hz, *seed),
            SignalSpec::Wav { path } => {
                let chans = wav::read(path)?;
                let src = chans.into_iter().next().ok_or_else(|| Error::Wav("no channels".into()))?;
                if src.sample_rate_hz != sample_rate_hz {
                    return Err(Error::config("sources.signal.path", "sample rate differs from scene"));
                }
                if src.is_empty() {
                    return Err(Error::config("sources.signal.path", "empty file"));
                }
                let samples = (0..len).map(|i| src.samples[i % src.len()]).collect();
                Waveform { samples, sample_rate_hz }
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub position: Point,
    pub kind: SourceKind,
    #[serde(default = "one")]
    pub gain: f64,
    pub signal: SignalSpec,
    /// Cardioid directivity axis; omnidirectional when absent.
    #[serde(default)]
    pub directivity_axis: Option<Point>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceSpec {
    pub device_id: u32,
    pub mic_positions: Vec<Point>,
    #[serde(default)]
    pub clock_drift_ppm: f64,
    /// Cardioid microphone axis shared by the device's capsules.
    #[serde(default)]
    pub mic_axis: Option<Point>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    #[serde(default = "default_rate")]
    pub sample_rate_hz: u32,
    pub room: RoomSpec,
    pub devices: Vec<DeviceSpec>,
    pub sources: Vec<SourceSpec>,
    pub duration_s: f64,
    /// SNR of speech against all noise contributions; no noise when absent.
    #[serde(default)]
    pub snr_db: Option<f64>,
    /// Power of independent per-channel pink noise relative to the point
    /// noise image, added before SNR scaling.
    #[serde(default)]
    pub diffuse_noise_ratio: f64,
    /// Used to size impulse responses; the room's reflection coefficients are
    /// taken as given.
    #[serde(default)]
    pub target_t60_s: Option<f64>,
    #[serde(default = "default_order")]
    pub max_reflection_order: u32,
    #[serde(default)]
    pub seed: u64,
}

fn schema_version() -> u32 {
    SCENE_SCHEMA_VERSION
}
fn default_rate() -> u32 {
    DEFAULT_SAMPLE_RATE
}
fn default_order() -> u32 {
    6
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCENE_SCHEMA_VERSION {
            return Err(Error::config("schema_version", format!("unsupported version {}", self.schema_version)));
        }
        if self.sample_rate_hz == 0 {
            return Err(Error::config("sample_rate_hz", "must be positive"));
        }
        self.room.validate()?;
        if self.devices.is_empty() {
            return Err(Error::config("devices", "at least one device is required"));
        }
        for (i, d) in self.devices.iter().enumerate() {
            if d.mic_positions.len() != MICS_PER_DEVICE {
                return Err(Error::config(
                    format!("devices[{i}].mic_positions"),
                    format!("expected {MICS_PER_DEVICE} microphones, got {}", d.mic_positions.len()),
                ));
            }
            if let Some(j) = d.mic_positions.iter().position(|p| !self.room.contains(p)) {
                return Err(Error::config(format!("devices[{i}].mic_positions[{j}]"), "outside the room"));
            }
            if d.clock_drift_ppm.abs() > 100.0 {
                return Err(Error::config(format!("devices[{i}].clock_drift_ppm"), "must lie in [-100, 100]"));
            }
            if self.devices[..i].iter().any(|o| o.device_id == d.device_id) {
                return Err(Error::config(format!("devices[{i}].device_id"), "duplicate id"));
            }
        }
        if self.sources.is_empty() {
            return Err(Error::config("sources", "at least one source is required"));
        }
        if let Some(i) = self.sources.iter().position(|s| !self.room.contains(&s.position)) {
            return Err(Error::config(format!("sources[{i}].position"), "outside the room"));
        }
        if !self.sources.iter().any(|s| s.kind == SourceKind::Speech) {
            return Err(Error::config("sources", "at least one speech source is required"));
        }
        if !(self.duration_s > 0.0) {
            return Err(Error::config("duration_s", "must be positive"));
        }
        if self.diffuse_noise_ratio < 0.0 {
            return Err(Error::config("diffuse_noise_ratio", "must be non-negative"));
        }
        Ok(())
    }

    pub fn len_samples(&self) -> usize {
        (self.duration_s * self.sample_rate_hz as f64).round() as usize
    }

    fn rir_len(&self) -> usize {
        let t60 = self.target_t60_s.unwrap_or(0.8);
        ((t60 * self.sample_rate_hz as f64).ceil() as usize).max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceRecording {
    pub device_id: u32,
    pub channels: Vec<Waveform>,
}

impl DeviceRecording {
    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Waveform::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Ground truth written next to rendered audio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneGroundTruth {
    pub schema_version: u32,
    pub sample_rate_hz: u32,
    pub source_positions: Vec<Point>,
    pub source_kinds: Vec<SourceKind>,
    /// Direct-path delay in samples, indexed `[device][mic][source]`.
    pub direct_delays: Vec<Vec<Vec<usize>>>,
    pub device_ids: Vec<u32>,
    pub mic_positions: Vec<Vec<Point>>,
    pub clock_drift_ppm: Vec<f64>,
    pub snr_db: Option<f64>,
    pub drops: Vec<DropEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderedScene {
    pub devices: Vec<DeviceRecording>,
    pub ground_truth: SceneGroundTruth,
}

impl RenderedScene {
    pub fn device_index(&self, device_id: u32) -> Option<usize> {
        self.devices.iter().position(|d| d.device_id == device_id)
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.ground_truth.sample_rate_hz
    }
}

fn distance(a: &Point, b: &Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Render every device channel. Each channel is a pure function of the
/// config; per-channel random streams derive from `cfg.seed`.
pub fn render_scene(cfg: &SceneConfig) -> Result<RenderedScene> {
    cfg.validate()?;
    let fs = cfg.sample_rate_hz;
    let len = cfg.len_samples();
    let rir_len = cfg.rir_len();
    let dry: Vec<Waveform> = cfg
        .sources
        .iter()
        .map(|s| {
            let mut w = s.signal.resolve(len, fs)?;
            w.samples.iter_mut().for_each(|v| *v *= s.gain);
            Ok(w)
        })
        .collect::<Result<_>>()?;

    let mut devices = Vec::with_capacity(cfg.devices.len());
    let mut direct_delays = Vec::with_capacity(cfg.devices.len());
    for (di, dev) in cfg.devices.iter().enumerate() {
        let mut channels = Vec::with_capacity(MICS_PER_DEVICE);
        let mut delays = Vec::with_capacity(MICS_PER_DEVICE);
        for (mi, mic) in dev.mic_positions.iter().enumerate() {
            let mut speech = vec![0.0; len];
            let mut noise = vec![0.0; len];
            let mut mic_delays = Vec::with_capacity(cfg.sources.len());
            for (src, sig) in cfg.sources.iter().zip(&dry) {
                let d = distance(&src.position, mic);
                mic_delays.push((d / cfg.room.speed_of_sound * fs as f64).round() as usize);
                let rir = RirRequest {
                    room: &cfg.room,
                    source: src.position,
                    mic: *mic,
                    max_order: cfg.max_reflection_order,
                    rir_len,
                    sample_rate_hz: fs,
                    source_axis: src.directivity_axis,
                    mic_axis: dev.mic_axis,
                }
                .render()?;
                let wet = fft_convolve(&sig.samples, &rir.samples);
                let acc = if src.kind == SourceKind::Speech { &mut speech } else { &mut noise };
                acc.iter_mut().zip(&wet).for_each(|(a, w)| *a += w);
            }
            delays.push(mic_delays);
            let speech = Waveform { samples: speech, sample_rate_hz: fs };
            let mut channel = match cfg.snr_db {
                Some(snr) => {
                    let mut noise = Waveform { samples: noise, sample_rate_hz: fs };
                    if cfg.diffuse_noise_ratio > 0.0 {
                        let seed = rng::derive_path(cfg.seed, &[0xd1ff, di as u64, mi as u64]);
                        let diffuse = pink_noise(len, fs, seed);
                        let point_power = noise.power();
                        let reference = if point_power > 0.0 { point_power } else { speech.power() };
                        let g = (cfg.diffuse_noise_ratio * reference / diffuse.power().max(1e-300)).sqrt();
                        noise.samples.iter_mut().zip(&diffuse.samples).for_each(|(n, d)| *n += g * d);
                    }
                    mix_at_snr(&speech, &noise, snr)?
                }
                None => speech,
            };
            channel = apply_clock_drift(&channel, dev.clock_drift_ppm)?;
            channels.push(channel);
        }
        direct_delays.push(delays);
        devices.push(DeviceRecording { device_id: dev.device_id, channels });
    }
    Ok(RenderedScene {
        devices,
        ground_truth: SceneGroundTruth {
            schema_version: SCENE_SCHEMA_VERSION,
            sample_rate_hz: fs,
            source_positions: cfg.sources.iter().map(|s| s.position).collect(),
            source_kinds: cfg.sources.iter().map(|s| s.kind).collect(),
            direct_delays,
            device_ids: cfg.devices.iter().map(|d| d.device_id).collect(),
            mic_positions: cfg.devices.iter().map(|d| d.mic_positions.clone()).collect(),
            clock_drift_ppm: cfg.devices.iter().map(|d| d.clock_drift_ppm).collect(),
            snr_db: cfg.snr_db,
            drops: Vec::new(),
        },
    })
}
