use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::render::{DeviceSpec, SceneConfig, SignalSpec, SourceKind, SourceSpec, SCENE_SCHEMA_VERSION};
use super::room::{t60_to_reflection, Point, RoomSpec};
use crate::error::Result;
use crate::rng;
use crate::signal::DEFAULT_SAMPLE_RATE;

/// Capsule offsets (m) along the array axis of a Kinect-style linear array.
pub const KINECT_MIC_OFFSETS: [f64; 4] = [-0.113, 0.036, 0.076, 0.113];

/// Random scene generator covering rooms, device layouts, talkers, noise
/// sources, directivity, T60 and SNR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSampler {
    pub n_devices: usize,
    pub duration_s: (f64, f64),
    pub snr_db: (f64, f64),
    pub t60_s: (f64, f64),
    pub room_x: (f64, f64),
    pub room_y: (f64, f64),
    pub room_z: (f64, f64),
    pub max_talkers: usize,
    pub drift_ppm: f64,
    pub max_reflection_order: u32,
    pub diffuse_noise_ratio: (f64, f64),
    /// Probability of a cardioid talker / cardioid microphones.
    pub directional_prob: f64,
    pub sample_rate_hz: u32,
}

impl Default for SceneSampler {
    fn default() -> Self {
        Self {
            n_devices: 6,
            duration_s: (5.0, 15.0),
            snr_db: (5.0, 25.0),
            t60_s: (0.4, 0.8),
            room_x: (5.0, 9.0),
            room_y: (4.0, 8.0),
            room_z: (2.6, 3.5),
            max_talkers: 2,
            drift_ppm: 50.0,
            max_reflection_order: 6,
            diffuse_noise_ratio: (0.0, 0.3),
            directional_prob: 0.3,
            sample_rate_hz: DEFAULT_SAMPLE_RATE,
        }
    }
}

fn uniform(r: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        r.gen_range(lo..hi)
    } else {
        lo
    }
}

fn horizontal_axis(r: &mut impl Rng) -> Point {
    let a = r.gen_range(0.0..2.0 * PI);
    [a.cos(), a.sin(), 0.0]
}

impl SceneSampler {
    pub fn sample(&self, seed: u64) -> Result<SceneConfig> {
        let mut r = rng::rng_at(seed, &[0x5ce7e]);
        let dims = [uniform(&mut r, self.room_x), uniform(&mut r, self.room_y), uniform(&mut r, self.room_z)];
        let t60 = uniform(&mut r, self.t60_s);
        let mut room = RoomSpec::new(dims, [0.5; 6])?;
        room.wall_reflection = t60_to_reflection(&room, t60)?;
        let margin = 0.5;
        let point = |r: &mut rng::Rng, z: (f64, f64)| -> Point {
            [
                r.gen_range(margin..dims[0] - margin),
                r.gen_range(margin..dims[1] - margin),
                uniform(r, z),
            ]
        };
        let directional = r.gen_bool(self.directional_prob);
        let devices = (0..self.n_devices)
            .map(|k| {
                let centre = point(&mut r, (0.6, 2.0));
                let a = r.gen_range(0.0..PI);
                let axis = [a.cos(), a.sin()];
                let mic_positions = KINECT_MIC_OFFSETS
                    .iter()
                    .map(|o| [centre[0] + o * axis[0], centre[1] + o * axis[1], centre[2]])
                    .collect();
                DeviceSpec {
                    device_id: k as u32 + 1,
                    mic_positions,
                    clock_drift_ppm: uniform(&mut r, (-self.drift_ppm, self.drift_ppm)),
                    mic_axis: if directional { Some(horizontal_axis(&mut r)) } else { None },
                }
            })
            .collect::<Vec<_>>();
        let n_talkers = r.gen_range(1..=self.max_talkers.max(1));
        let mut sources = Vec::new();
        for t in 0..n_talkers {
            let directivity_axis = if directional { Some(horizontal_axis(&mut r)) } else { None };
            sources.push(SourceSpec {
                position: point(&mut r, (1.1, 1.8)),
                kind: SourceKind::Speech,
                gain: if t == 0 { 1.0 } else { r.gen_range(0.4..1.0) },
                signal: SignalSpec::Speech { seed: rng::derive_path(seed, &[0x7a1c, t as u64]) },
                directivity_axis,
            });
        }
        let noise_seed = rng::derive_path(seed, &[0x0015e]);
        sources.push(SourceSpec {
            position: point(&mut r, (0.3, 2.2)),
            kind: SourceKind::Noise,
            gain: 1.0,
            signal: if r.gen_bool(0.5) {
                SignalSpec::PinkNoise { seed: noise_seed }
            } else {
                SignalSpec::WhiteNoise { seed: noise_seed }
            },
            directivity_axis: None,
        });
        Ok(SceneConfig {
            schema_version: SCENE_SCHEMA_VERSION,
            sample_rate_hz: self.sample_rate_hz,
            room,
            devices,
            sources,
            duration_s: (uniform(&mut r, self.duration_s) * 10.0).round() / 10.0,
            snr_db: Some(uniform(&mut r, self.snr_db)),
            diffuse_noise_ratio: uniform(&mut r, self.diffuse_noise_ratio),
            target_t60_s: Some(t60),
            max_reflection_order: self.max_reflection_order,
            seed,
        })
    }
}
