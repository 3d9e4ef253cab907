//! Sample-drop simulation: excising sample runs from device streams and
//! building labelled hypothesis/reference window pairs.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::RenderedScene;
use crate::signal::Waveform;

/// A contiguous run of samples lost by one device. `onset_sample` is the
/// index, in the device's stream after all its drops are applied, of the
/// first sample following the gap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DropEvent {
    pub device_id: u32,
    pub onset_sample: usize,
    pub duration_samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DurationUnit {
    Milliseconds,
    Samples,
}

/// Left-truncated normal distribution of drop durations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DropDistribution {
    pub mean: f64,
    pub std: f64,
    pub left_cut: f64,
    pub unit: DurationUnit,
}

impl Default for DropDistribution {
    fn default() -> Self {
        Self { mean: 600.0, std: 150.0, left_cut: 50.0, unit: DurationUnit::Milliseconds }
    }
}

impl DropDistribution {
    /// One draw in the distribution's own unit, by rejection.
    pub fn sample_value<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        if !(self.std > 0.0) {
            return Err(Error::config("std", "must be positive"));
        }
        let z = (self.left_cut - self.mean) / self.std;
        if z > 6.0 {
            return Err(Error::DegenerateTruncation(z));
        }
        let normal = Normal::new(self.mean, self.std).map_err(|e| Error::config("std", e.to_string()))?;
        loop {
            let v = normal.sample(rng);
            if v >= self.left_cut {
                return Ok(v);
            }
        }
    }

    pub fn to_samples(&self, value: f64, sample_rate_hz: u32) -> usize {
        let samples = match self.unit {
            DurationUnit::Milliseconds => value * sample_rate_hz as f64 / 1000.0,
            DurationUnit::Samples => value,
        };
        (samples.round() as usize).max(1)
    }

    /// Largest duration (in samples) worth planning for: mean + 4 std.
    pub fn planning_max_samples(&self, sample_rate_hz: u32) -> usize {
        self.to_samples(self.mean + 4.0 * self.std, sample_rate_hz)
    }
}

pub fn sample_duration<R: Rng + ?Sized>(dist: &DropDistribution, sample_rate_hz: u32, rng: &mut R) -> Result<usize> {
    Ok(dist.to_samples(dist.sample_value(rng)?, sample_rate_hz))
}

/// Remove `[onset, onset + duration)` from `w`.
pub fn inject_drop(w: &Waveform, onset: usize, duration: usize) -> Result<Waveform> {
    if duration == 0 || onset.checked_add(duration).map_or(true, |end| end > w.len()) {
        return Err(Error::InvalidInterval { onset, duration, len: w.len() });
    }
    let mut samples = Vec::with_capacity(w.len() - duration);
    samples.extend_from_slice(&w.samples[..onset]);
    samples.extend_from_slice(&w.samples[onset + duration..]);
    Ok(Waveform { samples, sample_rate_hz: w.sample_rate_hz })
}

/// A labelled pair of equal-length windows over the same absolute range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowPair {
    pub hypothesis: Waveform,
    pub reference: Waveform,
    pub label: u8,
    /// Absolute start of both windows in the (pre-drop) source timeline.
    pub start_sample: usize,
    pub drop_offset_in_window: Option<usize>,
    pub drop_duration: Option<usize>,
}

/// Two differently contaminated renderings of one dry source.
#[derive(Debug, Clone, PartialEq)]
pub struct ContaminatedPair {
    pub a: Waveform,
    pub b: Waveform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairWindowing {
    pub window_samples: usize,
    /// The drop point never lies closer than this to either window edge.
    pub edge_guard_samples: usize,
}

impl PairWindowing {
    pub fn one_second(sample_rate_hz: u32) -> Self {
        Self { window_samples: sample_rate_hz as usize, edge_guard_samples: sample_rate_hz as usize / 20 }
    }
}

/// Balanced pair dataset: the first half of the draws are positives, the
/// rest negatives, and the result is shuffled.
pub fn make_pair_dataset<R: Rng + ?Sized>(
    material: &[ContaminatedPair],
    dist: &DropDistribution,
    n_pairs: usize,
    windowing: PairWindowing,
    rng: &mut R,
) -> Result<Vec<WindowPair>> {
    let win = windowing.window_samples;
    if win <= 2 * windowing.edge_guard_samples {
        return Err(Error::config("window_samples", "must exceed twice the edge guard"));
    }
    if material.is_empty() {
        return Err(Error::InsufficientMaterial("no source material".into()));
    }
    for m in material {
        if m.a.len() != m.b.len() {
            return Err(Error::LengthMismatch(m.a.len(), m.b.len()));
        }
    }
    let usable: Vec<&ContaminatedPair> = material.iter().filter(|m| m.a.len() > win).collect();
    if usable.is_empty() {
        return Err(Error::InsufficientMaterial(format!("every source is at most {win} samples long")));
    }
    let fs = usable[0].a.sample_rate_hz;
    let n_pos = n_pairs / 2;
    let mut out = Vec::with_capacity(n_pairs);
    for i in 0..n_pairs {
        let positive = i < n_pos;
        let swap = rng.gen_bool(0.5);
        if positive {
            let mut attempt = 0;
            let (m, dur) = loop {
                let m = usable[rng.gen_range(0..usable.len())];
                let dur = sample_duration(dist, fs, rng)?;
                if m.a.len() > win + dur {
                    break (m, dur);
                }
                attempt += 1;
                if attempt > 1000 {
                    return Err(Error::InsufficientMaterial("sources too short for sampled drop durations".into()));
                }
            };
            let (hyp_src, ref_src) = if swap { (&m.b, &m.a) } else { (&m.a, &m.b) };
            let start = rng.gen_range(0..=m.a.len() - win - dur);
            let offset = rng.gen_range(windowing.edge_guard_samples..=win - windowing.edge_guard_samples);
            let mut hyp = Vec::with_capacity(win);
            hyp.extend_from_slice(&hyp_src.samples[start..start + offset]);
            hyp.extend_from_slice(&hyp_src.samples[start + offset + dur..start + win + dur]);
            out.push(WindowPair {
                hypothesis: Waveform { samples: hyp, sample_rate_hz: fs },
                reference: ref_src.slice(start, win),
                label: 1,
                start_sample: start,
                drop_offset_in_window: Some(offset),
                drop_duration: Some(dur),
            });
        } else {
            let m = usable[rng.gen_range(0..usable.len())];
            let (hyp_src, ref_src) = if swap { (&m.b, &m.a) } else { (&m.a, &m.b) };
            let start = rng.gen_range(0..=m.a.len() - win);
            out.push(WindowPair {
                hypothesis: hyp_src.slice(start, win),
                reference: ref_src.slice(start, win),
                label: 0,
                start_sample: start,
                drop_offset_in_window: None,
                drop_duration: None,
            });
        }
    }
    out.shuffle(rng);
    Ok(out)
}

/// Placement constraints for scene-level drops.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenePlacement {
    /// Minimum distance of a drop from either end of the stream.
    pub edge_guard_samples: usize,
    /// Minimum distance between two drop points of the same device.
    pub min_gap_samples: usize,
    pub max_retries: usize,
}

impl ScenePlacement {
    pub fn for_rate(sample_rate_hz: u32) -> Self {
        Self {
            edge_guard_samples: sample_rate_hz as usize,
            min_gap_samples: 2 * sample_rate_hz as usize,
            max_retries: 200,
        }
    }
}

/// Apply one drop at `onset` (current stream coordinates) to every channel
/// of a device and keep existing events of that device consistent.
pub fn apply_device_drop(scene: &mut RenderedScene, event: DropEvent) -> Result<()> {
    let di = scene
        .device_index(event.device_id)
        .ok_or_else(|| Error::config("device_id", format!("no device {}", event.device_id)))?;
    for ch in scene.devices[di].channels.iter_mut() {
        *ch = inject_drop(ch, event.onset_sample, event.duration_samples)?;
    }
    for e in scene.ground_truth.drops.iter_mut() {
        if e.device_id == event.device_id && e.onset_sample > event.onset_sample {
            e.onset_sample -= event.duration_samples;
        }
    }
    scene.ground_truth.drops.push(event);
    scene.ground_truth.drops.sort_by_key(|e| (e.device_id, e.onset_sample));
    Ok(())
}

/// Inject `n_drops` drops on uniformly chosen devices. Every channel of the
/// chosen device loses the same samples. Returns the new scene and the events
/// added by this call.
pub fn inject_scene_drops<R: Rng + ?Sized>(
    scene: &RenderedScene,
    n_drops: usize,
    dist: &DropDistribution,
    placement: ScenePlacement,
    rng: &mut R,
) -> Result<(RenderedScene, Vec<DropEvent>)> {
    let mut out = scene.clone();
    let fs = scene.sample_rate_hz();
    let mut added = Vec::with_capacity(n_drops);
    for _ in 0..n_drops {
        let mut placed = None;
        for _ in 0..placement.max_retries {
            let di = rng.gen_range(0..out.devices.len());
            let device_id = out.devices[di].device_id;
            let len = out.devices[di].len();
            let dur = sample_duration(dist, fs, rng)?;
            let lo = placement.edge_guard_samples;
            let Some(hi) = len.checked_sub(dur + placement.edge_guard_samples) else { continue };
            if hi <= lo {
                continue;
            }
            let onset = rng.gen_range(lo..hi);
            // Existing drop points of this device, in current coordinates,
            // must stay clear of the excised run plus the gap.
            let clear = out.ground_truth.drops.iter().filter(|e| e.device_id == device_id).all(|e| {
                e.onset_sample + placement.min_gap_samples <= onset
                    || e.onset_sample >= onset + dur + placement.min_gap_samples
            });
            if clear {
                placed = Some(DropEvent { device_id, onset_sample: onset, duration_samples: dur });
                break;
            }
        }
        let event = placed.ok_or(Error::OverlapRetries(placement.max_retries))?;
        apply_device_drop(&mut out, event)?;
        for e in added.iter_mut().filter(|e: &&mut DropEvent| e.device_id == event.device_id) {
            if e.onset_sample > event.onset_sample {
                e.onset_sample -= event.duration_samples;
            }
        }
        added.push(event);
    }
    Ok((out, added))
}
