//! Candidate localisation, window classification against every other
//! device, and per-device decisions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use dropsync_core::xcorr::{align_all, CandidateInterval, XcorrConfig};
use dropsync_core::Spectrogram;
use dropsync_neural::dataset::features;
use dropsync_neural::SiameseModel;

use crate::combine::{Combiner, CombinerKind, DECISION_THRESHOLD};
use crate::error::{EvalError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceDecision {
    pub device_id: u32,
    pub window_start_sample: usize,
    pub window_end_sample: usize,
    pub reference_ids: Vec<u32>,
    pub per_reference_probs: Vec<f64>,
    pub combined_score: f64,
    pub label: u8,
}

/// Raw dB features of every device over one absolute sample range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneWindows {
    pub device_ids: Vec<u32>,
    pub start_sample: usize,
    pub end_sample: usize,
    pub features: Vec<Vec<f32>>,
}

impl SceneWindows {
    /// Frames `[frame, frame + n_frames)` of every stream.
    pub fn extract(spectrograms: &[Spectrogram], device_ids: &[u32], frame: usize, n_frames: usize) -> Result<Self> {
        let first = spectrograms.first().ok_or(EvalError::Empty("spectrograms"))?;
        if spectrograms.iter().any(|s| s.frames < frame + n_frames) {
            return Err(EvalError::config("window", format!("frames {frame}+{n_frames} exceed a device stream")));
        }
        let start = first.frame_start_sample(frame);
        Ok(Self {
            device_ids: device_ids.to_vec(),
            start_sample: start,
            end_sample: start + (n_frames - 1) * first.hop_samples + first.frame_samples,
            features: spectrograms.iter().map(|s| features(&s.frames_range(frame, n_frames))).collect(),
        })
    }
}

/// Classify device `j` of `windows` against every other device.
pub fn classify_device(model: &SiameseModel, windows: &SceneWindows, j: usize, combiner: &dyn Combiner) -> Result<DeviceDecision> {
    let device_id = windows.device_ids[j];
    let refs: Vec<usize> = (0..windows.device_ids.len()).filter(|&k| k != j).collect();
    if refs.is_empty() {
        return Err(EvalError::NoReferences { device_id });
    }
    let probs = refs
        .iter()
        .map(|&k| model.predict_raw(&windows.features[j], &windows.features[k]).map_err(EvalError::from))
        .collect::<Result<Vec<f64>>>()?;
    Ok(decide(device_id, windows, refs.iter().map(|&k| windows.device_ids[k]).collect(), probs, combiner))
}

pub fn decide(device_id: u32, windows: &SceneWindows, reference_ids: Vec<u32>, probs: Vec<f64>, combiner: &dyn Combiner) -> DeviceDecision {
    let score = combiner.combine(&probs);
    DeviceDecision {
        device_id,
        window_start_sample: windows.start_sample,
        window_end_sample: windows.end_sample,
        reference_ids,
        per_reference_probs: probs,
        combined_score: score,
        label: (score >= DECISION_THRESHOLD) as u8,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectConfig {
    pub xcorr: XcorrConfig,
    pub combiner: CombinerKind,
    /// Frames per classifier window (61 for 1 s at 32 ms / 16 kHz).
    pub window_frames: usize,
}

/// Adjacent or overlapping positive windows of one device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedEvent {
    pub device_id: u32,
    pub start_sample: usize,
    pub end_sample: usize,
    pub max_score: f64,
    pub windows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub candidates: Vec<CandidateInterval>,
    pub decisions: Vec<DeviceDecision>,
    pub events: Vec<MergedEvent>,
}

/// Start frames of windows tiling `[start, end)` with 50% overlap, clamped
/// to `[0, max_start]`.
pub fn tile_frames(start: usize, end: usize, hop: usize, frame_samples: usize, n_frames: usize, max_start: usize) -> Vec<usize> {
    let span = (n_frames - 1) * hop + frame_samples;
    let step = (n_frames / 2).max(1);
    let mut out = Vec::new();
    let mut f = start / hop;
    loop {
        let c = f.min(max_start);
        if out.last() != Some(&c) {
            out.push(c);
        }
        if c * hop + span >= end || c == max_start {
            break;
        }
        f += step;
    }
    out
}

/// Full pipeline on one scene: cross-correlation candidates, 50%-overlap
/// window tiling inside each candidate, classification against all other
/// devices. Devices without candidates produce no decisions.
pub fn detect(spectrograms: &[Spectrogram], device_ids: &[u32], model: &SiameseModel, cfg: &DetectConfig) -> Result<Detection> {
    if spectrograms.len() < 2 || spectrograms.len() != device_ids.len() {
        return Err(EvalError::config("devices", "need at least two devices with one spectrogram each"));
    }
    let n = cfg.window_frames;
    let min_frames = spectrograms.iter().map(|s| s.frames).min().unwrap_or(0);
    if min_frames < n {
        return Err(EvalError::config("window_frames", format!("streams have only {min_frames} frames")));
    }
    let alignments = align_all(spectrograms, device_ids, &cfg.xcorr)?;
    let candidates: Vec<CandidateInterval> = alignments.iter().flat_map(|a| a.candidates()).collect();
    let (hop, frame) = (spectrograms[0].hop_samples, spectrograms[0].frame_samples);
    let mut jobs = Vec::new();
    for c in &candidates {
        let j = device_ids.iter().position(|&d| d == c.device_id).expect("candidate device exists");
        for f in tile_frames(c.start_sample, c.end_sample, hop, frame, n, min_frames - n) {
            if !jobs.contains(&(j, f)) {
                jobs.push((j, f));
            }
        }
    }
    jobs.sort_unstable();
    let combiner = cfg.combiner.build();
    let decisions = jobs
        .par_iter()
        .map(|&(j, f)| {
            let w = SceneWindows::extract(spectrograms, device_ids, f, n)?;
            classify_device(model, &w, j, combiner.as_ref())
        })
        .collect::<Result<Vec<_>>>()?;
    let events = merge_positive(&decisions);
    Ok(Detection { candidates, decisions, events })
}

/// Greedy merge of positive windows that overlap or touch, per device.
pub fn merge_positive(decisions: &[DeviceDecision]) -> Vec<MergedEvent> {
    let mut pos: Vec<&DeviceDecision> = decisions.iter().filter(|d| d.label == 1).collect();
    pos.sort_by_key(|d| (d.device_id, d.window_start_sample));
    let mut out: Vec<MergedEvent> = Vec::new();
    for d in pos {
        match out.last_mut() {
            Some(e) if e.device_id == d.device_id && d.window_start_sample <= e.end_sample => {
                e.end_sample = e.end_sample.max(d.window_end_sample);
                e.max_score = e.max_score.max(d.combined_score);
                e.windows += 1;
            }
            _ => out.push(MergedEvent {
                device_id: d.device_id,
                start_sample: d.window_start_sample,
                end_sample: d.window_end_sample,
                max_score: d.combined_score,
                windows: 1,
            }),
        }
    }
    out
}

/// One CSV row per decision; probabilities joined with `;`.
pub fn decisions_csv(decisions: &[DeviceDecision]) -> String {
    let mut s = String::from("device_id,window_start_sample,window_end_sample,reference_ids,per_reference_probs,combined_score,label\n");
    for d in decisions {
        let ids: Vec<String> = d.reference_ids.iter().map(u32::to_string).collect();
        let probs: Vec<String> = d.per_reference_probs.iter().map(|p| format!("{p:.6}")).collect();
        s.push_str(&format!(
            "{},{},{},{},{},{:.6},{}\n",
            d.device_id,
            d.window_start_sample,
            d.window_end_sample,
            ids.join(";"),
            probs.join(";"),
            d.combined_score,
            d.label
        ));
    }
    s
}
