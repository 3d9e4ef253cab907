//! Coarse drop localisation by 2D normalized cross-correlation of spectrogram
//! patterns.
//!
//! For every anchor frame a pattern of `pattern_frames` frames is cut from the
//! hypothesis spectrogram and correlated against the reference spectrogram
//! over shifts `[-R, R]` around the same absolute frame. The best shift per
//! anchor forms a shift track; a drop in the hypothesis shows up as a step of
//! the track by minus the drop length in frames.
//!
//! Sign convention: a positive shift means the hypothesis lags the
//! reference. Content after a hypothesis drop arrives earlier, so the track
//! steps down and the estimated drop length is positive.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::Spectrogram;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XcorrConfig {
    pub pattern_s: f64,
    pub radius_s: f64,
    pub step_s: f64,
    pub min_jump_frames: usize,
    /// Median-filter window in anchors (odd).
    pub smoothing: usize,
    /// Anchors whose peak NCC falls below this are interpolated over.
    pub min_peak: f64,
    /// Candidate intervals extend this far beyond the transition region.
    pub margin_s: f64,
    /// Subtract each bin's mean over the whole stream before correlating,
    /// so a stationary noise floor does not dominate the match.
    pub remove_bin_means: bool,
    /// Only bins inside this band take part in the correlation; above a few
    /// kHz broadband noise outweighs speech structure.
    pub band_hz: (f64, f64),
}

impl Default for XcorrConfig {
    fn default() -> Self {
        Self {
            pattern_s: 1.0,
            radius_s: 1.25,
            step_s: 0.5,
            min_jump_frames: 3,
            smoothing: 5,
            min_peak: 0.2,
            margin_s: 2.0,
            remove_bin_means: true,
            band_hz: (60.0, 4000.0),
        }
    }
}

/// Frame-domain parameters resolved against a spectrogram hop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrackParams {
    pub pattern_frames: usize,
    pub radius_frames: usize,
    pub step_frames: usize,
}

impl XcorrConfig {
    pub fn track_params(&self, hop_samples: usize, sample_rate_hz: u32) -> TrackParams {
        let frames = |s: f64| (s * sample_rate_hz as f64 / hop_samples as f64).round().max(1.0) as usize;
        TrackParams {
            pattern_frames: frames(self.pattern_s).max(4),
            radius_frames: frames(self.radius_s),
            step_frames: frames(self.step_s),
        }
    }

    pub fn jump_params(&self, sample_rate_hz: u32) -> JumpParams {
        JumpParams {
            min_jump_frames: self.min_jump_frames,
            smoothing: self.smoothing,
            min_peak: self.min_peak,
            margin_samples: (self.margin_s * sample_rate_hz as f64).round() as usize,
        }
    }
}

/// NCC of `pattern` against every placement inside `region`; entry `o`
/// corresponds to the pattern aligned with region frame `o`. Zero-variance
/// placements (or a flat pattern) yield 0.
pub fn ncc2d(pattern: &Spectrogram, region: &Spectrogram) -> Result<Vec<f64>> {
    if pattern.bins != region.bins {
        return Err(Error::BinMismatch { pattern: pattern.bins, region: region.bins });
    }
    if region.frames < pattern.frames || pattern.frames == 0 {
        return Err(Error::SpectrogramTooShort(format!(
            "region has {} frames, pattern {}",
            region.frames, pattern.frames
        )));
    }
    let bins = pattern.bins;
    let p = pattern.frames;
    let n_cells = (p * bins) as f64;
    let mean_a = pattern.values.iter().sum::<f64>() / n_cells;
    let centred: Vec<f64> = pattern.values.iter().map(|v| v - mean_a).collect();
    let energy_a: f64 = centred.iter().map(|v| v * v).sum();

    // Per-frame sums for O(1) sliding-window statistics of the region.
    let frame_sum: Vec<f64> = (0..region.frames).map(|t| region.frame(t).iter().sum()).collect();
    let frame_sq: Vec<f64> = (0..region.frames).map(|t| region.frame(t).iter().map(|v| v * v).sum()).collect();

    let placements = region.frames - p + 1;
    let mut out = Vec::with_capacity(placements);
    for o in 0..placements {
        let sum: f64 = frame_sum[o..o + p].iter().sum();
        let sq: f64 = frame_sq[o..o + p].iter().sum();
        let energy_b = (sq - sum * sum / n_cells).max(0.0);
        if energy_a <= 0.0 || energy_b <= 1e-12 * sq.max(1e-300) {
            out.push(0.0);
            continue;
        }
        // The pattern is zero-mean, so the region mean drops out of the
        // cross term.
        let mut cross = 0.0;
        for t in 0..p {
            let a = &centred[t * bins..(t + 1) * bins];
            let b = region.frame(o + t);
            cross += dot(a, b);
        }
        out.push((cross / (energy_a * energy_b).sqrt()).clamp(-1.0, 1.0));
    }
    Ok(out)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        for l in 0..4 {
            acc[l] += a[4 * i + l] * b[4 * i + l];
        }
    }
    let mut s = acc[0] + acc[1] + acc[2] + acc[3];
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// Score given to shifts whose reference slice falls outside the stream.
pub const UNAVAILABLE: f64 = -1.0;

/// Per-anchor NCC over shifts `[-radius, radius]`. Anchors run over the
/// whole hypothesis; shifts that would read outside the reference hold
/// [`UNAVAILABLE`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationTrace {
    /// Anchor positions as hypothesis frame indices.
    pub anchors: Vec<usize>,
    pub radius_frames: usize,
    /// `values[i][s + radius]` is the NCC at shift `s` for anchor `i`.
    pub values: Vec<Vec<f64>>,
    pub hop_samples: usize,
    pub pattern_frames: usize,
    pub start_sample: usize,
    /// Length of the hypothesis stream in samples.
    pub stream_samples: usize,
}

impl CorrelationTrace {
    pub fn value_at(&self, anchor: usize, shift: i64) -> Option<f64> {
        let idx = shift + self.radius_frames as i64;
        if idx < 0 {
            return None;
        }
        self.values[anchor].get(idx as usize).copied()
    }

    /// Argmax shift and peak value per anchor. Ties resolve to the smallest
    /// absolute shift.
    pub fn best_shifts(&self) -> ShiftTrack {
        let r = self.radius_frames as i64;
        let mut shifts = Vec::with_capacity(self.values.len());
        let mut peaks = Vec::with_capacity(self.values.len());
        let mut refined = Vec::with_capacity(self.values.len());
        for row in &self.values {
            let mut best = (0i64, f64::NEG_INFINITY);
            for (i, &v) in row.iter().enumerate() {
                let s = i as i64 - r;
                if v > best.1 || (v == best.1 && s.abs() < best.0.abs()) {
                    best = (s, v);
                }
            }
            shifts.push(best.0);
            peaks.push(best.1);
            refined.push(best.0 as f64 + parabolic_offset(row, (best.0 + r) as usize));
        }
        ShiftTrack {
            anchor_samples: self.anchor_samples(),
            shifts,
            peaks,
            refined,
            hop_samples: self.hop_samples,
            pattern_frames: self.pattern_frames,
            radius_frames: self.radius_frames,
            stream_samples: self.stream_samples,
        }
    }

    pub fn anchor_samples(&self) -> Vec<usize> {
        self.anchors.iter().map(|a| self.start_sample + a * self.hop_samples).collect()
    }
}

/// Sub-frame peak position from a parabola through the peak and its two
/// neighbours; 0 at the ends or next to unavailable shifts.
fn parabolic_offset(row: &[f64], i: usize) -> f64 {
    if i == 0 || i + 1 >= row.len() || row[i - 1] <= UNAVAILABLE || row[i + 1] <= UNAVAILABLE {
        return 0.0;
    }
    let (a, b, c) = (row[i - 1], row[i], row[i + 1]);
    let den = a - 2.0 * b + c;
    if den >= 0.0 {
        0.0
    } else {
        (0.5 * (a - c) / den).clamp(-0.5, 0.5)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftTrack {
    pub anchor_samples: Vec<usize>,
    /// Best shift per anchor in frames (hypothesis time minus reference time).
    pub shifts: Vec<i64>,
    pub peaks: Vec<f64>,
    /// `shifts` refined to sub-frame precision.
    pub refined: Vec<f64>,
    pub hop_samples: usize,
    pub pattern_frames: usize,
    pub radius_frames: usize,
    pub stream_samples: usize,
}

impl ShiftTrack {
    pub fn len(&self) -> usize {
        self.shifts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shifts.is_empty()
    }
}

pub fn correlation_trace(hyp: &Spectrogram, reference: &Spectrogram, params: TrackParams) -> Result<CorrelationTrace> {
    if hyp.bins != reference.bins {
        return Err(Error::BinMismatch { pattern: hyp.bins, region: reference.bins });
    }
    if hyp.hop_samples != reference.hop_samples {
        return Err(Error::config("hop_samples", "hypothesis and reference use different STFT settings"));
    }
    let TrackParams { pattern_frames: p, radius_frames: r, step_frames: step } = params;
    if step == 0 {
        return Err(Error::config("step_frames", "must be positive"));
    }
    if hyp.frames < p || reference.frames < p {
        return Err(Error::SpectrogramTooShort(format!(
            "{} / {} frames cannot fit a {p}-frame pattern",
            hyp.frames, reference.frames
        )));
    }
    let anchors: Vec<usize> = (0..=hyp.frames - p).step_by(step).collect();
    let values = anchors
        .iter()
        .map(|&a| {
            // Reference frames a - s for s in [-r, r], clipped to the stream.
            let lo = a.saturating_sub(r);
            let hi = (a + p + r).min(reference.frames);
            let mut row = vec![UNAVAILABLE; 2 * r + 1];
            if hi >= lo + p {
                let ncc = ncc2d(&hyp.frames_range(a, p), &reference.frames_range(lo, hi - lo))?;
                for (o, v) in ncc.into_iter().enumerate() {
                    let shift = a as i64 - (lo + o) as i64;
                    row[(shift + r as i64) as usize] = v;
                }
            }
            Ok(row)
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    Ok(CorrelationTrace {
        anchors,
        radius_frames: r,
        values,
        hop_samples: hyp.hop_samples,
        pattern_frames: p,
        start_sample: hyp.start_sample,
        stream_samples: hyp.start_sample + (hyp.frames - 1) * hyp.hop_samples + hyp.frame_samples,
    })
}

pub fn track_shift(hyp: &Spectrogram, reference: &Spectrogram, params: TrackParams) -> Result<ShiftTrack> {
    Ok(correlation_trace(hyp, reference, params)?.best_shifts())
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Shift around which a reference's trace is recentred before combination:
/// the median best shift over the leading anchors.
pub fn reference_offset(trace: &CorrelationTrace, leading: usize) -> i64 {
    let track = trace.best_shifts();
    let n = leading.clamp(1, track.len());
    let mut head: Vec<f64> = track.shifts[..n].iter().map(|&s| s as f64).collect();
    median(&mut head).round() as i64
}

/// Sum of per-reference traces, each recentred on its own leading median
/// shift so that a hypothesis drop adds coherently across references.
pub fn cumulative_combine(traces: &[CorrelationTrace], leading: usize) -> Result<CorrelationTrace> {
    let first = traces.first().ok_or(Error::NoReferences)?;
    for t in traces {
        if t.anchors != first.anchors || t.radius_frames != first.radius_frames {
            return Err(Error::config("traces", "anchors or radius differ between references"));
        }
    }
    let r = first.radius_frames as i64;
    let mut values = vec![vec![0.0; first.values[0].len()]; first.anchors.len()];
    for t in traces {
        let m = reference_offset(t, leading);
        for (a, row) in values.iter_mut().enumerate() {
            for (i, slot) in row.iter_mut().enumerate() {
                let s = i as i64 - r;
                if let Some(v) = t.value_at(a, s + m) {
                    *slot += v;
                }
            }
        }
    }
    Ok(CorrelationTrace { values, ..first.clone() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpParams {
    pub min_jump_frames: usize,
    pub smoothing: usize,
    pub min_peak: f64,
    pub margin_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateInterval {
    pub device_id: u32,
    pub start_sample: usize,
    pub end_sample: usize,
    /// Positive when the hypothesis lost samples, negative when the jump is
    /// explained by a reference losing samples.
    pub estimated_drop_samples: i64,
    /// Mean peak correlation over the two plateaus around the jump.
    pub confidence: f64,
}

impl CandidateInterval {
    pub fn contains(&self, sample: usize) -> bool {
        (self.start_sample..self.end_sample).contains(&sample)
    }
}

/// Replace unreliable anchors by linear interpolation between reliable
/// neighbours. `None` when no anchor is reliable.
fn interpolate_unreliable(track: &ShiftTrack, min_peak: f64) -> Option<Vec<f64>> {
    let reliable: Vec<usize> = (0..track.len()).filter(|&i| track.peaks[i] >= min_peak).collect();
    if reliable.is_empty() {
        return None;
    }
    let mut out = vec![0.0; track.len()];
    for (i, slot) in out.iter_mut().enumerate() {
        let next = reliable.partition_point(|&r| r < i);
        *slot = match (next.checked_sub(1).map(|p| reliable[p]), reliable.get(next).copied()) {
            (_, Some(n)) if n == i => track.refined[i],
            (Some(p), Some(n)) => {
                let w = (i - p) as f64 / (n - p) as f64;
                track.refined[p] * (1.0 - w) + track.refined[n] * w
            }
            (Some(p), None) => track.refined[p],
            (None, Some(n)) => track.refined[n],
            (None, None) => unreachable!(),
        };
    }
    Some(out)
}

/// Running median; the window shrinks symmetrically near the ends so edge
/// plateaus are kept.
fn median_filter(x: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    (0..x.len())
        .map(|i| {
            let h = half.min(i).min(x.len() - 1 - i);
            let (lo, hi) = (i - h, i + h + 1);
            median(&mut x[lo..hi].to_vec())
        })
        .collect()
}

struct Plateau {
    first: usize,
    last: usize,
    level: f64,
}

/// Find shift-track steps of at least `min_jump_frames` between consecutive
/// plateaus of the median-filtered track. Plateaus need two anchors, except
/// at either end of the track where drops close to the stream boundary leave
/// room for only one.
pub fn detect_jump(track: &ShiftTrack, params: JumpParams) -> Vec<CandidateInterval> {
    let Some(filled) = interpolate_unreliable(track, params.min_peak) else { return Vec::new() };
    let smooth = median_filter(&filled, params.smoothing.max(1));
    let n = smooth.len();
    let mut plateaus = Vec::new();
    let mut start = 0;
    for i in 1..=n {
        if i == n || (smooth[i] - smooth[i - 1]).abs() > 1.0 {
            let at_edge = start == 0 || i == n;
            if i - start >= 2 || (at_edge && n > 1 && track.peaks[start] >= params.min_peak) {
                let level = median(&mut filled[start..i].to_vec());
                plateaus.push(Plateau { first: start, last: i - 1, level });
            }
            start = i;
        }
    }
    let pattern_samples = track.pattern_frames * track.hop_samples;
    plateaus
        .windows(2)
        .filter(|w| (w[1].level - w[0].level).abs() >= params.min_jump_frames as f64)
        .map(|w| {
            let (before, after) = (&w[0], &w[1]);
            let lo = track.anchor_samples[before.last];
            let hi = track.anchor_samples[after.first] + pattern_samples;
            let peaks = &track.peaks[before.first..=after.last];
            CandidateInterval {
                device_id: 0,
                start_sample: lo.saturating_sub(params.margin_samples),
                end_sample: (hi + params.margin_samples).min(track.stream_samples.max(hi)),
                estimated_drop_samples: ((before.level - after.level) * track.hop_samples as f64).round() as i64,
                confidence: peaks.iter().sum::<f64>() / peaks.len() as f64,
            }
        })
        .collect()
}

/// One row of the exported shift table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftRow {
    pub anchor_sample: usize,
    pub reference_id: u32,
    pub best_shift_frames: i64,
    pub peak_ncc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceAlignment {
    pub device_id: u32,
    pub reference_ids: Vec<u32>,
    pub per_reference: Vec<ShiftTrack>,
    pub combined: ShiftTrack,
    /// All jumps of the combined track, both signs.
    pub jumps: Vec<CandidateInterval>,
}

impl DeviceAlignment {
    /// Jumps attributable to a drop in this device.
    pub fn candidates(&self) -> Vec<CandidateInterval> {
        self.jumps.iter().filter(|c| c.estimated_drop_samples > 0).cloned().collect()
    }

    pub fn rows(&self) -> Vec<ShiftRow> {
        let mut rows = Vec::new();
        for (rid, track) in self.reference_ids.iter().zip(&self.per_reference) {
            for i in 0..track.len() {
                rows.push(ShiftRow {
                    anchor_sample: track.anchor_samples[i],
                    reference_id: *rid,
                    best_shift_frames: track.shifts[i],
                    peak_ncc: track.peaks[i],
                });
            }
        }
        rows
    }
}

pub fn remove_bin_means(s: &Spectrogram) -> Spectrogram {
    let mut means = vec![0.0; s.bins];
    for t in 0..s.frames {
        for (m, v) in means.iter_mut().zip(s.frame(t)) {
            *m += v;
        }
    }
    means.iter_mut().for_each(|m| *m /= s.frames.max(1) as f64);
    let mut out = s.clone();
    for frame in out.values.chunks_mut(s.bins) {
        for (v, m) in frame.iter_mut().zip(&means) {
            *v -= m;
        }
    }
    out
}

/// Keep bins whose centre frequency lies in `[lo_hz, hi_hz]`.
pub fn band_limit(s: &Spectrogram, (lo_hz, hi_hz): (f64, f64)) -> Spectrogram {
    let bin_hz = s.sample_rate_hz as f64 / (2 * (s.bins - 1)) as f64;
    let lo = ((lo_hz / bin_hz).ceil().max(0.0) as usize).min(s.bins - 1);
    let hi = ((hi_hz / bin_hz).floor() as usize).clamp(lo, s.bins - 1) + 1;
    let mut values = Vec::with_capacity(s.frames * (hi - lo));
    for t in 0..s.frames {
        values.extend_from_slice(&s.frame(t)[lo..hi]);
    }
    Spectrogram { values, bins: hi - lo, ..s.clone() }
}

/// Preprocessing applied before correlation.
pub fn prepare(s: &Spectrogram, cfg: &XcorrConfig) -> Spectrogram {
    let banded = band_limit(s, cfg.band_hz);
    if cfg.remove_bin_means {
        remove_bin_means(&banded)
    } else {
        banded
    }
}

/// Align every device against all others, applying [`prepare`] first.
pub fn align_all(spectrograms: &[Spectrogram], device_ids: &[u32], cfg: &XcorrConfig) -> Result<Vec<DeviceAlignment>> {
    let prepared: Vec<Spectrogram> = spectrograms.iter().map(|s| prepare(s, cfg)).collect();
    (0..prepared.len()).map(|h| align_device(&prepared, device_ids, h, cfg)).collect()
}

/// Correlate device `hyp` against every other device and detect jumps of the
/// combined trace. `spectrograms[i]` belongs to `device_ids[i]`; no
/// preprocessing is applied here (see [`align_all`]).
pub fn align_device(
    spectrograms: &[Spectrogram],
    device_ids: &[u32],
    hyp: usize,
    cfg: &XcorrConfig,
) -> Result<DeviceAlignment> {
    if spectrograms.len() < 2 {
        return Err(Error::NoReferences);
    }
    let h = &spectrograms[hyp];
    let params = cfg.track_params(h.hop_samples, h.sample_rate_hz);
    let mut traces = Vec::new();
    let mut reference_ids = Vec::new();
    for (k, s) in spectrograms.iter().enumerate() {
        if k == hyp {
            continue;
        }
        traces.push(correlation_trace(h, s, params)?);
        reference_ids.push(device_ids[k]);
    }
    let combined = cumulative_combine(&traces, cfg.smoothing)?.best_shifts();
    let mut jumps = detect_jump(&combined, cfg.jump_params(h.sample_rate_hz));
    for j in jumps.iter_mut() {
        j.device_id = device_ids[hyp];
    }
    Ok(DeviceAlignment {
        device_id: device_ids[hyp],
        reference_ids,
        per_reference: traces.iter().map(CorrelationTrace::best_shifts).collect(),
        combined,
        jumps,
    })
}
