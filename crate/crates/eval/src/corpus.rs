//! Desk-scale synthetic corpora: contaminated speech pairs for the first
//! training stage and multi-device mini-scenes for the second stage and for
//! evaluation.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use dropsync_core::drops::{inject_scene_drops, make_pair_dataset, ContaminatedPair, DropDistribution, DropEvent, PairWindowing, ScenePlacement};
use dropsync_core::scene::{mix_at_snr, pink_noise, render_scene, synth_speech_surrogate, t60_to_reflection, white_noise, RirRequest, RoomSpec, SceneSampler};
use dropsync_core::signal::{fft_convolve, spectrogram, StftConfig};
use dropsync_core::{rng, Spectrogram, Waveform};
use dropsync_neural::dataset::{features, PairExample};
use dropsync_neural::{PairSet, Preset, StageConfig};

use crate::combine::CombinerKind;
use crate::detector::SceneWindows;
use crate::error::{EvalError, Result};

const STREAM_STAGE1: u64 = 0x5_7a6e_1;
const STREAM_SCENES: u64 = 0x5_ce9e;
const STREAM_DROP_COUNTS: u64 = 0xd_c0;
const STREAM_WINDOWS: u64 = 0x3_1d0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub preset: Preset,
    pub frame_len_ms: u32,
    pub combiner: CombinerKind,
    pub sample_rate_hz: u32,
    pub train_scenes: usize,
    pub dev_scenes: usize,
    pub eval_scenes: usize,
    /// Drops per scene follow the ratio `reference_drops / reference_scenes`.
    pub reference_scenes: usize,
    pub reference_drops: usize,
    pub max_drops_per_scene: usize,
    pub sampler: SceneSampler,
    pub drops: DropDistribution,
    pub stage1_sources: usize,
    pub stage1_dev_sources: usize,
    pub stage1_source_s: f64,
    pub stage1_pairs: usize,
    pub stage1_dev_pairs: usize,
    /// Positive training windows drawn around every training drop.
    pub positives_per_drop: usize,
    /// Lower bound on positive evaluation windows per drop.
    pub eval_windows_per_drop: usize,
    /// Minimum total evaluation windows (half positive).
    pub eval_windows_min: usize,
    pub window_s: f64,
    pub edge_guard_s: f64,
    pub stage1: StageConfig,
    pub stage2: StageConfig,
    pub threads: usize,
}

impl ExperimentConfig {
    pub fn desk(seed: u64) -> Self {
        Self {
            seed,
            preset: Preset::Desk,
            frame_len_ms: 32,
            combiner: CombinerKind::Mean,
            sample_rate_hz: 16_000,
            train_scenes: 60,
            dev_scenes: 10,
            eval_scenes: 30,
            reference_scenes: 1182,
            reference_drops: 880,
            max_drops_per_scene: 3,
            sampler: SceneSampler::default(),
            drops: DropDistribution::default(),
            stage1_sources: 600,
            stage1_dev_sources: 20,
            stage1_source_s: 8.0,
            stage1_pairs: 8000,
            stage1_dev_pairs: 200,
            positives_per_drop: 16,
            eval_windows_per_drop: 8,
            eval_windows_min: 300,
            window_s: 1.0,
            edge_guard_s: 0.05,
            stage1: StageConfig { epochs: 20, batch_size: 50, lr: dropsync_neural::optim::DEFAULT_LR },
            stage2: StageConfig { epochs: 20, batch_size: 30, lr: dropsync_neural::optim::DEFAULT_LR },
            threads: 0,
        }
    }

    /// Full-size corpus counts; training it is out of reach on a CPU.
    pub fn paper(seed: u64) -> Self {
        Self { preset: Preset::Paper, train_scenes: 782, dev_scenes: 100, eval_scenes: 300, ..Self::desk(seed) }
    }

    pub fn for_preset(preset: Preset, seed: u64) -> Self {
        match preset {
            Preset::Desk => Self::desk(seed),
            Preset::Paper => Self::paper(seed),
        }
    }

    pub fn total_scenes(&self) -> usize {
        self.train_scenes + self.dev_scenes + self.eval_scenes
    }

    pub fn drops_total(&self) -> usize {
        (self.total_scenes() as f64 * self.reference_drops as f64 / self.reference_scenes as f64).round() as usize
    }

    pub fn stft(&self) -> Result<StftConfig> {
        Ok(StftConfig::new(self.frame_len_ms, self.sample_rate_hz)?)
    }

    pub fn window_samples(&self) -> usize {
        (self.window_s * self.sample_rate_hz as f64).round() as usize
    }

    /// Frames in one classifier window.
    pub fn window_frames(&self) -> Result<usize> {
        Ok(self.stft()?.frame_count(self.window_samples()))
    }

    pub fn bins(&self) -> Result<usize> {
        Ok(self.stft()?.bins())
    }

    fn guard_samples(&self) -> usize {
        (self.edge_guard_s * self.sample_rate_hz as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if ![32, 64].contains(&self.frame_len_ms) {
            return Err(EvalError::config("frame_len_ms", "must be 32 or 64"));
        }
        if self.train_scenes == 0 || self.eval_scenes == 0 {
            return Err(EvalError::config("scenes", "train and eval splits must be non-empty"));
        }
        if self.sampler.n_devices < 2 {
            return Err(EvalError::config("sampler.n_devices", "need at least two devices"));
        }
        if self.drops_total() > self.total_scenes() * self.max_drops_per_scene {
            return Err(EvalError::config("max_drops_per_scene", "too small for the drop total"));
        }
        if self.stage1_sources == 0 || self.stage1_pairs < 2 || self.positives_per_drop == 0 {
            return Err(EvalError::config("pairs", "pair counts must be positive"));
        }
        if self.sampler.duration_s.0 < 3.0 * self.window_s {
            return Err(EvalError::config("sampler.duration_s", "scenes must hold several windows"));
        }
        self.stft()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Dev,
    Eval,
}

impl Split {
    fn id(self) -> u64 {
        match self {
            Split::Train => 0,
            Split::Dev => 1,
            Split::Eval => 2,
        }
    }
}

/// One reverberant, noisy rendering of a dry source in a freshly sampled
/// room: random geometry, T60 and SNR from the sampler ranges.
pub fn render_contaminated(dry: &Waveform, sampler: &SceneSampler, seed: u64) -> Result<Waveform> {
    let mut r = rng::rng(seed);
    let u = |r: &mut rng::Rng, (lo, hi): (f64, f64)| if hi > lo { r.gen_range(lo..hi) } else { lo };
    let dims = [u(&mut r, sampler.room_x), u(&mut r, sampler.room_y), u(&mut r, sampler.room_z)];
    let t60 = u(&mut r, sampler.t60_s);
    let mut room = RoomSpec::new(dims, [0.5; 6])?;
    room.wall_reflection = t60_to_reflection(&room, t60)?;
    let mut point = |z: (f64, f64)| [r.gen_range(0.5..dims[0] - 0.5), r.gen_range(0.5..dims[1] - 0.5), u(&mut r, z)];
    let source = point((1.1, 1.8));
    let mic = point((0.6, 2.0));
    let fs = dry.sample_rate_hz;
    let rir = RirRequest {
        room: &room,
        source,
        mic,
        max_order: sampler.max_reflection_order,
        rir_len: (t60 * fs as f64).ceil() as usize,
        sample_rate_hz: fs,
        source_axis: None,
        mic_axis: None,
    }
    .render()?;
    let wet = Waveform::new(fft_convolve(&dry.samples, &rir.samples), fs)?;
    let snr = u(&mut r, sampler.snr_db);
    let noise_seed = r.gen();
    let noise = if r.gen_bool(0.5) { pink_noise(wet.len(), fs, noise_seed) } else { white_noise(wet.len(), fs, noise_seed) };
    Ok(mix_at_snr(&wet, &noise, snr)?)
}

/// Speech surrogates, each rendered twice under independent conditions.
pub fn stage1_material(cfg: &ExperimentConfig, split: Split, n_sources: usize) -> Result<Vec<ContaminatedPair>> {
    (0..n_sources)
        .into_par_iter()
        .map(|i| {
            let base = rng::derive_path(cfg.seed, &[STREAM_STAGE1, split.id(), i as u64]);
            let dry = synth_speech_surrogate(cfg.stage1_source_s, cfg.sample_rate_hz, rng::derive(base, 0));
            Ok(ContaminatedPair {
                a: render_contaminated(&dry, &cfg.sampler, rng::derive(base, 1))?,
                b: render_contaminated(&dry, &cfg.sampler, rng::derive(base, 2))?,
            })
        })
        .collect()
}

fn window_pairs_to_set(pairs: &[dropsync_core::drops::WindowPair], stft: &StftConfig, frames: usize) -> Result<PairSet> {
    let mut set = PairSet::new(frames, stft.bins());
    for p in pairs {
        set.push_spectrograms(&spectrogram(&p.hypothesis, stft)?, &spectrogram(&p.reference, stft)?, p.label)?;
    }
    Ok(set)
}

#[derive(Debug, Clone)]
pub struct Stage1Data {
    pub train: PairSet,
    pub dev: PairSet,
}

/// Balanced contaminated-pair windows; train and dev use disjoint sources.
pub fn build_stage1_dataset(cfg: &ExperimentConfig) -> Result<Stage1Data> {
    cfg.validate()?;
    let stft = cfg.stft()?;
    let frames = cfg.window_frames()?;
    let windowing = PairWindowing { window_samples: cfg.window_samples(), edge_guard_samples: cfg.guard_samples() };
    let build = |split: Split, sources: usize, n_pairs: usize| -> Result<PairSet> {
        let material = stage1_material(cfg, split, sources)?;
        let mut r = rng::rng_at(cfg.seed, &[STREAM_STAGE1, split.id(), u64::MAX]);
        let pairs = make_pair_dataset(&material, &cfg.drops, n_pairs, windowing, &mut r)?;
        window_pairs_to_set(&pairs, &stft, frames)
    };
    let train = build(Split::Train, cfg.stage1_sources, cfg.stage1_pairs)?;
    let dev = build(Split::Dev, cfg.stage1_dev_sources.max(1), cfg.stage1_dev_pairs.max(2))?;
    Ok(Stage1Data { train, dev })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSummary {
    pub split: Split,
    pub index: usize,
    pub seed: u64,
    pub device_ids: Vec<u32>,
    pub stream_samples: Vec<usize>,
    pub drops: Vec<DropEvent>,
}

/// Drops per scene: the drop total placed one at a time into uniformly
/// chosen scenes that still have room.
pub fn drop_counts(cfg: &ExperimentConfig) -> Vec<usize> {
    let n = cfg.total_scenes();
    let mut counts = vec![0; n];
    let mut r = rng::rng_at(cfg.seed, &[STREAM_DROP_COUNTS]);
    for _ in 0..cfg.drops_total() {
        let open: Vec<usize> = (0..n).filter(|&i| counts[i] < cfg.max_drops_per_scene).collect();
        counts[*open.choose(&mut r).expect("capacity checked by validate")] += 1;
    }
    counts
}

/// `(split, index within split, global index)` of every scene.
pub fn scene_plan(cfg: &ExperimentConfig) -> Vec<(Split, usize, usize)> {
    let mut out = Vec::with_capacity(cfg.total_scenes());
    for (split, n) in [(Split::Train, cfg.train_scenes), (Split::Dev, cfg.dev_scenes), (Split::Eval, cfg.eval_scenes)] {
        for i in 0..n {
            out.push((split, i, out.len()));
        }
    }
    out
}

/// Render scene `index` of `split` with `n_drops` drops and return its
/// channel-0 spectrograms and bookkeeping.
pub fn build_scene(cfg: &ExperimentConfig, split: Split, index: usize, n_drops: usize) -> Result<(SceneSummary, Vec<Spectrogram>)> {
    let seed = rng::derive_path(cfg.seed, &[STREAM_SCENES, split.id(), index as u64]);
    let scene_cfg = cfg.sampler.sample(seed)?;
    let clean = render_scene(&scene_cfg)?;
    let mut r = rng::rng_at(seed, &[0xd709]);
    let placement = ScenePlacement::for_rate(cfg.sample_rate_hz);
    let (scene, _) = inject_scene_drops(&clean, n_drops, &cfg.drops, placement, &mut r)?;
    let stft = cfg.stft()?;
    let specs = scene.devices.iter().map(|d| spectrogram(&d.channels[0], &stft)).collect::<dropsync_core::Result<Vec<_>>>()?;
    let summary = SceneSummary {
        split,
        index,
        seed,
        device_ids: scene.devices.iter().map(|d| d.device_id).collect(),
        stream_samples: scene.devices.iter().map(|d| d.len()).collect(),
        drops: scene.ground_truth.drops.clone(),
    };
    Ok((summary, specs))
}

/// One evaluation item: all device windows over one range, the device
/// under test and its label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalWindow {
    pub scene: usize,
    pub device: usize,
    pub label: u8,
    pub windows: SceneWindows,
}

#[derive(Debug, Clone)]
pub struct Stage2Data {
    pub scenes: Vec<SceneSummary>,
    pub train: PairSet,
    pub dev: PairSet,
    pub eval: Vec<EvalWindow>,
}

struct Sampler<'a> {
    summary: &'a SceneSummary,
    specs: &'a [Spectrogram],
    frames: usize,
    guard: usize,
}

impl Sampler<'_> {
    fn hop(&self) -> usize {
        self.specs[0].hop_samples
    }

    fn span(&self) -> usize {
        (self.frames - 1) * self.hop() + self.specs[0].frame_samples
    }

    fn max_start(&self) -> usize {
        self.specs.iter().map(|s| s.frames).min().unwrap_or(0).saturating_sub(self.frames)
    }

    fn onsets(&self, device: usize) -> impl Iterator<Item = usize> + '_ {
        let id = self.summary.device_ids[device];
        self.summary.drops.iter().filter(move |e| e.device_id == id).map(|e| e.onset_sample)
    }

    /// No onset of `device` within the window, widened by the guard.
    fn clean(&self, device: usize, frame: usize) -> bool {
        let start = frame * self.hop();
        let end = start + self.span();
        self.onsets(device).all(|o| o + self.guard < start || o >= end + self.guard)
    }

    /// Random start frame placing `onset` inside the guarded window interior.
    fn frame_around(&self, onset: usize, r: &mut rng::Rng) -> Option<usize> {
        let (hop, span) = (self.hop(), self.span());
        let lo = (onset + self.guard).saturating_sub(span).div_ceil(hop);
        let hi = (onset.saturating_sub(self.guard) / hop).min(self.max_start());
        (lo <= hi).then(|| r.gen_range(lo..=hi))
    }

    fn random_clean_frame(&self, device: usize, r: &mut rng::Rng) -> Option<usize> {
        (0..200).map(|_| r.gen_range(0..=self.max_start())).find(|&f| self.clean(device, f))
    }

    fn pair(&self, hyp: usize, reference: usize, frame: usize, label: u8) -> PairExample {
        PairExample {
            hyp: features(&self.specs[hyp].frames_range(frame, self.frames)),
            reference: features(&self.specs[reference].frames_range(frame, self.frames)),
            label,
        }
    }
}

#[derive(Default)]
struct SceneYield {
    pairs: Vec<PairExample>,
    eval: Vec<EvalWindow>,
}

fn spread(total: usize, n: usize, i: usize) -> usize {
    total / n + usize::from(i < total % n)
}

/// Render all mini-scenes, inject drops and cut training pairs (train and
/// dev splits) and evaluation windows (eval split).
///
/// Training pairs: `positives_per_drop` windows around each drop, each
/// against a reference device cycling over the others, plus as many
/// drop-free pairs spread evenly over the split's scenes. Evaluation
/// windows: at least `eval_windows_per_drop` positives per drop (raised to
/// reach `eval_windows_min / 2`) and as many negatives, each carrying the
/// windows of every device.
pub fn build_stage2_dataset(cfg: &ExperimentConfig) -> Result<Stage2Data> {
    cfg.validate()?;
    let counts = drop_counts(cfg);
    let plan = scene_plan(cfg);
    let frames = cfg.window_frames()?;
    let bins = cfg.bins()?;
    let drops_in = |s: Split| plan.iter().filter(|p| p.0 == s).map(|p| counts[p.2]).sum::<usize>();
    let eval_drops = drops_in(Split::Eval).max(1);
    let eval_per_drop = cfg.eval_windows_per_drop.max((cfg.eval_windows_min / 2).div_ceil(eval_drops));
    let negatives = |s: Split| match s {
        Split::Eval => drops_in(s) * eval_per_drop,
        _ => drops_in(s) * cfg.positives_per_drop,
    };
    let split_len = |s: Split| plan.iter().filter(|p| p.0 == s).count();
    let results: Vec<(SceneSummary, SceneYield)> = plan
        .par_iter()
        .map(|&(split, index, global)| {
            let (summary, specs) = build_scene(cfg, split, index, counts[global])?;
            let s = Sampler { summary: &summary, specs: &specs, frames, guard: cfg.guard_samples() };
            let mut r = rng::rng_at(summary.seed, &[STREAM_WINDOWS]);
            let k = specs.len();
            let mut out = SceneYield::default();
            let n_neg = spread(negatives(split), split_len(split), index);
            match split {
                Split::Train | Split::Dev => {
                    for e in &summary.drops {
                        let hyp = summary.device_ids.iter().position(|&d| d == e.device_id).expect("drop device exists");
                        let others: Vec<usize> = (0..k).filter(|&d| d != hyp).collect();
                        let mut placed = 0;
                        for attempt in 0..cfg.positives_per_drop * 20 {
                            if placed == cfg.positives_per_drop {
                                break;
                            }
                            let reference = others[(placed + attempt) % others.len()];
                            let Some(f) = s.frame_around(e.onset_sample, &mut r) else { break };
                            if s.clean(reference, f) {
                                out.pairs.push(s.pair(hyp, reference, f, 1));
                                placed += 1;
                            }
                        }
                    }
                    for _ in 0..n_neg {
                        let hyp = r.gen_range(0..k);
                        let reference = (hyp + r.gen_range(1..k)) % k;
                        let found = (0..200).map(|_| r.gen_range(0..=s.max_start())).find(|&f| s.clean(hyp, f) && s.clean(reference, f));
                        if let Some(f) = found {
                            out.pairs.push(s.pair(hyp, reference, f, 0));
                        }
                    }
                }
                Split::Eval => {
                    for e in &summary.drops {
                        let hyp = summary.device_ids.iter().position(|&d| d == e.device_id).expect("drop device exists");
                        for _ in 0..eval_per_drop {
                            let Some(f) = s.frame_around(e.onset_sample, &mut r) else { break };
                            let windows = SceneWindows::extract(&specs, &summary.device_ids, f, frames)?;
                            out.eval.push(EvalWindow { scene: global, device: hyp, label: 1, windows });
                        }
                    }
                    for _ in 0..n_neg {
                        let hyp = r.gen_range(0..k);
                        if let Some(f) = s.random_clean_frame(hyp, &mut r) {
                            let windows = SceneWindows::extract(&specs, &summary.device_ids, f, frames)?;
                            out.eval.push(EvalWindow { scene: global, device: hyp, label: 0, windows });
                        }
                    }
                }
            }
            log::debug!("scene {split:?}/{index}: {} drops", summary.drops.len());
            Ok((summary, out))
        })
        .collect::<Result<_>>()?;
    let mut data = Stage2Data { scenes: Vec::new(), train: PairSet::new(frames, bins), dev: PairSet::new(frames, bins), eval: Vec::new() };
    for (summary, y) in results {
        let target = match summary.split {
            Split::Train => Some(&mut data.train),
            Split::Dev => Some(&mut data.dev),
            Split::Eval => None,
        };
        if let Some(set) = target {
            for p in y.pairs {
                set.push(p)?;
            }
        }
        data.eval.extend(y.eval);
        data.scenes.push(summary);
    }
    let mut r = rng::rng_at(cfg.seed, &[STREAM_WINDOWS, u64::MAX]);
    data.train.examples.shuffle(&mut r);
    data.dev.examples.shuffle(&mut r);
    Ok(data)
}
