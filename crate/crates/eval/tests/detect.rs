use dropsync_core::drops::{inject_scene_drops, DropDistribution, ScenePlacement};
use dropsync_core::scene::{render_scene, RenderedScene, SceneSampler};
use dropsync_core::signal::{spectrogram, Spectrogram, StftConfig};
use dropsync_core::xcorr::XcorrConfig;
use dropsync_eval::detector::{decisions_csv, detect, DetectConfig};
use dropsync_eval::{classify_device, CombinerKind, SceneWindows};
use dropsync_neural::{ModelConfig, Preset, SiameseModel};

fn specs(scene: &RenderedScene) -> (Vec<Spectrogram>, Vec<u32>) {
    let cfg = StftConfig::default();
    (
        scene.devices.iter().map(|d| spectrogram(&d.channels[0], &cfg).unwrap()).collect(),
        scene.devices.iter().map(|d| d.device_id).collect(),
    )
}

fn scene(seed: u64, devices: usize) -> RenderedScene {
    let cfg = SceneSampler { n_devices: devices, duration_s: (8.0, 10.0), ..Default::default() }.sample(seed).unwrap();
    render_scene(&cfg).unwrap()
}

fn model() -> SiameseModel {
    SiameseModel::new(ModelConfig::preset(Preset::Desk, 257), &mut dropsync_core::rng::rng(4)).unwrap()
}

fn detect_cfg() -> DetectConfig {
    DetectConfig { xcorr: XcorrConfig::default(), combiner: CombinerKind::Mean, window_frames: 61 }
}

#[test]
fn clean_scene_yields_no_windows() {
    let (s, ids) = specs(&scene(101, 3));
    let d = detect(&s, &ids, &model(), &detect_cfg()).unwrap();
    assert!(d.candidates.is_empty(), "{:?}", d.candidates);
    assert!(d.decisions.is_empty());
    assert!(d.events.is_empty());
}

#[test]
fn drop_candidate_is_tiled_and_classified_against_every_other_device() {
    let clean = scene(102, 3);
    let dist = DropDistribution { mean: 600.0, std: 1e-4, ..Default::default() };
    let (dropped, events) =
        inject_scene_drops(&clean, 1, &dist, ScenePlacement::for_rate(16_000), &mut dropsync_core::rng::rng(7)).unwrap();
    let e = events[0];
    let (s, ids) = specs(&dropped);
    let d = detect(&s, &ids, &model(), &detect_cfg()).unwrap();
    assert!(d.candidates.iter().any(|c| c.device_id == e.device_id && c.start_sample <= e.onset_sample && e.onset_sample < c.end_sample));
    assert!(!d.decisions.is_empty());
    assert!(d.decisions.iter().any(|w| w.window_start_sample <= e.onset_sample && e.onset_sample < w.window_end_sample));
    for w in &d.decisions {
        assert_eq!(w.window_end_sample - w.window_start_sample, 60 * 256 + 512);
        assert_eq!(w.per_reference_probs.len(), 2);
        assert!(!w.reference_ids.contains(&w.device_id));
        let mean = w.per_reference_probs.iter().sum::<f64>() / 2.0;
        assert!((w.combined_score - mean).abs() < 1e-12);
        assert_eq!(w.label, (w.combined_score >= 0.5) as u8);
    }
    let csv = decisions_csv(&d.decisions);
    assert_eq!(csv.lines().count(), d.decisions.len() + 1);
}

#[test]
fn classification_needs_another_device() {
    let (s, ids) = specs(&scene(103, 2));
    let w = SceneWindows::extract(&s[..1], &ids[..1], 0, 61).unwrap();
    assert!(classify_device(&model(), &w, 0, CombinerKind::Mean.build().as_ref()).is_err());
    assert!(SceneWindows::extract(&s, &ids, s[0].frames, 61).is_err());
    assert!(detect(&s[..1], &ids[..1], &model(), &detect_cfg()).is_err());
}
