use dropsync_eval::corpus::{build_scene, drop_counts, scene_plan};
use dropsync_eval::{build_stage1_dataset, build_stage2_dataset, ExperimentConfig, Split};

fn small(seed: u64) -> ExperimentConfig {
    let mut c = ExperimentConfig::desk(seed);
    c.train_scenes = 6;
    c.dev_scenes = 2;
    c.eval_scenes = 4;
    c.sampler.duration_s = (5.0, 7.0);
    c.sampler.max_reflection_order = 3;
    c.stage1_sources = 6;
    c.stage1_dev_sources = 2;
    c.stage1_source_s = 4.0;
    c.stage1_pairs = 40;
    c.stage1_dev_pairs = 10;
    c.positives_per_drop = 4;
    c.eval_windows_per_drop = 3;
    c.eval_windows_min = 20;
    c
}

#[test]
fn drop_counts_follow_the_reference_ratio() {
    let cfg = ExperimentConfig::desk(3);
    let counts = drop_counts(&cfg);
    assert_eq!(counts.len(), 100);
    assert_eq!(cfg.drops_total(), 74);
    assert_eq!(counts.iter().sum::<usize>(), 74);
    assert!(counts.iter().all(|&c| c <= 3));
    let empty = counts.iter().filter(|&&c| c == 0).count();
    assert!(empty > 10, "{empty} drop-free scenes");
    assert_eq!(counts, drop_counts(&cfg));
}

#[test]
fn scene_plan_partitions_scenes() {
    let cfg = ExperimentConfig::desk(1);
    let plan = scene_plan(&cfg);
    let n = |s: Split| plan.iter().filter(|p| p.0 == s).count();
    assert_eq!((n(Split::Train), n(Split::Dev), n(Split::Eval)), (60, 10, 30));
    assert!(plan.iter().enumerate().all(|(i, p)| p.2 == i));
    let paper = ExperimentConfig::paper(1);
    assert_eq!((paper.train_scenes, paper.dev_scenes, paper.eval_scenes), (782, 100, 300));
}

#[test]
fn stage1_pairs_are_balanced_and_reproducible() {
    let cfg = small(5);
    let a = build_stage1_dataset(&cfg).unwrap();
    assert_eq!(a.train.len(), 40);
    assert_eq!(a.train.positives(), 20);
    assert_eq!(a.dev.len(), 10);
    assert_eq!(a.dev.positives(), 5);
    assert_eq!((a.train.frames, a.train.bins), (61, 257));
    let b = build_stage1_dataset(&cfg).unwrap();
    assert_eq!(a.train, b.train);
    assert_eq!(a.dev, b.dev);
    assert!(a.train.examples.iter().all(|e| !a.dev.examples.contains(e)));
}

#[test]
fn stage2_corpus_bookkeeping() {
    let cfg = small(11);
    let data = build_stage2_dataset(&cfg).unwrap();
    let counts = drop_counts(&cfg);
    assert_eq!(data.scenes.len(), 12);
    let plan = scene_plan(&cfg);
    for (s, p) in data.scenes.iter().zip(&plan) {
        assert_eq!((s.split, s.index), (p.0, p.1));
        assert_eq!(s.drops.len(), counts[p.2]);
        assert_eq!(s.device_ids.len(), 6);
    }
    assert_eq!(data.scenes.iter().map(|s| s.drops.len()).sum::<usize>(), cfg.drops_total());

    let drops_in = |split: Split| data.scenes.iter().filter(|s| s.split == split).map(|s| s.drops.len()).sum::<usize>();
    assert_eq!(data.train.positives(), drops_in(Split::Train) * cfg.positives_per_drop);
    assert_eq!(data.train.len(), 2 * data.train.positives());
    assert_eq!(data.dev.len(), 2 * data.dev.positives());

    let pos = data.eval.iter().filter(|w| w.label == 1).count();
    assert_eq!(data.eval.len(), 2 * pos);
    assert!(data.eval.len() >= cfg.eval_windows_min);
    let eval_scenes: Vec<usize> = plan.iter().filter(|p| p.0 == Split::Eval).map(|p| p.2).collect();
    assert!(data.eval.iter().all(|w| eval_scenes.contains(&w.scene)));
    for w in &data.eval {
        let s = &data.scenes[w.scene];
        let id = s.device_ids[w.device];
        let has_onset = s.drops.iter().any(|d| d.device_id == id && (w.windows.start_sample..w.windows.end_sample).contains(&d.onset_sample));
        assert_eq!(has_onset, w.label == 1, "scene {} device {id}", w.scene);
        assert_eq!(w.windows.features.len(), 6);
    }

    let again = build_stage2_dataset(&cfg).unwrap();
    assert_eq!(again.train, data.train);
    assert_eq!(again.eval, data.eval);
}

#[test]
fn scene_rendering_is_deterministic() {
    let cfg = small(2);
    let (a, sa) = build_scene(&cfg, Split::Dev, 1, 2).unwrap();
    let (b, sb) = build_scene(&cfg, Split::Dev, 1, 2).unwrap();
    assert_eq!(a, b);
    assert_eq!(sa, sb);
    assert_eq!(a.drops.len(), 2);
    let (c, _) = build_scene(&cfg, Split::Eval, 1, 2).unwrap();
    assert_ne!(a.seed, c.seed);
}

#[test]
fn invalid_configs_are_rejected() {
    let mut c = small(1);
    c.frame_len_ms = 48;
    assert!(c.validate().is_err());
    let mut c = small(1);
    c.max_drops_per_scene = 0;
    assert!(c.validate().is_err());
    let mut c = small(1);
    c.sampler.n_devices = 1;
    assert!(build_stage2_dataset(&c).is_err());
}
