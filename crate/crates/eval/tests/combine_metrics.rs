use dropsync_core::drops::DropEvent;
use dropsync_eval::combine::{registry, CombinerKind, DECISION_THRESHOLD};
use dropsync_eval::metrics::{compute_metrics, f1_score, window_metrics, MetricsReport};
use dropsync_eval::DeviceDecision;
use proptest::prelude::*;

const KINDS: [CombinerKind; 3] = [CombinerKind::Mean, CombinerKind::Median, CombinerKind::Majority];

proptest! {
    #[test]
    fn combiners_ignore_reference_order(probs in prop::collection::vec(0.0..=1.0f64, 1..8), seed in any::<u64>()) {
        let mut shuffled = probs.clone();
        let mut r = dropsync_core::rng::rng(seed);
        rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut r);
        for kind in KINDS {
            let c = kind.build();
            prop_assert!((c.combine(&probs) - c.combine(&shuffled)).abs() < 1e-12, "{}", c.name());
        }
    }

    #[test]
    fn raising_one_probability_never_lowers_the_score(
        probs in prop::collection::vec(0.0..=1.0f64, 1..8),
        at in any::<prop::sample::Index>(),
        bump in 0.0..=1.0f64,
    ) {
        let i = at.index(probs.len());
        let mut higher = probs.clone();
        higher[i] = (higher[i] + bump).min(1.0);
        for kind in KINDS {
            let c = kind.build();
            let (a, b) = (c.combine(&probs), c.combine(&higher));
            prop_assert!(b >= a - 1e-12, "{}: {a} -> {b}", c.name());
            prop_assert!((0.0..=1.0).contains(&a));
        }
    }

    #[test]
    fn unanimous_references_decide_the_label(probs in prop::collection::vec(0.5..=1.0f64, 1..8)) {
        for kind in KINDS {
            prop_assert!(kind.build().combine(&probs) >= DECISION_THRESHOLD);
            let low: Vec<f64> = probs.iter().map(|p| p - 0.5 - 1e-9).collect();
            prop_assert!(kind.build().combine(&low) < DECISION_THRESHOLD);
        }
    }

    #[test]
    fn f1_from_rates_matches_f1_from_counts(tp in 0usize..500, fp in 0usize..500, fn_ in 0usize..500, tn in 0usize..500) {
        let m = MetricsReport::from_counts(tp, fp, fn_, tn);
        prop_assert!((m.f1 - m.f1_from_counts()).abs() < 1e-12);
    }

    #[test]
    fn event_metrics_ignore_decision_order(
        labels in prop::collection::vec((0u32..3, 0usize..20, 0u8..2), 0..25),
        onsets in prop::collection::vec((0u32..3, 0usize..22_000), 0..6),
        seed in any::<u64>(),
    ) {
        let decisions: Vec<DeviceDecision> = labels.iter().map(|&(d, w, l)| decision(d, w * 1000, l)).collect();
        let truth: Vec<DropEvent> = onsets.iter().map(|&(d, o)| DropEvent { device_id: d, onset_sample: o, duration_samples: 100 }).collect();
        let mut shuffled = decisions.clone();
        rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut dropsync_core::rng::rng(seed));
        let mut truth_rev = truth.clone();
        truth_rev.reverse();
        prop_assert_eq!(compute_metrics(&decisions, &truth), compute_metrics(&shuffled, &truth_rev));
    }
}

fn decision(device_id: u32, start: usize, label: u8) -> DeviceDecision {
    DeviceDecision {
        device_id,
        window_start_sample: start,
        window_end_sample: start + 16_000,
        reference_ids: vec![],
        per_reference_probs: vec![],
        combined_score: label as f64,
        label,
    }
}

#[test]
fn combiner_names_round_trip() {
    for kind in KINDS {
        assert_eq!(CombinerKind::from_name(kind.name()).unwrap(), kind);
        assert_eq!(registry().create(kind.name()).unwrap().name(), kind.name());
    }
    assert!(CombinerKind::from_name("max").is_err());
}

#[test]
fn median_of_even_count_averages_the_middle_pair() {
    assert!((CombinerKind::Median.build().combine(&[0.1, 0.9, 0.4, 0.6]) - 0.5).abs() < 1e-15);
}

#[test]
fn small_enumerated_counts() {
    let m = MetricsReport::from_counts(3, 1, 1, 7);
    assert!((m.precision - 0.75).abs() < 1e-15);
    assert!((m.recall - 0.75).abs() < 1e-15);
    assert!((m.f1 - 0.75).abs() < 1e-15);
}

#[test]
fn f1_of_the_reference_operating_point() {
    let f1 = f1_score(0.875, 0.886);
    assert!((f1 - 2.0 * 0.875 * 0.886 / (0.875 + 0.886)).abs() < 1e-15);
    assert!((f1 - 0.880).abs() < 5e-4, "{f1}");
}

#[test]
fn empty_counts_give_zero() {
    let m = MetricsReport::from_counts(0, 0, 0, 0);
    assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
    assert_eq!(compute_metrics(&[], &[]), m);
}

#[test]
fn window_metrics_count_every_cell() {
    let m = window_metrics(&[1, 1, 0, 0, 1], &[1, 0, 1, 0, 1]);
    assert_eq!((m.tp, m.fp, m.fn_, m.tn), (2, 1, 1, 1));
}

#[test]
fn event_matching_uses_device_and_window() {
    let truth = [
        DropEvent { device_id: 1, onset_sample: 20_000, duration_samples: 9_600 },
        DropEvent { device_id: 2, onset_sample: 50_000, duration_samples: 9_600 },
    ];
    let d = [
        decision(1, 10_000, 1), // contains the device-1 onset
        decision(1, 12_000, 1), // same onset again: no second match
        decision(2, 10_000, 1), // wrong range for device 2
        decision(2, 45_000, 0), // misses the device-2 onset
        decision(3, 0, 0),
    ];
    let m = compute_metrics(&d, &truth);
    assert_eq!((m.tp, m.fp, m.fn_, m.tn), (1, 2, 1, 1));
}
