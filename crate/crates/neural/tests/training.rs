use dropsync_neural::loss::{bce_grad, bce_loss};
use dropsync_neural::param::Param;
use dropsync_neural::train::{batch_gradient, train, StageConfig, StageData, TrainConfig};
use dropsync_neural::{Adam, HeadKind, ModelConfig, PairExample, PairSet, Parameterized, Tensor};
use rand::Rng;

struct Scalar(Param);

impl Parameterized for Scalar {
    fn params(&self) -> Vec<&Param> {
        vec![&self.0]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.0]
    }
}

fn scalar(v: f64) -> Scalar {
    Scalar(Param { name: "w".into(), value: Tensor::new(vec![1], vec![v]).unwrap() })
}

#[test]
fn bce_enumerated_values() {
    assert!((bce_loss(0.5, 0) - std::f64::consts::LN_2).abs() < 1e-15);
    assert!((bce_loss(0.5, 1) - std::f64::consts::LN_2).abs() < 1e-15);
    assert!((bce_loss(1.0 - 1e-7, 1) - 1e-7).abs() < 1e-12);
    assert!(bce_loss(1.0, 0).is_finite());
    assert!(bce_loss(0.0, 1).is_finite());
}

#[test]
fn bce_gradient_matches_finite_differences() {
    for &p in &[0.05, 0.3, 0.5, 0.8, 0.97] {
        for y in [0, 1] {
            let h = 1e-6;
            let numeric = (bce_loss(p + h, y) - bce_loss(p - h, y)) / (2.0 * h);
            assert!((bce_grad(p, y) - numeric).abs() < 1e-6 * numeric.abs().max(1.0), "p {p} y {y}");
        }
    }
}

#[test]
fn adam_first_step_closed_form() {
    let lr = 5e-5;
    for &g in &[0.3, -2.0, 1e-3] {
        let mut w = scalar(1.0);
        let mut adam = Adam::new(lr);
        adam.step(&mut w, &scalar(g)).unwrap();
        let delta = w.0.value.data[0] - 1.0;
        // Bias-corrected first step: m_hat = g, v_hat = g^2.
        let standard = -lr * g / (g.abs() + 1e-8);
        assert!((delta - standard).abs() <= f64::EPSILON, "g {g}: {delta} vs {standard}");
        // The folded-epsilon form differs only at the order of lr * eps / |g|.
        let folded = -lr * g / (g.abs() + 1e-8 * (1.0f64 - 0.999).sqrt() / (1.0 - 0.9));
        assert!((delta - folded).abs() < lr * 1e-8 / g.abs(), "g {g}: {delta} vs {folded}");
        assert!((delta + lr * g.signum()).abs() < 1e-9);
    }
}

#[test]
fn adam_zero_gradient_is_a_fixed_point() {
    let mut w = scalar(0.75);
    let mut adam = Adam::new(0.1);
    for _ in 0..50 {
        adam.step(&mut w, &scalar(0.0)).unwrap();
    }
    assert_eq!(w.0.value.data[0], 0.75);
}

#[test]
fn adam_minimises_a_parabola() {
    let mut w = scalar(1.0);
    let mut adam = Adam::new(0.1);
    let mut trace = vec![1.0f64];
    for _ in 0..100 {
        let g = 2.0 * w.0.value.data[0];
        adam.step(&mut w, &scalar(g)).unwrap();
        trace.push(w.0.value.data[0].abs());
    }
    assert!(trace[2..].windows(2).take(8).all(|p| p[1] < p[0]), "{:?}", &trace[..10]);
    assert!(*trace.last().unwrap() < 0.1, "{}", trace.last().unwrap());
}

#[test]
fn adam_rejects_shape_mismatch() {
    let mut w = scalar(1.0);
    let g = Scalar(Param::zeros("w", &[2]));
    assert!(Adam::new(0.1).step(&mut w, &g).is_err());
}

fn tiny_config() -> ModelConfig {
    ModelConfig { n_bins: 8, conv_channels: 16, kernel: 5, lstm_hidden: 16, mlp_hidden: 16, n_heads: 2, head: HeadKind::Attention }
}

/// Separable toy task: positives carry a step in the hypothesis halfway
/// through, negatives do not.
fn toy_set(n: usize, seed: u64) -> PairSet {
    let mut r = dropsync_core::rng::rng(seed);
    let (frames, bins) = (12, 8);
    let mut set = PairSet::new(frames, bins);
    for i in 0..n {
        let label = (i % 2) as u8;
        let mut hyp = vec![0f32; frames * bins];
        let mut reference = vec![0f32; frames * bins];
        for t in 0..frames {
            for b in 0..bins {
                let base = r.gen_range(-1.0..1.0f32) + ((t + b) % 3) as f32;
                reference[t * bins + b] = base;
                let jump = if label == 1 && t >= frames / 2 { 3.0 } else { 0.0 };
                hyp[t * bins + b] = base + jump + r.gen_range(-0.2..0.2f32);
            }
        }
        set.push(PairExample { hyp, reference, label }).unwrap();
    }
    set
}

fn quick_config(seed: u64, epochs: usize, threads: usize) -> TrainConfig {
    let mut c = TrainConfig::new(tiny_config(), seed);
    c.stage1 = StageConfig { epochs, batch_size: 10, lr: 5e-3 };
    c.stage2 = StageConfig { epochs, batch_size: 6, lr: 5e-3 };
    c.threads = threads;
    c
}

#[test]
fn loss_decreases_on_a_separable_task() {
    let set = toy_set(40, 1);
    let (_, history) = train(&quick_config(3, 30, 0), Some(StageData { train: &set, dev: Some(&set) }), None, None).unwrap();
    let losses: Vec<f64> = history.iter().map(|e| e.train_loss).collect();
    assert_eq!(losses.len(), 30);
    assert!(losses[25..].iter().all(|&l| l < 0.5 * losses[0]), "{losses:?}");
    assert!(history.iter().all(|e| e.dev_f1.is_some()));
    assert!(history.last().unwrap().dev_f1.unwrap() > 0.9, "{:?}", history.last());
}

#[test]
fn same_seed_gives_bit_identical_parameters() {
    let (a, b) = (toy_set(24, 2), toy_set(18, 4));
    let run = |threads| {
        train(&quick_config(9, 2, threads), Some(StageData { train: &a, dev: None }), Some(StageData { train: &b, dev: None }), None).unwrap()
    };
    let (m1, h1) = run(1);
    let (m2, h2) = run(1);
    let (m3, _) = run(3);
    assert_eq!(h1, h2);
    let bits = |m: &dropsync_neural::SiameseModel| m.params().iter().flat_map(|p| p.data().iter().map(|v| v.to_bits())).collect::<Vec<_>>();
    assert_eq!(bits(&m1), bits(&m2));
    assert_eq!(bits(&m1), bits(&m3));
    let (m4, _) = train(&quick_config(10, 2, 1), Some(StageData { train: &a, dev: None }), None, None).unwrap();
    assert_ne!(bits(&m1), bits(&m4));
}

#[test]
fn batch_gradient_is_the_mean_of_pair_gradients() {
    let set = toy_set(5, 5);
    let model = dropsync_neural::SiameseModel::new(tiny_config(), &mut dropsync_core::rng::rng(1)).unwrap();
    let (loss, g) = batch_gradient(&model, &set, &[0, 1, 2, 3, 4]).unwrap();
    let mut sum = model.zeros_like();
    let mut l = 0.0;
    for i in 0..5 {
        let (li, gi) = dropsync_neural::train::pair_gradient(&model, &set, i).unwrap();
        l += li;
        sum.accumulate(&gi);
    }
    sum.scale(0.2);
    assert!((loss - l / 5.0).abs() < 1e-12);
    for (p, q) in g.params().iter().zip(sum.params()) {
        for (a, b) in p.data().iter().zip(q.data()) {
            assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()));
        }
    }
}

#[test]
fn empty_dataset_is_an_error() {
    let empty = PairSet::new(12, 8);
    assert!(train(&quick_config(1, 1, 0), Some(StageData { train: &empty, dev: None }), None, None).is_err());
    assert!(train(&quick_config(1, 1, 0), None, None, None).is_err());
}

#[test]
fn small_model_overfits_ten_pairs() {
    let set = toy_set(10, 6);
    let model = dropsync_neural::SiameseModel::new(tiny_config(), &mut dropsync_core::rng::rng(2)).unwrap();
    let mut model = model;
    model.normalizer = set.fit_normalizer().unwrap();
    let mut adam = Adam::new(5e-3);
    let idx: Vec<usize> = (0..10).collect();
    let mut last = f64::INFINITY;
    for _ in 0..500 {
        let (loss, g) = batch_gradient(&model, &set, &idx).unwrap();
        last = loss;
        if loss < 0.01 {
            break;
        }
        adam.step(&mut model, &g).unwrap();
    }
    assert!(last < 0.01, "{last}");
}
