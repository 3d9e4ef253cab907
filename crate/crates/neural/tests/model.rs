use dropsync_neural::gradcheck::{check_input, check_params, GradCheckReport, DEFAULT_STEP};
use dropsync_neural::loss::{bce_with_logit, bce_with_logit_grad};
use dropsync_neural::model::Encoder;
use dropsync_neural::{checkpoint, HeadKind, ModelConfig, Normalizer, Parameterized, Preset, SiameseModel, Tensor};
use rand::Rng;

fn small(head: HeadKind) -> ModelConfig {
    ModelConfig { n_bins: 6, conv_channels: 4, kernel: 5, lstm_hidden: 4, mlp_hidden: 3, n_heads: 2, head }
}

fn random(r: &mut impl Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| r.gen_range(-1.5..1.5)).collect()).unwrap()
}

fn full_model_check(head: HeadKind, seed: u64) -> GradCheckReport {
    let mut r = dropsync_core::rng::rng(seed);
    let model = SiameseModel::new(small(head), &mut r).unwrap();
    let (h, x) = (random(&mut r, 9, 6), random(&mut r, 9, 6));
    let label = 1;
    let cache = model.forward(&h, &x).unwrap();
    let mut grads = model.zeros_like();
    let (dh, dx) = model.backward(&cache, bce_with_logit_grad(cache.logit, label), &mut grads, true);
    let obj = |m: &SiameseModel, h: &Tensor, x: &Tensor| {
        let c = m.forward(h, x).unwrap();
        (bce_with_logit(c.logit, label), c.kink_signature())
    };
    let mut report = check_params(&model, &grads, |m| obj(m, &h, &x), DEFAULT_STEP, 1);
    report.merge(check_input(&h, &dh.unwrap(), |t| obj(&model, t, &x), DEFAULT_STEP, 1));
    report.merge(check_input(&x, &dx.unwrap(), |t| obj(&model, &h, t), DEFAULT_STEP, 1));
    report
}

#[test]
fn attention_model_passes_gradient_check() {
    let r = full_model_check(HeadKind::Attention, 21);
    assert!(r.max_rel_error < 1e-4, "{r:?}");
    assert!(r.checked > 300, "{r:?}");
}

#[test]
fn concat_model_passes_gradient_check() {
    let r = full_model_check(HeadKind::Concat, 22);
    assert!(r.max_rel_error < 1e-4, "{r:?}");
    assert!(r.checked > 300, "{r:?}");
}

#[test]
fn key_from_reference_variant_passes_gradient_check() {
    let r = full_model_check(HeadKind::AttentionKeyRef, 23);
    assert!(r.max_rel_error < 1e-4, "{r:?}");
}

#[test]
fn output_is_a_probability_even_for_identical_inputs() {
    let mut r = dropsync_core::rng::rng(24);
    for head in [HeadKind::Attention, HeadKind::Concat] {
        let m = SiameseModel::new(small(head), &mut r).unwrap();
        for _ in 0..10 {
            let h = random(&mut r, 12, 6);
            for p in [m.predict(&h, &h).unwrap(), m.predict(&h, &random(&mut r, 12, 6)).unwrap()] {
                assert!(p > 0.0 && p < 1.0 && p.is_finite());
            }
        }
    }
}

#[test]
fn zero_final_layer_gives_one_half() {
    let mut r = dropsync_core::rng::rng(25);
    for head in [HeadKind::Attention, HeadKind::Concat] {
        let mut m = SiameseModel::new(small(head), &mut r).unwrap();
        m.output.weight.value.data.iter_mut().for_each(|w| *w = 0.0);
        m.output.bias.value.data[0] = 0.0;
        assert_eq!(m.predict(&random(&mut r, 8, 6), &random(&mut r, 8, 6)).unwrap(), 0.5);
    }
}

#[test]
fn shape_mismatch_is_rejected() {
    let mut r = dropsync_core::rng::rng(26);
    let m = SiameseModel::new(small(HeadKind::Attention), &mut r).unwrap();
    assert!(m.predict(&random(&mut r, 8, 6), &random(&mut r, 9, 6)).is_err());
    assert!(m.predict(&random(&mut r, 8, 5), &random(&mut r, 8, 5)).is_err());
}

#[test]
fn both_branches_share_one_encoder() {
    let mut r = dropsync_core::rng::rng(27);
    let m = SiameseModel::new(small(HeadKind::Attention), &mut r).unwrap();
    let (a, b) = m.branches();
    assert!(std::ptr::eq(a, b));
    assert!(std::ptr::eq(a.conv1.weight.value.data.as_ptr(), b.conv1.weight.value.data.as_ptr()));
    let x = random(&mut r, 10, 6);
    assert_eq!(a.forward(&x).unwrap().output(), b.forward(&x).unwrap().output());
    // Encoder parameters appear once in the parameter list.
    let names: Vec<&str> = m.params().iter().map(|p| p.name.as_str()).collect();
    assert_eq!(names.iter().filter(|n| n.starts_with("encoder.conv1")).count(), 2);
}

#[test]
fn encoder_decimates_time_by_four() {
    let mut r = dropsync_core::rng::rng(28);
    let e = Encoder::new(&small(HeadKind::Attention), &mut r).unwrap();
    for t in 2..30 {
        let out = e.forward(&random(&mut r, t, 6)).unwrap();
        assert_eq!(out.output().rows(), t.div_ceil(2).div_ceil(2), "T = {t}");
        assert_eq!(Encoder::output_len(t), out.output().rows());
    }
}

#[test]
fn presets_and_head_registry() {
    let desk = ModelConfig::preset(Preset::Desk, 257);
    assert_eq!((desk.conv_channels, desk.lstm_hidden, desk.mlp_hidden, desk.n_heads, desk.kernel), (64, 128, 64, 4, 5));
    let paper = ModelConfig::preset(Preset::Paper, 257);
    assert_eq!((paper.conv_channels, paper.lstm_hidden, paper.mlp_hidden, paper.n_heads), (512, 1024, 512, 8));
    let m = SiameseModel::new(desk, &mut dropsync_core::rng::rng(0)).unwrap();
    assert!((250_000..500_000).contains(&m.num_params()), "{}", m.num_params());
    assert_eq!(HeadKind::from_name("attention-kref").unwrap(), HeadKind::AttentionKeyRef);
    assert!(HeadKind::from_name("lstm").is_err());
    let bad = ModelConfig { n_heads: 3, ..small(HeadKind::Attention) };
    assert!(SiameseModel::new(bad, &mut dropsync_core::rng::rng(0)).is_err());
}

#[test]
fn normalizer_standardises() {
    let a: Vec<f32> = vec![1.0, 2.0, 3.0, 4.0];
    let b: Vec<f32> = vec![5.0, 6.0, 7.0, 8.0];
    let n = Normalizer::fit([a.as_slice(), b.as_slice()]).unwrap();
    assert!((n.mean - 4.5).abs() < 1e-12);
    assert!((n.std - 5.25f64.sqrt()).abs() < 1e-12);
    let t = n.apply(&a, 2).unwrap();
    assert_eq!(t.shape, vec![2, 2]);
    assert!(n.apply(&a, 3).is_err());
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let mut r = dropsync_core::rng::rng(29);
    for head in [HeadKind::Attention, HeadKind::Concat] {
        let mut m = SiameseModel::new(small(head), &mut r).unwrap();
        m.normalizer = Normalizer { mean: -37.123456789012345, std: 0.1 + 1e-17 };
        let back = checkpoint::from_json(&checkpoint::to_json(&m).unwrap()).unwrap();
        assert_eq!(back, m);
        for (p, q) in m.params().iter().zip(back.params()) {
            assert!(p.data().iter().zip(q.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        checkpoint::save(&m, &path).unwrap();
        assert_eq!(checkpoint::load(&path).unwrap(), m);
    }
}

#[test]
fn checkpoint_rejects_mismatched_parameters() {
    let m = SiameseModel::new(small(HeadKind::Attention), &mut dropsync_core::rng::rng(30)).unwrap();
    let mut c = checkpoint::Checkpoint::from_model(&m);
    c.params[0].shape = vec![1, 2, 3];
    assert!(c.into_model().is_err());
    let mut c = checkpoint::Checkpoint::from_model(&m);
    c.params.pop();
    assert!(c.into_model().is_err());
}
