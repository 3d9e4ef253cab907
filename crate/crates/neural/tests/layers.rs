use dropsync_neural::gradcheck::{check_input, check_params, DEFAULT_STEP};
use dropsync_neural::layers::{maxpool_time, maxpool_time_backward, Conv1d, Dense, Lstm, Mha};
use dropsync_neural::{Parameterized, Tensor};
use rand::Rng;

fn rng(seed: u64) -> dropsync_core::rng::Rng {
    dropsync_core::rng::rng(seed)
}

fn random(r: &mut impl Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Fixed random linear read-out `sum c_i y_i` used as a scalar objective.
fn readout(y: &Tensor, c: &Tensor) -> f64 {
    y.data.iter().zip(&c.data).map(|(a, b)| a * b).sum()
}

fn naive_conv(x: &Tensor, conv: &Conv1d) -> Vec<f64> {
    let (t_len, c_in, c_out, k) = (x.rows(), conv.c_in(), conv.c_out(), conv.kernel());
    let w = &conv.weight.value.data;
    let mut out = vec![0.0; t_len * c_out];
    for t in 0..t_len {
        for o in 0..c_out {
            let mut acc = conv.bias.value.data[o];
            for j in 0..k {
                let src = t as isize + j as isize - (k / 2) as isize;
                if src < 0 || src >= t_len as isize {
                    continue;
                }
                for i in 0..c_in {
                    acc += x.at(src as usize, i) * w[(j * c_in + i) * c_out + o];
                }
            }
            out[t * c_out + o] = acc.max(0.0);
        }
    }
    out
}

#[test]
fn conv_identity_kernel_passes_positive_input() {
    let mut conv = Conv1d::new("c", 1, 1, 5, &mut rng(1)).unwrap();
    conv.weight.value.data = vec![0.0, 0.0, 1.0, 0.0, 0.0];
    conv.bias.value.data = vec![0.0];
    let x = Tensor::matrix(6, 1, vec![0.5, 1.0, 2.0, 0.1, 3.0, 4.0]).unwrap();
    assert_eq!(conv.forward(&x).unwrap().data, x.data);
}

#[test]
fn conv_zero_input_gives_relu_bias() {
    let mut conv = Conv1d::new("c", 3, 4, 5, &mut rng(2)).unwrap();
    conv.bias.value.data = vec![0.3, -0.2, 0.0, 1.5];
    let y = conv.forward(&Tensor::zeros(&[7, 3])).unwrap();
    for t in 0..7 {
        assert_eq!(y.row(t), &[0.3, 0.0, 0.0, 1.5]);
    }
}

#[test]
fn conv_matches_direct_summation() {
    let mut r = rng(3);
    let conv = Conv1d::new("c", 3, 4, 5, &mut r).unwrap();
    let x = random(&mut r, 12, 3);
    let y = conv.forward(&x).unwrap();
    let naive = naive_conv(&x, &conv);
    assert_eq!(y.shape, vec![12, 4]);
    for (a, b) in y.data.iter().zip(&naive) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

#[test]
fn conv_rejects_channel_mismatch_and_even_kernel() {
    let conv = Conv1d::new("c", 3, 4, 5, &mut rng(4)).unwrap();
    assert!(conv.forward(&Tensor::zeros(&[5, 2])).is_err());
    assert!(Conv1d::new("c", 3, 4, 4, &mut rng(4)).is_err());
}

#[test]
fn conv_gradients_pass_finite_differences() {
    let mut r = rng(5);
    let conv = Conv1d::new("c", 3, 4, 5, &mut r).unwrap();
    let x = random(&mut r, 10, 3);
    let c = random(&mut r, 10, 4);
    let out = conv.forward(&x).unwrap();
    let mut grads = conv.clone();
    grads.zero_grads();
    let dx = conv.backward(&x, &out, c.clone(), &mut grads);
    let probe = |m: &Conv1d, x: &Tensor| {
        let y = m.forward(x).unwrap();
        (readout(&y, &c), y.data.iter().map(|&v| (v > 0.0) as u64).collect())
    };
    let p = check_params(&conv, &grads, |m| probe(m, &x), DEFAULT_STEP, 1);
    let i = check_input(&x, &dx, |x| probe(&conv, x), DEFAULT_STEP, 1);
    assert!(p.max_rel_error < 1e-4 && i.max_rel_error < 1e-4, "{p:?} {i:?}");
    assert!(p.checked > 40 && i.checked > 20);
}

#[test]
fn maxpool_enumerated_and_constant() {
    let x = Tensor::matrix(4, 2, vec![1.0, 7.0, 3.0, 7.0, 2.0, 7.0, 5.0, 7.0]).unwrap();
    let (y, _) = maxpool_time(&x);
    assert_eq!(y.data, vec![3.0, 7.0, 5.0, 7.0]);
    let (y, _) = maxpool_time(&Tensor::matrix(5, 1, vec![2.0; 5]).unwrap());
    assert_eq!(y.data, vec![2.0; 3]);
}

#[test]
fn maxpool_backward_routes_to_argmax() {
    let mut r = rng(6);
    let x = random(&mut r, 9, 3);
    let c = random(&mut r, 5, 3);
    let (_, idx) = maxpool_time(&x);
    let dx = maxpool_time_backward(9, &idx, &c);
    let report = check_input(
        &x,
        &dx,
        |x| {
            let (y, idx) = maxpool_time(x);
            (readout(&y, &c), idx.iter().map(|&i| i as u64).collect())
        },
        DEFAULT_STEP,
        1,
    );
    assert!(report.max_rel_error < 1e-8, "{report:?}");
    assert_eq!(dx.data.iter().filter(|&&g| g != 0.0).count(), 15);
}

#[test]
fn maxpool_tie_is_excluded_from_check() {
    let x = Tensor::matrix(2, 1, vec![1.0, 1.0]).unwrap();
    let (y, idx) = maxpool_time(&x);
    assert_eq!(idx, vec![0]);
    let dx = maxpool_time_backward(2, &idx, &Tensor::matrix(1, 1, vec![1.0]).unwrap());
    let report = check_input(
        &x,
        &dx,
        |x| {
            let (y, idx) = maxpool_time(x);
            (y.data[0], idx.iter().map(|&i| i as u64).collect())
        },
        DEFAULT_STEP,
        1,
    );
    assert_eq!(y.data, vec![1.0]);
    assert_eq!(report.excluded, 2);
    assert_eq!(report.checked, 0);
}

#[test]
fn dense_gradient_is_exact_for_quadratic_loss() {
    let mut r = rng(7);
    let d = Dense::new("d", 4, 3, &mut r);
    let x = random(&mut r, 5, 4);
    let target = random(&mut r, 5, 3);
    let loss = |m: &Dense, x: &Tensor| {
        let y = m.forward(x).unwrap();
        0.5 * y.data.iter().zip(&target.data).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
    };
    let y = d.forward(&x).unwrap();
    let g_out = Tensor { shape: y.shape.clone(), data: y.data.iter().zip(&target.data).map(|(a, b)| a - b).collect() };
    let mut grads = d.clone();
    grads.zero_grads();
    let dx = d.backward(&x, &g_out, &mut grads);
    let p = check_params(&d, &grads, |m| (loss(m, &x), vec![]), DEFAULT_STEP, 1);
    let i = check_input(&x, &dx, |x| (loss(&d, x), vec![]), DEFAULT_STEP, 1);
    assert!(p.max_rel_error < 1e-8 && i.max_rel_error < 1e-8, "{p:?} {i:?}");
}

#[test]
fn lstm_zero_network_stays_zero() {
    let mut l = Lstm::new("l", 3, 2, &mut rng(8));
    l.zero_grads();
    let (hs, _) = l.forward(&random(&mut rng(9), 6, 3)).unwrap();
    assert!(hs.data.iter().all(|&v| v == 0.0));
}

#[test]
fn lstm_single_step_matches_hand_computation() {
    let mut l = Lstm::new("l", 1, 2, &mut rng(10));
    // Gate columns: i0 i1 f0 f1 g0 g1 o0 o1.
    l.w_x.value.data = vec![0.5, -0.5, 0.1, 0.2, 1.0, -1.0, 0.3, 0.0];
    l.bias.value.data = vec![0.0, 0.1, 1.0, 1.0, 0.0, 0.2, -0.1, 0.4];
    let x = Tensor::matrix(1, 1, vec![2.0]).unwrap();
    let (hs, _) = l.forward(&x).unwrap();
    let s = |z: f64| 1.0 / (1.0 + (-z).exp());
    for j in 0..2 {
        let z: Vec<f64> = (0..4).map(|g| 2.0 * l.w_x.value.data[g * 2 + j] + l.bias.value.data[g * 2 + j]).collect();
        let c = s(z[0]) * z[2].tanh();
        let h = s(z[3]) * c.tanh();
        assert!((hs.data[j] - h).abs() < 1e-15, "unit {j}: {} vs {h}", hs.data[j]);
    }
}

#[test]
fn lstm_bptt_passes_finite_differences() {
    let mut r = rng(11);
    let l = Lstm::new("l", 3, 4, &mut r);
    let x = random(&mut r, 6, 3);
    let c = random(&mut r, 6, 4);
    let (hs, cache) = l.forward(&x).unwrap();
    let mut grads = l.clone();
    grads.zero_grads();
    let dx = l.backward(&x, &hs, &cache, &c, &mut grads);
    let probe = |m: &Lstm, x: &Tensor| (readout(&m.forward(x).unwrap().0, &c), vec![]);
    let p = check_params(&l, &grads, |m| probe(m, &x), DEFAULT_STEP, 1);
    let i = check_input(&x, &dx, |x| probe(&l, x), DEFAULT_STEP, 1);
    assert!(p.max_rel_error < 1e-4 && i.max_rel_error < 1e-4, "{p:?} {i:?}");
}

fn naive_mha(m: &Mha, q_src: &Tensor, k_src: &Tensor, v_src: &Tensor) -> Vec<f64> {
    let proj = |d: &Dense, x: &Tensor| -> Vec<Vec<f64>> {
        (0..x.rows())
            .map(|t| {
                (0..d.d_out())
                    .map(|o| d.bias.value.data[o] + (0..d.d_in()).map(|i| x.at(t, i) * d.weight.value.data[i * d.d_out() + o]).sum::<f64>())
                    .collect()
            })
            .collect()
    };
    let (q, k, v) = (proj(&m.q, q_src), proj(&m.k, k_src), proj(&m.v, v_src));
    let d = m.width();
    let dh = d / m.n_heads;
    let mut concat = vec![vec![0.0; d]; q.len()];
    for h in 0..m.n_heads {
        for i in 0..q.len() {
            let scores: Vec<f64> = (0..k.len())
                .map(|j| (0..dh).map(|e| q[i][h * dh + e] * k[j][h * dh + e]).sum::<f64>() / (dh as f64).sqrt())
                .collect();
            let mx = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let ex: Vec<f64> = scores.iter().map(|s| (s - mx).exp()).collect();
            let z: f64 = ex.iter().sum();
            for j in 0..k.len() {
                for e in 0..dh {
                    concat[i][h * dh + e] += ex[j] / z * v[j][h * dh + e];
                }
            }
        }
    }
    let c = Tensor::matrix(q.len(), d, concat.concat()).unwrap();
    proj(&m.o, &c).concat()
}

#[test]
fn attention_matches_per_head_loop() {
    let mut r = rng(12);
    let m = Mha::new("a", 8, 2, &mut r).unwrap();
    let (h, x) = (random(&mut r, 6, 8), random(&mut r, 6, 8));
    let (out, cache) = m.forward(&h, &h, &x).unwrap();
    for (a, b) in out.data.iter().zip(naive_mha(&m, &h, &h, &x)) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
    for head in 0..2 {
        for row in cache.attention(head).chunks(6) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn attention_with_zero_queries_averages_values() {
    let mut r = rng(13);
    let mut m = Mha::new("a", 4, 2, &mut r).unwrap();
    m.q.weight.value.data.iter_mut().for_each(|w| *w = 0.0);
    m.q.bias.value.data.iter_mut().for_each(|w| *w = 0.0);
    let (h, x) = (random(&mut r, 5, 4), random(&mut r, 5, 4));
    let (out, _) = m.forward(&h, &h, &x).unwrap();
    let v = m.v.forward(&x).unwrap();
    let mean: Vec<f64> = (0..4).map(|c| (0..5).map(|t| v.at(t, c)).sum::<f64>() / 5.0).collect();
    let expected = m.o.forward(&Tensor::matrix(1, 4, mean).unwrap()).unwrap();
    for t in 0..5 {
        for (a, b) in out.row(t).iter().zip(&expected.data) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn saturated_attention_selects_one_value_row() {
    let mut m = Mha::new("a", 2, 1, &mut rng(14)).unwrap();
    for d in [&mut m.q, &mut m.k, &mut m.v, &mut m.o] {
        d.weight.value.data = vec![1.0, 0.0, 0.0, 1.0];
        d.bias.value.data = vec![0.0, 0.0];
    }
    let keys = Tensor::matrix(3, 2, vec![40.0, 0.0, 0.0, 40.0, -40.0, 0.0]).unwrap();
    let values = Tensor::matrix(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
    let query = Tensor::matrix(1, 2, vec![0.0, 1.0]).unwrap();
    let (out, _) = m.forward(&query, &keys, &values).unwrap();
    assert!((out.data[0] - 3.0).abs() < 1e-9 && (out.data[1] - 4.0).abs() < 1e-9, "{:?}", out.data);
}

#[test]
fn attention_rejects_length_mismatch_and_bad_heads() {
    let mut r = rng(15);
    let m = Mha::new("a", 4, 2, &mut r).unwrap();
    assert!(m.forward(&random(&mut r, 5, 4), &random(&mut r, 5, 4), &random(&mut r, 4, 4)).is_err());
    assert!(Mha::new("a", 6, 4, &mut r).is_err());
}

#[test]
fn attention_gradients_pass_finite_differences() {
    let mut r = rng(16);
    let m = Mha::new("a", 8, 2, &mut r).unwrap();
    let (q, k, v) = (random(&mut r, 6, 8), random(&mut r, 6, 8), random(&mut r, 6, 8));
    let c = random(&mut r, 6, 8);
    let (_, cache) = m.forward(&q, &k, &v).unwrap();
    let mut grads = m.clone();
    grads.zero_grads();
    let (dq, dk, dv) = m.backward(&q, &k, &v, &cache, &c, &mut grads);
    let obj = |m: &Mha, q: &Tensor, k: &Tensor, v: &Tensor| (readout(&m.forward(q, k, v).unwrap().0, &c), vec![]);
    let mut report = check_params(&m, &grads, |m| obj(m, &q, &k, &v), DEFAULT_STEP, 1);
    report.merge(check_input(&q, &dq, |x| obj(&m, x, &k, &v), DEFAULT_STEP, 1));
    report.merge(check_input(&k, &dk, |x| obj(&m, &q, x, &v), DEFAULT_STEP, 1));
    report.merge(check_input(&v, &dv, |x| obj(&m, &q, &k, x), DEFAULT_STEP, 1));
    assert!(report.max_rel_error < 1e-4, "{report:?}");
}
