use attnhar_nn::{
    Activation, BatchNormParams, Graph, Mode, NnError, Padding, ParamKind, ParamStore, Tensor,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn t(shape: &[usize], data: &[f64]) -> Tensor {
    Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
}

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    t(shape, &(0..n).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>())
}

fn conv(x: Tensor, k: Tensor, b: Tensor, pad: Padding) -> Result<Tensor, NnError> {
    let mut s = ParamStore::new();
    let kid = s.add("k", ParamKind::Weight, k);
    let bid = s.add("b", ParamKind::Bias, b);
    let mut g = Graph::new();
    let xn = g.input(x);
    let kn = g.param(&s, kid);
    let bn = g.param(&s, bid);
    let y = g.conv2d(xn, kn, bn, pad)?;
    Ok(g.value(y).clone())
}

/// Quadruple-loop cross-correlation with explicit zero padding.
fn conv_oracle(x: &Tensor, k: &Tensor, b: &Tensor, pad: Padding) -> Tensor {
    let [n, cin, h, w] = x.shape().try_into().unwrap();
    let [cout, _, p, q] = k.shape().try_into().unwrap();
    let ho = h + pad.top + pad.bottom - p + 1;
    let wo = w + pad.left + pad.right - q + 1;
    let mut out = Tensor::zeros(&[n, cout, ho, wo]);
    for ni in 0..n {
        for co in 0..cout {
            for i in 0..ho {
                for j in 0..wo {
                    let mut acc = b.data()[co];
                    for ci in 0..cin {
                        for pi in 0..p {
                            for qi in 0..q {
                                let ii = i as isize + pi as isize - pad.top as isize;
                                let jj = j as isize + qi as isize - pad.left as isize;
                                if ii < 0 || jj < 0 || ii >= h as isize || jj >= w as isize {
                                    continue;
                                }
                                acc += x.at(&[ni, ci, ii as usize, jj as usize])
                                    * k.at(&[co, ci, pi, qi]);
                            }
                        }
                    }
                    out.set(&[ni, co, i, j], acc);
                }
            }
        }
    }
    out
}

#[test]
fn conv_hand_example() {
    let y = conv(
        t(&[1, 1, 2, 2], &[1.0, 2.0, 3.0, 4.0]),
        t(&[1, 1, 2, 2], &[1.0, 0.0, 0.0, 1.0]),
        t(&[1], &[0.0]),
        Padding::none(),
    )
    .unwrap();
    assert_eq!(y.shape(), &[1, 1, 1, 1]);
    assert_eq!(y.data(), &[5.0]);
}

#[test]
fn conv_ones_sum() {
    let y = conv(
        Tensor::full(&[1, 1, 3, 3], 1.0),
        Tensor::full(&[1, 1, 3, 3], 1.0),
        t(&[1], &[0.0]),
        Padding::none(),
    )
    .unwrap();
    assert_eq!(y.data(), &[9.0]);
}

#[test]
fn conv_unit_kernel_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random(&mut rng, &[2, 1, 4, 5]);
    let y = conv(
        x.clone(),
        Tensor::full(&[1, 1, 1, 1], 1.0),
        t(&[1], &[0.0]),
        Padding::none(),
    )
    .unwrap();
    assert_eq!(y, x);
}

#[test]
fn conv_kernel_too_large() {
    let err = conv(
        Tensor::zeros(&[1, 1, 2, 2]),
        Tensor::zeros(&[1, 1, 3, 3]),
        t(&[1], &[0.0]),
        Padding::none(),
    )
    .unwrap_err();
    assert!(matches!(err, NnError::KernelTooLarge { .. }));
}

#[test]
fn conv_same_padding_keeps_size() {
    for (p, q) in [(1, 3), (3, 3), (5, 5), (2, 4)] {
        let y = conv(
            Tensor::full(&[1, 2, 9, 16], 1.0),
            Tensor::full(&[3, 2, p, q], 1.0),
            Tensor::zeros(&[3]),
            Padding::same(p, q),
        )
        .unwrap();
        assert_eq!(y.shape(), &[1, 3, 9, 16]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]
    #[test]
    fn conv_matches_direct_loops(
        seed in 0u64..1000,
        n in 1usize..3, cin in 1usize..3, cout in 1usize..3,
        h in 1usize..7, w in 1usize..7, p in 1usize..5, q in 1usize..5,
        same in proptest::bool::ANY,
    ) {
        let pad = if same { Padding::same(p, q) } else { Padding::none() };
        prop_assume!(p <= h + pad.top + pad.bottom && q <= w + pad.left + pad.right);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(&mut rng, &[n, cin, h, w]);
        let k = random(&mut rng, &[cout, cin, p, q]);
        let b = random(&mut rng, &[cout]);
        let fast = conv(x.clone(), k.clone(), b.clone(), pad).unwrap();
        let slow = conv_oracle(&x, &k, &b, pad);
        prop_assert_eq!(fast.shape(), slow.shape());
        for (a, e) in fast.data().iter().zip(slow.data()) {
            // summation order differs only in association, never in terms
            prop_assert!((a - e).abs() <= 1e-12 * (1.0 + e.abs()));
        }
    }
}

fn bn_store(c: usize) -> (ParamStore, BatchNormParams) {
    let mut s = ParamStore::new();
    let bn = BatchNormParams::register(&mut s, "bn", c);
    (s, bn)
}

#[test]
fn batch_norm_two_values() {
    let (s, bn) = bn_store(1);
    let mut g = Graph::new();
    let x = g.input(t(&[2, 1], &[1.0, 3.0]));
    let y = g.batch_norm(&s, x, &bn, Mode::Train).unwrap();
    let expect = 1.0 / (1.0f64 + 1e-5).sqrt();
    let v = g.value(y).data();
    assert!((v[0] + expect).abs() < 1e-15 && (v[1] - expect).abs() < 1e-15);
    assert!((v[0] + 1.0).abs() < 1e-5);
}

#[test]
fn batch_norm_rejects_single_sample_in_train() {
    let (s, bn) = bn_store(1);
    let mut g = Graph::new();
    let x = g.input(t(&[1, 1], &[1.0]));
    assert!(matches!(
        g.batch_norm(&s, x, &bn, Mode::Train),
        Err(NnError::BatchTooSmall(1))
    ));
    assert!(g.batch_norm(&s, x, &bn, Mode::Infer).is_ok());
}

#[test]
fn batch_norm_train_output_is_standardized() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..20 {
        let (s, bn) = bn_store(3);
        let mut g = Graph::new();
        let x = g.input(random(&mut rng, &[5, 3, 2, 4]).map(|v| 4.0 * v + 2.0));
        let y = g.batch_norm(&s, x, &bn, Mode::Train).unwrap();
        let v = g.value(y);
        for c in 0..3 {
            let vals: Vec<f64> = (0..5)
                .flat_map(|n| (0..8).map(move |i| (n, i)))
                .map(|(n, i)| v.at(&[n, c, i / 4, i % 4]))
                .collect();
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / vals.len() as f64;
            assert!(m.abs() < 1e-6);
            // the epsilon inside the square root shrinks the variance slightly
            assert!((var - 1.0).abs() < 1e-3, "var {var}");
        }
    }
}

#[test]
fn batch_norm_running_stats_and_infer() {
    let (mut s, bn) = bn_store(1);
    let mut g = Graph::new();
    let x = g.input(t(&[2, 1], &[1.0, 3.0]));
    g.batch_norm(&s, x, &bn, Mode::Train).unwrap();
    g.commit_running_stats(&mut s);
    assert!((s.value(bn.running_mean).data()[0] - 0.2).abs() < 1e-15);
    assert!((s.value(bn.running_var).data()[0] - 1.0).abs() < 1e-15);

    let mut g = Graph::new();
    let x = g.input(t(&[1, 1], &[0.2]));
    let y = g.batch_norm(&s, x, &bn, Mode::Infer).unwrap();
    assert!(g.value(y).data()[0].abs() < 1e-15);
}

fn dense(x: Tensor, w: Tensor, b: Tensor, act: Activation) -> Result<Tensor, NnError> {
    let mut s = ParamStore::new();
    let wid = s.add("w", ParamKind::Weight, w);
    let bid = s.add("b", ParamKind::Bias, b);
    let mut g = Graph::new();
    let xn = g.input(x);
    let wn = g.param(&s, wid);
    let bn = g.param(&s, bid);
    let y = g.dense(xn, wn, bn, act)?;
    Ok(g.value(y).clone())
}

#[test]
fn dense_examples() {
    let x = t(&[1, 3], &[0.5, -2.0, 7.0]);
    let eye = t(&[3, 3], &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
    assert_eq!(dense(x.clone(), eye, Tensor::zeros(&[3]), Activation::None).unwrap(), x);

    let y = dense(
        t(&[1, 2], &[0.4, 0.4]),
        t(&[1, 2], &[1.0, 1.0]),
        t(&[1], &[-1.0]),
        Activation::Relu,
    )
    .unwrap();
    assert_eq!(y.data(), &[0.0]);

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let y = dense(
        random(&mut rng, &[4, 6]).map(|v| 50.0 * v),
        random(&mut rng, &[5, 6]),
        random(&mut rng, &[5]),
        Activation::Tanh,
    )
    .unwrap();
    assert!(y.data().iter().all(|v| v.abs() <= 1.0));

    assert!(dense(
        t(&[1, 2], &[0.0, 0.0]),
        Tensor::zeros(&[1, 3]),
        Tensor::zeros(&[1]),
        Activation::None
    )
    .is_err());
}

fn softmax(x: Tensor) -> Tensor {
    let mut g = Graph::new();
    let n = g.input(x);
    let y = g.softmax(n);
    g.value(y).clone()
}

#[test]
fn softmax_examples() {
    let u = softmax(Tensor::full(&[1, 4], 0.7));
    assert!(u.data().iter().all(|&p| (p - 0.25).abs() < 1e-15));

    let big = softmax(t(&[1, 2], &[1000.0, 0.0]));
    assert_eq!(big.data()[0], 1.0);
    assert!(big.data()[1] >= 0.0 && big.data()[1] < 1e-300);
}

proptest! {
    #[test]
    fn softmax_rows_sum_to_one_and_shift_invariant(
        row in proptest::collection::vec(-30.0f64..30.0, 1..12),
        c in -100.0f64..100.0,
    ) {
        let m = row.len();
        let a = softmax(t(&[1, m], &row));
        let b = softmax(t(&[1, m], &row.iter().map(|v| v + c).collect::<Vec<_>>()));
        prop_assert!((a.sum() - 1.0).abs() <= 1e-12);
        for (x, y) in a.data().iter().zip(b.data()) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }
}

fn ce(probs: Tensor, labels: &[usize]) -> Result<f64, NnError> {
    let mut g = Graph::new();
    let p = g.input(probs);
    let l = g.cross_entropy(p, labels)?;
    Ok(g.value(l).data()[0])
}

#[test]
fn cross_entropy_examples() {
    assert_eq!(ce(t(&[2, 3], &[0.0, 1.0, 0.0, 1.0, 0.0, 0.0]), &[1, 0]).unwrap(), 0.0);
    let m = 5;
    let uniform = ce(Tensor::full(&[3, m], 1.0 / m as f64), &[0, 4, 2]).unwrap();
    assert!((uniform - (m as f64).ln()).abs() < 1e-12);
    assert!(matches!(
        ce(Tensor::full(&[1, 2], 0.5), &[2]),
        Err(NnError::LabelOutOfRange { label: 2, classes: 2 })
    ));

    // λ‖θ‖² on top of a zero data loss
    let mut s = ParamStore::new();
    s.add("w", ParamKind::Weight, Tensor::from_vec(vec![3.0]));
    let data = ce(t(&[1, 2], &[1.0, 0.0]), &[0]).unwrap();
    assert_eq!(data + 1.0 * s.l2_norm_sq(), 9.0);
}

#[test]
fn max_pool_drops_ragged_edge() {
    let mut g = Graph::new();
    let x = g.input(t(
        &[1, 1, 3, 4],
        &[1.0, 5.0, 2.0, 0.0, 3.0, 4.0, 8.0, 1.0, 9.0, 9.0, 9.0, 9.0],
    ));
    let y = g.max_pool2d(x, 2, 2).unwrap();
    assert_eq!(g.value(y).shape(), &[1, 1, 1, 2]);
    assert_eq!(g.value(y).data(), &[5.0, 8.0]);
}

#[test]
fn shared_param_accumulates_gradient() {
    // mean(w*x1, w*x2) through one parameter node
    let mut s = ParamStore::new();
    let w = s.add("w", ParamKind::Weight, t(&[1, 1], &[2.0]));
    let b = s.add("b", ParamKind::Bias, t(&[1], &[0.0]));
    let mut g = Graph::new();
    let x1 = g.input(t(&[1, 1], &[3.0]));
    let x2 = g.input(t(&[1, 1], &[5.0]));
    let wn = g.param(&s, w);
    let bn = g.param(&s, b);
    assert_eq!(g.param(&s, w), wn);
    let a = g.linear(x1, wn, bn).unwrap();
    let c = g.linear(x2, wn, bn).unwrap();
    let m = g.mean(&[a, c]).unwrap();
    let root = g.weighted_sum(m, Tensor::from_vec(vec![2.0])).unwrap();
    let grads = g.backward(root);
    g.accumulate_param_grads(&grads, &mut s);
    assert_eq!(s.param(w).grad.data(), &[8.0]);
    assert_eq!(s.param(b).grad.data(), &[2.0]);
}
