use attnhar::model::{
    apply_attention, attention_scores, build_attention_model, build_early_fusion_model,
    build_late_fusion_model, build_model, build_no_attention_model, images_to_tensor,
    AttentionParams,
};
use attnhar::nn::{Checkpoint, Graph, Mode, ParamStore, Tensor};
use attnhar::{DatasetMeta, HarModel, ImageKind, Matrix, ModelConfig, ModelVariant, SegmentImage};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_meta() -> DatasetMeta {
    DatasetMeta::generic(3, 3, 4, 2, 32)
}

fn small_cfg(seed: u64) -> ModelConfig {
    let mut cfg = ModelConfig {
        seed,
        hidden_units: 16,
        ..ModelConfig::default()
    };
    cfg.block.filters_per_kernel = 4;
    cfg
}

fn random_images(n: usize, sensors: usize, c: usize, k: usize, seed: u64) -> Vec<SegmentImage> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| SegmentImage {
            images: (0..sensors)
                .map(|_| Matrix::from_vec(c, k, (0..c * k).map(|_| rng.random_range(0.0..1.0)).collect()))
                .collect(),
            kind: ImageKind::Dft,
            label: i % 4,
            subject_id: 0,
        })
        .collect()
}

fn set_param(model: &mut HarModel, name: &str, data: Vec<f64>) {
    let store = model.params_mut();
    let id = store.find(name).unwrap_or_else(|| panic!("no parameter {name}"));
    let shape = store.value(id).shape().to_vec();
    store.param_mut(id).value = Tensor::new(shape, data).unwrap();
}

#[test]
fn daily_sensor_vector_length() {
    let meta = DatasetMeta::generic(5, 9, 19, 8, 25);
    let m = build_attention_model(&meta, (9, 16), &ModelConfig::default()).unwrap();
    assert_eq!(m.sensor_vector_len(), Some(768));
    let early = build_early_fusion_model(&meta, (9, 16), &ModelConfig::default()).unwrap();
    assert_eq!(early.sensor_vector_len(), None);
}

#[test]
fn zero_image_gives_zero_sensor_vector() {
    let m = build_attention_model(&small_meta(), (3, 8), &small_cfg(1)).unwrap();
    let zero = Tensor::zeros(&[2, 3, 3, 8]);
    for mode in [Mode::Infer, Mode::Train] {
        let mut g = Graph::new();
        let out = m.forward(&mut g, &zero, mode).unwrap();
        let f = g.value(out.sensor_features.unwrap());
        assert_eq!(f.shape(), &[2, 3, m.sensor_vector_len().unwrap()]);
        assert!(f.data().iter().all(|&v| v == 0.0));
    }
}

#[test]
fn swapping_sensors_swaps_shared_vectors() {
    let m = build_attention_model(&small_meta(), (3, 8), &small_cfg(2)).unwrap();
    let imgs = random_images(1, 3, 3, 8, 5);
    let mut swapped = imgs[0].clone();
    swapped.images.swap(0, 2);
    let features = |img: &SegmentImage| {
        let mut g = Graph::new();
        let out = m.forward(&mut g, &images_to_tensor(&[img]).unwrap(), Mode::Infer).unwrap();
        g.value(out.sensor_features.unwrap()).clone()
    };
    let (a, b) = (features(&imgs[0]), features(&swapped));
    let l = m.sensor_vector_len().unwrap();
    let row = |t: &Tensor, s: usize| t.data()[s * l..(s + 1) * l].to_vec();
    assert_eq!(row(&a, 0), row(&b, 2));
    assert_eq!(row(&a, 2), row(&b, 0));
    assert_eq!(row(&a, 1), row(&b, 1));
    assert_ne!(row(&a, 0), row(&a, 2));
}

#[test]
fn per_sensor_weights_break_the_symmetry() {
    let mut cfg = small_cfg(2);
    cfg.share_sensor_weights = false;
    let m = build_attention_model(&small_meta(), (3, 8), &cfg).unwrap();
    let mut img = random_images(1, 3, 3, 8, 5).remove(0);
    img.images[2] = img.images[0].clone();
    let mut g = Graph::new();
    let out = m.forward(&mut g, &images_to_tensor(&[&img]).unwrap(), Mode::Infer).unwrap();
    let f = g.value(out.sensor_features.unwrap());
    let l = m.sensor_vector_len().unwrap();
    assert_ne!(f.data()[..l], f.data()[2 * l..3 * l]);
}

/// Attention parameters in a standalone store.
fn attention_store(sensors: usize, len: usize, seed: u64) -> (ParamStore, AttentionParams) {
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = AttentionParams::register(&mut store, &mut rng, sensors, len);
    (store, p)
}

fn scores(store: &ParamStore, p: &AttentionParams, f: Tensor) -> Vec<f64> {
    let mut g = Graph::new();
    let x = g.input(f);
    let s = attention_scores(&mut g, store, x, p).unwrap();
    g.value(s).data().to_vec()
}

#[test]
fn zero_attention_weights_are_uniform() {
    let (store, p) = attention_store(4, 6, 0);
    assert!(store.value(p.w_mix).data().iter().all(|&v| v == 0.0));
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let f = Tensor::new(vec![2, 4, 6], (0..48).map(|_| rng.random_range(-3.0..3.0)).collect()).unwrap();
    for v in scores(&store, &p, f) {
        assert!((v - 0.25).abs() < 1e-15);
    }
}

#[test]
fn attention_score_hand_value() {
    let (mut store, p) = attention_store(2, 3, 0);
    // tanh(b) = (0.5, -0.5) with W = 0
    store.param_mut(p.b).value = Tensor::from_vec(vec![0.5f64.atanh(), (-0.5f64).atanh()]);
    let s = scores(&store, &p, Tensor::zeros(&[1, 2, 3]));
    let e = 1.0f64.exp();
    assert!((s[0] - e / (e + 1.0)).abs() < 1e-12);
    assert!((s[0] - 0.7311).abs() < 1e-4);

    let mut g = Graph::new();
    let x = g.input(Tensor::new(vec![1, 2], vec![1.0, -1.0]).unwrap());
    let sm = g.softmax(x);
    let v = g.value(sm).data();
    assert!((v[0] - 0.8808).abs() < 1e-4 && (v[1] - 0.1192).abs() < 1e-4);
}

fn apply(f: &Tensor, a: Vec<f64>) -> Tensor {
    let mut g = Graph::new();
    let fx = g.input(f.clone());
    let n = f.shape()[0];
    let ax = g.input(Tensor::new(vec![n, a.len() / n], a).unwrap());
    let out = apply_attention(&mut g, fx, ax).unwrap();
    g.value(out).clone()
}

#[test]
fn one_hot_and_uniform_attention() {
    let f = Tensor::new(vec![1, 3, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
    assert_eq!(apply(&f, vec![0.0, 1.0, 0.0]).data(), &[0.0, 0.0, 3.0, 4.0, 0.0, 0.0]);
    let u = apply(&f, vec![1.0 / 3.0; 3]);
    for (a, b) in u.data().iter().zip(f.data()) {
        assert!((a - b / 3.0).abs() < 1e-15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn attention_is_a_probability_vector(seed in any::<u64>(), s in 1usize..6, l in 1usize..10) {
        let (mut store, p) = attention_store(s, l, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        for id in [p.w_mix, p.b] {
            let shape = store.value(id).shape().to_vec();
            let n = store.value(id).len();
            let data = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            store.param_mut(id).value = Tensor::new(shape, data).unwrap();
        }
        let f = Tensor::new(vec![3, s, l], (0..3 * s * l).map(|_| rng.random_range(-5.0..5.0)).collect()).unwrap();
        let out = scores(&store, &p, f);
        for row in out.chunks(s) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|&v| v > 0.0 && v < 1.0 || s == 1));
        }
    }

    #[test]
    fn attention_scales_row_norms(
        f in proptest::collection::vec(-4.0..4.0f64, 12),
        a in proptest::collection::vec(0.0..1.0f64, 3),
    ) {
        let ft = Tensor::new(vec![1, 3, 4], f.clone()).unwrap();
        let out = apply(&ft, a.clone());
        for s in 0..3 {
            let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let want = a[s] * norm(&f[s * 4..s * 4 + 4]);
            prop_assert!((norm(&out.data()[s * 4..s * 4 + 4]) - want).abs() < 1e-12);
        }
    }
}

#[test]
fn uniform_attention_matches_no_attention_variant() {
    let meta = small_meta();
    let mut with = build_attention_model(&meta, (3, 8), &small_cfg(4)).unwrap();
    set_param(&mut with, "attention.b", vec![0.0; 3]);
    set_param(&mut with, "attention.W", vec![0.0; 9]);
    let mut without = build_no_attention_model(&meta, (3, 8), &small_cfg(99)).unwrap();
    let copied = without.params_mut().copy_matching_from(with.params());
    assert_eq!(copied, without.params().len());

    let imgs = random_images(5, 3, 3, 8, 11);
    let (a, b) = (with.predict(&imgs).unwrap(), without.predict(&imgs).unwrap());
    for (x, y) in a.probs.iter().flatten().zip(b.probs.iter().flatten()) {
        assert!((x - y).abs() < 1e-12);
    }
    for row in b.attention.unwrap() {
        assert!(row.iter().all(|&v| v == 1.0 / 3.0));
    }
}

#[test]
fn every_variant_outputs_probabilities() {
    let meta = small_meta();
    let imgs = random_images(6, 3, 3, 8, 3);
    for variant in [
        ModelVariant::Attention,
        ModelVariant::NoAttention,
        ModelVariant::Early,
        ModelVariant::Late,
    ] {
        let m = build_model(variant, &meta, (3, 8), &small_cfg(7)).unwrap();
        let p = m.predict(&imgs).unwrap();
        assert_eq!(p.probs.len(), 6);
        for row in &p.probs {
            assert_eq!(row.len(), 4);
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12, "{variant:?}");
        }
        let fused = matches!(variant, ModelVariant::Attention | ModelVariant::NoAttention);
        assert_eq!(p.attention.is_some(), fused, "{variant:?}");
    }
}

#[test]
fn late_fusion_averages_sensor_softmaxes() {
    let m = build_late_fusion_model(&small_meta(), (3, 8), &small_cfg(5)).unwrap();
    let imgs = random_images(2, 3, 3, 8, 1);
    let refs: Vec<&SegmentImage> = imgs.iter().collect();
    let mut g = Graph::new();
    let out = m.forward(&mut g, &images_to_tensor(&refs).unwrap(), Mode::Infer).unwrap();
    assert_eq!(out.logits.len(), 3);
    let mut want = vec![0.0; 8];
    for &l in &out.logits {
        for (row, w) in g.value(l).data().chunks(4).zip(want.chunks_mut(4)) {
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|v| (v - mx).exp()).sum();
            for (x, o) in row.iter().zip(w) {
                *o += (x - mx).exp() / z / 3.0;
            }
        }
    }
    for (a, b) in g.value(out.probs).data().iter().zip(&want) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn early_fusion_sees_sensors_as_channels() {
    let m = build_early_fusion_model(&small_meta(), (3, 8), &small_cfg(5)).unwrap();
    let first = m.params().entries().iter().find(|e| e.name.ends_with(".kernel")).unwrap();
    assert_eq!(first.param.value.shape()[1], 3);
}

#[test]
fn wrong_input_shape_is_rejected() {
    let meta = small_meta();
    let m = build_attention_model(&meta, (3, 8), &small_cfg(0)).unwrap();
    assert!(m.predict(&random_images(2, 3, 3, 6, 0)).is_err());
    assert!(m.predict(&random_images(2, 2, 3, 8, 0)).is_err());
    assert!(build_attention_model(&meta, (4, 8), &small_cfg(0)).is_err());
}

#[test]
fn single_sensor_skips_the_inter_block() {
    let meta = DatasetMeta::generic(1, 3, 2, 1, 32);
    let m = build_attention_model(&meta, (3, 8), &small_cfg(0)).unwrap();
    assert_eq!(m.fused_len(), m.sensor_vector_len());
    assert!(!m.params().entries().iter().any(|e| e.name.starts_with("inter_block")));
    let p = m.predict(&random_images(2, 1, 3, 8, 0)).unwrap();
    assert!(p.attention.unwrap().iter().all(|r| r == &[1.0]));
}

#[test]
fn checkpoint_round_trip() {
    let meta = small_meta();
    let m = build_attention_model(&meta, (3, 8), &small_cfg(12)).unwrap();
    let bytes = m.to_checkpoint().unwrap().to_bytes().unwrap();
    let ck = Checkpoint::from_bytes(&bytes).unwrap();
    let back = HarModel::from_checkpoint(&ck, Some(&meta)).unwrap();
    assert_eq!(back.arch(), m.arch());
    let imgs = random_images(3, 3, 3, 8, 2);
    assert_eq!(back.predict(&imgs).unwrap(), m.predict(&imgs).unwrap());

    let other = DatasetMeta::generic(3, 3, 5, 2, 32);
    assert!(HarModel::from_checkpoint(&ck, Some(&other)).is_err());
}

#[test]
fn same_seed_same_weights() {
    let meta = small_meta();
    let a = build_attention_model(&meta, (3, 8), &small_cfg(3)).unwrap();
    let b = build_attention_model(&meta, (3, 8), &small_cfg(3)).unwrap();
    let c = build_attention_model(&meta, (3, 8), &small_cfg(4)).unwrap();
    let values = |m: &HarModel| m.params().entries().iter().map(|e| e.param.value.clone()).collect::<Vec<_>>();
    assert_eq!(values(&a), values(&b));
    assert_ne!(values(&a), values(&c));
}
