use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vkchain_tensor::checkpoint;
use vkchain_tensor::gradcheck::relative_error;
use vkchain_tensor::{grad_check, Adam, GradCheckOptions, ParamStore, Tape, Tensor};

fn tensor(shape: &[usize], v: &[f64]) -> Tensor<f64> {
    Tensor::from_f64(shape, v).unwrap()
}

#[test]
fn softmax_of_zeros_is_uniform() {
    let mut t = Tape::<f64>::new();
    let x = t.constant(Tensor::zeros(&[3]));
    let y = t.softmax(x, 0).unwrap();
    for &v in t.value(y).data() {
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
    }
}

#[test]
fn conv1d_identity_kernel() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x: Vec<f64> = (0..2 * 5 * 3).map(|_| rng.random()).collect();
    let mut w = vec![0.0; 3 * 3 * 3];
    for c in 0..3 {
        w[3 * 3 + c * 3 + c] = 1.0; // centre tap, identity over channels
    }
    let mut t = Tape::new();
    let xv = t.constant(tensor(&[2, 5, 3], &x));
    let wv = t.constant(tensor(&[3, 3, 3], &w));
    let y = t.conv1d(xv, wv, None).unwrap();
    assert_eq!(t.value(y).data(), x.as_slice());
}

#[test]
fn attention_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut t = Tape::<f64>::new();
    // one key/value token: every query returns it
    let q = t.constant(tensor(&[1, 3, 4], &(0..12).map(|_| rng.random_range(-5.0..5.0)).collect::<Vec<_>>()));
    let k = t.constant(tensor(&[1, 1, 4], &[0.3, -0.2, 0.9, 1.0]));
    let v = t.constant(tensor(&[1, 1, 4], &[1.0, 2.0, 3.0, 4.0]));
    let y = t.attention(q, k, v, 2).unwrap();
    for row in t.value(y).data().chunks(4) {
        for (a, b) in row.iter().zip([1.0, 2.0, 3.0, 4.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }
    // keys orthogonal to the query: uniform average of values
    let q = t.constant(tensor(&[1, 1, 2], &[1.0, 0.0]));
    let k = t.constant(tensor(&[1, 3, 2], &[0.0, 1.0, 0.0, -2.0, 0.0, 0.5]));
    let v = t.constant(tensor(&[1, 3, 2], &[1.0, 0.0, 2.0, 3.0, 6.0, 3.0]));
    let y = t.attention(q, k, v, 1).unwrap();
    assert!((t.value(y).data()[0] - 3.0).abs() < 1e-12);
    assert!((t.value(y).data()[1] - 2.0).abs() < 1e-12);
}

#[test]
fn adam_examples() {
    // zero gradient leaves parameters unchanged
    let mut store = ParamStore::<f64>::new();
    let id = store.add("w", tensor(&[3], &[0.1, -0.2, 0.3])).unwrap();
    let before = store.clone();
    let mut adam = Adam::new(1e-2);
    for _ in 0..5 {
        let mut t = Tape::new();
        let w = t.param(&store, id);
        let z = t.scale(w, 0.0);
        let l = t.sum(z);
        let g = t.backward(l).unwrap();
        adam.step(&mut store, &g).unwrap();
    }
    assert_eq!(store, before);

    // constant gradient moves against its sign
    let mut adam = Adam::new(1e-2);
    for _ in 0..50 {
        let mut t = Tape::new();
        let w = t.param(&store, id);
        let c = t.constant(tensor(&[3], &[2.0, -3.0, 0.5]));
        let p = t.mul(w, c).unwrap();
        let l = t.sum(p);
        let g = t.backward(l).unwrap();
        adam.step(&mut store, &g).unwrap();
    }
    let w = store.tensor(id).data();
    assert!(w[0] < 0.1 && w[1] > -0.2 && w[2] < 0.3);
}

#[test]
fn adam_single_step_by_hand() {
    let (lr, b1, b2, eps) = (0.05, 0.9, 0.999, 1e-8);
    let (p0, g): (f64, f64) = (0.7, -1.3);
    let m = (1.0 - b1) * g;
    let v = (1.0 - b2) * g * g;
    let mhat = m / (1.0 - b1);
    let vhat = v / (1.0 - b2);
    let want = p0 - lr * mhat / (vhat.sqrt() + eps);

    let mut store = ParamStore::<f64>::new();
    let id = store.add("p", tensor(&[1], &[p0])).unwrap();
    let mut t = Tape::new();
    let p = t.param(&store, id);
    let l = t.scale(p, g);
    let l = t.sum(l);
    let grads = t.backward(l).unwrap();
    let mut adam = Adam::new(lr);
    adam.step(&mut store, &grads).unwrap();
    assert!((store.tensor(id).data()[0] - want).abs() <= 1e-12);
    let (mm, vv) = adam.moments(id.0);
    assert!((mm[0] - m).abs() <= 1e-15 && (vv[0] - v).abs() <= 1e-15);
    assert_eq!(adam.steps(), 1);
}

#[test]
fn adam_rejects_mismatched_shapes() {
    let mut a = ParamStore::<f64>::new();
    let id = a.add("p", tensor(&[2], &[1.0, 2.0])).unwrap();
    let mut t = Tape::new();
    let p = t.param(&a, id);
    let l = t.sum(p);
    let g = t.backward(l).unwrap();
    *a.tensor_mut(id) = tensor(&[3], &[0.0; 3]);
    assert!(Adam::new(0.1).step(&mut a, &g).is_err());
}

fn regression_store() -> (ParamStore<f64>, Tensor<f64>, Tensor<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut store = ParamStore::new();
    let r = |rng: &mut ChaCha8Rng, n: usize| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
    store.add("lin.w", tensor(&[3, 2], &r(&mut rng, 6))).unwrap();
    store.add("lin.b", tensor(&[2], &r(&mut rng, 2))).unwrap();
    (store, tensor(&[5, 3], &r(&mut rng, 15)), tensor(&[5, 2], &r(&mut rng, 10)))
}

#[test]
fn grad_check_linear_regression() {
    let (mut store, x, y) = regression_store();
    let (w, b) = (store.id("lin.w").unwrap(), store.id("lin.b").unwrap());
    let report = grad_check(
        &mut store,
        |t, s| {
            let xv = t.constant(x.clone());
            let (wv, bv) = (t.param(s, w), t.param(s, b));
            let p = t.linear(xv, wv, Some(bv)).unwrap();
            t.mse(p, &y).unwrap()
        },
        GradCheckOptions { step: 1e-5, tolerance: 1e-6, max_entries: 64 },
    );
    assert!(report.passed(), "{report:?}");
    assert_eq!(report.blocks.len(), 2);
}

#[test]
fn grad_check_flags_corrupted_backward() {
    let (mut store, x, y) = regression_store();
    let w = store.id("lin.w").unwrap();
    // tanh with a wrong derivative
    let report = grad_check(
        &mut store,
        |t, s| {
            let xv = t.constant(x.clone());
            let wv = t.param(s, w);
            let p = t.matmul(xv, wv).unwrap();
            let a = t.map(p, f64::tanh, |v| 1.0 - v.tanh());
            t.mse(a, &y).unwrap()
        },
        GradCheckOptions::default(),
    );
    assert!(!report.passed());
    assert!(report.worst() > 1e-2);
}

#[test]
fn frozen_parameters_get_no_gradient() {
    let (mut store, x, y) = regression_store();
    store.set_frozen("lin.w", true);
    let (w, b) = (store.id("lin.w").unwrap(), store.id("lin.b").unwrap());
    let mut t = Tape::new();
    let xv = t.constant(x);
    let (wv, bv) = (t.param(&store, w), t.param(&store, b));
    let p = t.linear(xv, wv, Some(bv)).unwrap();
    let l = t.mse(p, &y).unwrap();
    let g = t.backward(l).unwrap();
    assert!(g.param(w).is_none());
    assert!(g.param(b).is_some());
}

fn train_losses(seed: u64, steps: usize) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut r = |n: usize| (0..n).map(|_| rng.random_range(-1.0f32..1.0)).collect::<Vec<f32>>();
    let mut store = ParamStore::<f32>::new();
    let w1 = store.add("w1", Tensor::new(&[4, 8], r(32)).unwrap()).unwrap();
    let w2 = store.add("w2", Tensor::new(&[8, 2], r(16)).unwrap()).unwrap();
    let x = Tensor::new(&[6, 4], r(24)).unwrap();
    let y = Tensor::new(&[6, 2], r(12)).unwrap();
    let mut adam = Adam::new(1e-2);
    (0..steps)
        .map(|_| {
            let mut t = Tape::new();
            let xv = t.constant(x.clone());
            let (a, b) = (t.param(&store, w1), t.param(&store, w2));
            let h = t.matmul(xv, a).unwrap();
            let h = t.gelu(h);
            let o = t.matmul(h, b).unwrap();
            let l = t.mse(o, &y).unwrap();
            let g = t.backward(l).unwrap();
            adam.step(&mut store, &g).unwrap();
            t.value(l).item()
        })
        .collect()
}

#[test]
fn identical_seeds_give_bitwise_identical_losses() {
    let a = train_losses(9, 120);
    let b = train_losses(9, 120);
    assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    assert!(a[119] < a[0]);
}

#[test]
fn checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut store = ParamStore::<f32>::new();
    store.add("a.w", Tensor::from_f64(&[2, 3], &[0.1, -2.5, 3.25, 1e-8, f64::from(f32::MAX), 0.0]).unwrap()).unwrap();
    store.add("b", Tensor::from_f64(&[1], &[7.0]).unwrap()).unwrap();
    checkpoint::save(&store, dir.path()).unwrap();
    let back: ParamStore<f32> = checkpoint::load(dir.path()).unwrap();
    assert_eq!(back, store);
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["params"][1]["offset"], 24);
    assert_eq!(manifest["params"][0]["dtype"], "f32");
    // widening on load keeps every value
    let wide: ParamStore<f64> = checkpoint::load(dir.path()).unwrap();
    assert_eq!(wide.cast::<f32>(), store);
}

#[test]
fn truncated_checkpoint_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut store = ParamStore::<f64>::new();
    store.add("a", Tensor::zeros(&[4])).unwrap();
    checkpoint::save(&store, dir.path()).unwrap();
    std::fs::write(dir.path().join("params.bin"), [0u8; 5]).unwrap();
    assert!(checkpoint::load::<f64>(dir.path()).is_err());
}

proptest! {
    #[test]
    fn softmax_rows_sum_to_one(v in prop::collection::vec(-30.0..30.0f64, 1..40), cols in 1usize..6) {
        let rows = v.len() / cols;
        prop_assume!(rows > 0);
        let mut t = Tape::new();
        let x = t.constant(tensor(&[rows, cols], &v[..rows * cols]));
        let y = t.softmax(x, 1).unwrap();
        for row in t.value(y).data().chunks(cols) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn layer_norm_standardizes(v in prop::collection::vec(-10.0..10.0f64, 8), shift in -5.0..5.0f64) {
        let spread = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - v.iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assume!(spread > 1e-3);
        let shifted: Vec<f64> = v.iter().map(|a| a + shift).collect();
        let mut t = Tape::new();
        let x = t.constant(tensor(&[1, 8], &shifted));
        let g = t.constant(tensor(&[8], &[1.0; 8]));
        let b = t.constant(Tensor::zeros(&[8]));
        let y = t.layer_norm(x, g, b, 1e-12).unwrap();
        let out = t.value(y).data();
        let mean = out.iter().sum::<f64>() / 8.0;
        let var = out.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / 8.0;
        prop_assert!(mean.abs() < 1e-7);
        prop_assert!((var - 1.0).abs() < 1e-5);
    }

    #[test]
    fn relative_error_is_scale_free(v in prop::collection::vec(-1.0..1.0f64, 1..10), s in 1e-3..1e3f64) {
        let w: Vec<f64> = v.iter().map(|a| a * 1.01).collect();
        let e1 = relative_error(&v, &w);
        let e2 = relative_error(&v.iter().map(|a| a * s).collect::<Vec<_>>(), &w.iter().map(|a| a * s).collect::<Vec<_>>());
        prop_assume!(v.iter().any(|a| a.abs() > 1e-3));
        prop_assert!((e1 - e2).abs() < 1e-9);
    }
}
