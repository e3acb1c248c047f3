use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::error::Result;

fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
    Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
}

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    t(shape, &(0..n).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>())
}

#[test]
fn softmax_known_values() {
    let s = t(&[1, 3], &[0.0, 0.0, 0.0]).row_softmax().unwrap();
    for &v in s.data() {
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
    }
    let s = t(&[1, 2], &[0.0, 2f64.ln()]).row_softmax().unwrap();
    assert!((s.data()[0] - 1.0 / 3.0).abs() < 1e-15);
    assert!((s.data()[1] - 2.0 / 3.0).abs() < 1e-15);
}

#[test]
fn softmax_rows_sum_to_one_and_ignore_shifts() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let x = random(&[4, 7], &mut rng).map(|v| v * 30.0);
        let s = x.row_softmax().unwrap();
        for r in 0..4 {
            assert!((s.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let shifted = x.map(|v| v + 123.0).row_softmax().unwrap();
        for (a, b) in s.data().iter().zip(shifted.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
    let big = t(&[1, 2], &[1000.0, 0.0]).row_softmax().unwrap();
    assert!(big.all_finite());
}

#[test]
fn layer_norm_of_constant_row_is_bias() {
    let mut g = Graph::new();
    let x = g.constant(t(&[1, 4], &[5.0; 4]));
    let gain = g.constant(t(&[1, 4], &[2.0; 4]));
    let bias = g.constant(t(&[1, 4], &[0.5, -0.5, 1.0, 0.0]));
    let y = g.layer_norm(x, gain, bias).unwrap();
    assert_eq!(g.value(y).data(), &[0.5, -0.5, 1.0, 0.0]);
}

#[test]
fn uniform_logits_give_ln_classes() {
    let mut g = Graph::new();
    let z = g.constant(Tensor::<f64>::zeros(&[3, 6]));
    let loss = g.cross_entropy(z, &[0, 2, 5]).unwrap();
    assert!((g.value(loss).data()[0] - 6f64.ln()).abs() < 1e-15);

    let probs = Tensor::filled(&[2, 6], 1.0 / 6.0);
    assert!((cross_entropy_probs(&probs, &[1, 4]).unwrap() - 6f64.ln()).abs() < 1e-12);
    let bad = Tensor::filled(&[1, 6], 0.2);
    assert!(cross_entropy_probs(&bad, &[0]).is_err());
}

#[test]
fn matmul_matches_naive_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let a = random(&[5, 3], &mut rng);
    let b = random(&[3, 4], &mut rng);
    let c = a.matmul(&b).unwrap();
    for i in 0..5 {
        for j in 0..4 {
            let want: f64 = (0..3).map(|k| a.data()[i * 3 + k] * b.data()[k * 4 + j]).sum();
            assert!((c.data()[i * 4 + j] - want).abs() < 1e-14);
        }
    }
    let err = a.matmul(&a).unwrap_err().to_string();
    assert!(err.contains("[5, 3]"), "{err}");
}

#[test]
fn shape_errors_name_both_shapes() {
    let mut g = Graph::new();
    let a = g.constant(Tensor::<f64>::zeros(&[2, 3]));
    let b = g.constant(Tensor::<f64>::zeros(&[3, 2]));
    let msg = g.add(a, b).unwrap_err().to_string();
    assert!(msg.contains("[2, 3]") && msg.contains("[3, 2]"), "{msg}");
}

#[test]
fn linear_gradient_is_input() {
    // d/dw sum(x·w) = xᵀ·1
    let mut store = ParamStore::new();
    let w = store.add("w", t(&[2, 1], &[0.3, -0.7]));
    let mut g = Graph::new();
    let x = g.constant(t(&[3, 2], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
    let wn = g.param(&store, w);
    let y = g.matmul(x, wn).unwrap();
    let s = g.sum(y);
    let grads = g.backward(s, store.len()).unwrap();
    assert_eq!(grads.get(w).unwrap().data(), &[9.0, 12.0]);
}

#[test]
fn softmax_cross_entropy_gradient_is_p_minus_y() {
    let mut store = ParamStore::new();
    let z = store.add("z", t(&[2, 3], &[0.1, 0.5, -0.3, 2.0, 0.0, 1.0]));
    let mut g = Graph::new();
    let zn = g.param(&store, z);
    let loss = g.cross_entropy(zn, &[1, 0]).unwrap();
    let grads = g.backward(loss, 1).unwrap();
    let p = store.get(z).row_softmax().unwrap();
    let mut want = p.data().to_vec();
    want[1] -= 1.0;
    want[3] -= 1.0;
    for (a, b) in grads.get(z).unwrap().data().iter().zip(&want) {
        assert!((a - b / 2.0).abs() < 1e-15);
    }
}

#[test]
fn backward_requires_scalar() {
    let mut g = Graph::<f64>::new();
    let a = g.constant(Tensor::zeros(&[2, 2]));
    assert!(g.backward(a, 0).is_err());
}

fn linear_model(store: &ParamStore<f64>) -> Result<(Graph<f64>, NodeId)> {
    let mut g = Graph::new();
    let x = g.constant(t(&[3, 4], &[0.2, -1.0, 0.5, 0.3, 1.5, 0.1, -0.4, 0.9, -0.6, 0.7, 0.0, -1.2]));
    let w = g.param(store, store.id("w").unwrap());
    let b = g.param(store, store.id("b").unwrap());
    let z = g.linear(x, w, b)?;
    let loss = g.cross_entropy(z, &[0, 2, 1])?;
    Ok((g, loss))
}

#[test]
fn linear_model_gradcheck() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut store = ParamStore::new();
    store.add("w", random(&[4, 3], &mut rng));
    store.add("b", random(&[1, 3], &mut rng));
    let report = grad_check(&store, linear_model, 1e-4, None).unwrap();
    assert!(report.max_rel_err < 1e-8, "{report:?}");
    assert_eq!(report.checked, 15);
}

/// Every op in one graph: attention-like mixing, layer norm, gelu, slicing.
fn kitchen_sink(store: &ParamStore<f64>, corrupt: bool) -> Result<(Graph<f64>, NodeId)> {
    let mut g = Graph::new();
    g.corrupt_gelu_backward = corrupt;
    let p = |g: &mut Graph<f64>, n: &str| g.param(store, store.id(n).unwrap());
    let table = p(&mut g, "table");
    let h = g.embedding(table, &[1, 3, 0, 3])?;
    let gain = p(&mut g, "gain");
    let bias = p(&mut g, "bias");
    let h = g.layer_norm(h, gain, bias)?;
    let wq = p(&mut g, "wq");
    let q = g.matmul(h, wq)?;
    let kt = g.transpose(h)?;
    let scores = g.matmul(q, kt)?;
    let scores = g.scale(scores, 0.5);
    let scores = g.masked_fill(scores, &[false, false, false, true].repeat(4))?;
    let attn = g.row_softmax(scores)?;
    let mixed = g.matmul(attn, h)?;
    let a = g.slice_cols(mixed, 0, 2)?;
    let b = g.slice_cols(mixed, 2, 2)?;
    let ab = g.mul(a, b)?;
    let act = g.gelu(ab);
    let cat = g.concat_cols(&[act, a])?;
    let sum = g.add(cat, cat)?;
    let flat = g.reshape(sum, &[2, 8])?;
    let first = g.slice_rows(flat, 0, 2)?;
    let wo = p(&mut g, "wo");
    let bo = p(&mut g, "bo");
    let z = g.linear(first, wo, bo)?;
    let loss = g.cross_entropy(z, &[2, 0])?;
    Ok((g, loss))
}

fn sink_store() -> ParamStore<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut s = ParamStore::new();
    s.add("table", random(&[5, 4], &mut rng));
    s.add("gain", random(&[1, 4], &mut rng).map(|v| v + 1.0));
    s.add("bias", random(&[1, 4], &mut rng));
    s.add("wq", random(&[4, 4], &mut rng));
    s.add("wo", random(&[8, 3], &mut rng));
    s.add("bo", random(&[1, 3], &mut rng));
    s
}

#[test]
fn every_op_passes_gradcheck() {
    let report = grad_check(&sink_store(), |s| kitchen_sink(s, false), 1e-4, None).unwrap();
    assert!(report.max_rel_err < 1e-6, "{report:?}");
}

#[test]
fn corrupted_gelu_derivative_is_caught() {
    let report = grad_check(&sink_store(), |s| kitchen_sink(s, true), 1e-4, None).unwrap();
    assert!(report.max_rel_err > 1e-3, "{report:?}");
}

#[test]
fn backward_is_deterministic() {
    let store = sink_store();
    let run = || {
        let (g, l) = kitchen_sink(&store, false).unwrap();
        g.backward(l, store.len()).unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn gelu_known_points() {
    assert_eq!(gelu(0.0f64), 0.0);
    assert!((gelu(1.0f64) - 0.841_191_990_607_477_6).abs() < 1e-12);
    assert!(gelu(-10.0f64).abs() < 1e-12);
}
