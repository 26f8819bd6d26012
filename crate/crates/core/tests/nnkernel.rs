use cedgsearch::nnkernel::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

fn random_store(seed: u64, shapes: &[(&str, usize, usize)]) -> ParameterStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = ParameterStore::new(seed);
    for &(name, r, c) in shapes {
        s.insert(name, random_tensor(&mut rng, r, c));
    }
    s
}

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn assert_grads(store: &ParameterStore, f: &dyn Fn(&mut Tape) -> Result<Var, KernelError>) {
    let r = check_gradients(store, H, f).unwrap();
    assert!(r.parameters_checked > 0);
    assert!(r.max_relative_error < TOL, "{r:?}");
}

#[test]
fn positional_encoding_values() {
    let pe = positional_encoding(3, 4).unwrap();
    assert_eq!(pe.row_slice(0), &[0.0, 1.0, 0.0, 1.0]);
    // direct double-precision sin(1)
    assert_eq!(pe.get(1, 0), 0.8414709848078965);
    assert_eq!(positional_value(1, 0, 64), 0.8414709848078965);
    let big = positional_encoding(50, 16).unwrap();
    for pos in 0..50 {
        for i in 0..8 {
            let (s, c) = (big.get(pos, 2 * i), big.get(pos, 2 * i + 1));
            assert!((s * s + c * c - 1.0).abs() < 1e-12);
        }
    }
    assert!(matches!(positional_encoding(2, 5), Err(KernelError::Config(_))));
}

fn attention_weights(q: Tensor, k: Tensor, v: Tensor, mask: &[bool]) -> (Tensor, Tensor) {
    let store = ParameterStore::new(0);
    let mut tape = Tape::new(&store);
    let (q, k, v) = (tape.constant(q), tape.constant(k), tape.constant(v));
    let (out, w) = scaled_attention(&mut tape, q, k, v, mask).unwrap();
    (tape.value(out).clone(), tape.value(w).clone())
}

#[test]
fn scaled_attention_examples() {
    let one = Tensor::matrix(1, 1, vec![1.0]);
    let (out, w) = attention_weights(one.clone(), one.clone(), one, &[true]);
    assert_eq!(out.data, vec![1.0]);
    assert_eq!(w.data, vec![1.0]);

    let q = Tensor::matrix(1, 2, vec![0.3, -0.2]);
    let k = Tensor::matrix(2, 2, vec![1.0, 2.0, 1.0, 2.0]);
    let v = Tensor::matrix(2, 1, vec![4.0, 8.0]);
    let (_, w) = attention_weights(q.clone(), k.clone(), v.clone(), &[true, true]);
    assert_eq!(w.data, vec![0.5, 0.5]);
    let (out, w) = attention_weights(q, k, v, &[true, false]);
    assert_eq!(w.data, vec![1.0, 0.0]);
    assert_eq!(out.data, vec![4.0]);
}

#[test]
fn fully_masked_attention_is_an_error() {
    let store = ParameterStore::new(0);
    let mut tape = Tape::new(&store);
    let t = tape.constant(Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]));
    assert!(matches!(scaled_attention(&mut tape, t, t, t, &[false, false]), Err(KernelError::AllMasked)));
}

fn attention_store(d: usize, dk: usize, heads: usize, seed: u64) -> ParameterStore {
    let mut s = ParameterStore::new(seed);
    declare_transformer(&mut s, "blk", d, dk, heads);
    // Nonzero biases so every parameter has a gradient path worth checking.
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
    for name in ["blk.ffn.b1", "blk.ffn.b2"] {
        let t = s.get_mut(name).unwrap();
        for x in &mut t.data {
            *x = rng.gen_range(-0.5..0.5);
        }
    }
    s
}

#[test]
fn single_head_reduces_to_scaled_attention() {
    let s = attention_store(4, 4, 1, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = random_tensor(&mut rng, 3, 4);
    let mut tape = Tape::new(&s);
    let xv = tape.constant(x);
    let mha = multi_head_attention(&mut tape, xv, "blk", 1, &[true; 3]).unwrap();
    let w = tape.params(&["blk.h0.w_q", "blk.h0.w_k", "blk.h0.w_v"]).unwrap();
    let q = tape.matmul(xv, w[0]);
    let k = tape.matmul(xv, w[1]);
    let v = tape.matmul(xv, w[2]);
    let (direct, _) = scaled_attention(&mut tape, q, k, v, &[true; 3]).unwrap();
    assert_eq!(tape.value(mha), tape.value(direct));
}

#[test]
fn multi_head_width_and_missing_parameters() {
    let s = attention_store(128, 16, 8, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut tape = Tape::new(&s);
    let x = tape.constant(random_tensor(&mut rng, 5, 128));
    let out = multi_head_attention(&mut tape, x, "blk", 8, &[true; 5]).unwrap();
    assert_eq!(tape.value(out).dims(), (5, 128));

    let empty = ParameterStore::new(0);
    let mut tape = Tape::new(&empty);
    let x = tape.constant(Tensor::zeros(2, 4));
    match multi_head_attention(&mut tape, x, "blk", 2, &[true; 2]) {
        Err(KernelError::MissingParameters(names)) => {
            assert_eq!(names.len(), 6);
            assert!(names.contains(&"blk.h1.w_v".to_string()));
        }
        other => panic!("unexpected {:?}", other.map(|_| ())),
    }
}

#[test]
fn permuting_rows_permutes_outputs() {
    let s = attention_store(6, 3, 2, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = random_tensor(&mut rng, 3, 6);
    let mut swapped = x.clone();
    for c in 0..6 {
        swapped.data.swap(c, 6 + c);
    }
    let run = |input: Tensor| {
        let mut tape = Tape::new(&s);
        let v = tape.constant(input);
        let out = multi_head_attention(&mut tape, v, "blk", 2, &[true; 3]).unwrap();
        tape.value(out).clone()
    };
    let (a, b) = (run(x), run(swapped));
    for c in 0..6 {
        assert!((a.get(0, c) - b.get(1, c)).abs() < 1e-12);
        assert!((a.get(1, c) - b.get(0, c)).abs() < 1e-12);
        assert!((a.get(2, c) - b.get(2, c)).abs() < 1e-12);
    }
}

#[test]
fn layer_norm_rows_are_standardized() {
    let s = attention_store(8, 4, 2, 7);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut tape = Tape::new(&s);
    let x = tape.constant(random_tensor(&mut rng, 4, 8));
    let seq = transformer_sequence(&mut tape, x, "blk", 2, &[true; 4]).unwrap();
    let t = tape.value(seq);
    for r in 0..t.rows() {
        let row = t.row_slice(r);
        let mean = row.iter().sum::<f64>() / 8.0;
        let var = row.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 8.0;
        assert!(mean.abs() < 1e-9);
        assert!((var - 1.0).abs() < 1e-6);
    }
}

#[test]
fn zero_input_has_zero_residual_branch() {
    let mut s = ParameterStore::new(0);
    declare_transformer(&mut s, "blk", 4, 2, 2);
    let mut tape = Tape::new(&s);
    let x = tape.constant(Tensor::zeros(3, 4));
    let att = multi_head_attention(&mut tape, x, "blk", 2, &[true; 3]).unwrap();
    assert!(tape.value(att).data.iter().all(|&v| v == 0.0));
    let out = transformer_block(&mut tape, x, "blk", 2, &[true; 3]).unwrap();
    assert!(tape.value(out).data.iter().all(|&v| v == 0.0));
}

#[test]
fn padding_positions_do_not_affect_pooled_output() {
    let s = attention_store(4, 2, 2, 12);
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let real = random_tensor(&mut rng, 2, 4);
    let mut padded = real.clone();
    padded.data.extend(random_tensor(&mut rng, 2, 4).data);
    padded.shape = vec![4, 4];
    let pooled = |x: Tensor, mask: &[bool]| {
        let mut tape = Tape::new(&s);
        let v = tape.constant(x);
        let out = transformer_block(&mut tape, v, "blk", 2, mask).unwrap();
        tape.value(out).clone()
    };
    let a = pooled(real, &[true, true]);
    let b = pooled(padded, &[true, true, false, false]);
    for (x, y) in a.data.iter().zip(&b.data) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn transformer_block_gradients() {
    let mut s = attention_store(8, 4, 2, 21);
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    s.insert("input", random_tensor(&mut rng, 3, 8));
    assert_grads(&s, &|tape| {
        let x = tape.param("input")?;
        transformer_block(tape, x, "blk", 2, &[true, true, false])
    });
}

#[test]
fn lstm_examples_and_gradients() {
    let mut zero = ParameterStore::new(0);
    zero.declare("lstm.w_x", 3, 8, Init::Zeros);
    zero.declare("lstm.w_h", 2, 8, Init::Zeros);
    zero.declare("lstm.b", 1, 8, Init::Zeros);
    let mut tape = Tape::new(&zero);
    let x = tape.constant(Tensor::row(vec![1.0, -2.0, 0.5]));
    let h = lstm_sequence(&mut tape, &[x, x], "lstm").unwrap();
    assert_eq!(tape.value(h).data, vec![0.0, 0.0]);

    let s = random_store(31, &[("lstm.w_x", 3, 8), ("lstm.w_h", 2, 8), ("lstm.b", 1, 8), ("x", 4, 3)]);
    // one step against a hand-written cell
    let mut tape = Tape::new(&s);
    let xs = tape.param("x").unwrap();
    let x0 = tape.slice_rows(xs, 0, 1);
    let h = lstm_sequence(&mut tape, &[x0], "lstm").unwrap();
    let (wx, b) = (s.get("lstm.w_x").unwrap(), s.get("lstm.b").unwrap());
    let input = s.get("x").unwrap().row_slice(0);
    let z: Vec<f64> = (0..8).map(|j| b.data[j] + (0..3).map(|i| input[i] * wx.get(i, j)).sum::<f64>()).collect();
    let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
    for k in 0..2 {
        let c = sig(z[k]) * z[4 + k].tanh();
        let expected = sig(z[6 + k]) * c.tanh();
        assert!((tape.value(h).data[k] - expected).abs() < 1e-14);
    }

    assert_grads(&s, &|tape| {
        let xs = tape.param("x")?;
        let steps: Vec<Var> = (0..4).map(|r| tape.slice_rows(xs, r, 1)).collect();
        lstm_sequence(tape, &steps, "lstm")
    });
}

#[test]
fn elementwise_and_structural_op_gradients() {
    let s = random_store(41, &[("a", 3, 4), ("b", 3, 4), ("r", 1, 4), ("w", 4, 3), ("col", 3, 1), ("tbl", 5, 4)]);
    assert_grads(&s, &|tape| {
        let [a, b, r, w, col, tbl] = ["a", "b", "r", "w", "col", "tbl"].map(|n| tape.param(n).unwrap());
        let x = tape.mul(a, b);
        let x = tape.add_row(x, r);
        let y = tape.leaky_relu(x, 0.2);
        let z = tape.elu(b);
        let u = tape.sub(y, z);
        let u = tape.tanh(u);
        let u = tape.scale_rows(u, col);
        let p = tape.matmul(u, w);
        let p = tape.sigmoid(p);
        let q = tape.concat_cols(&[p, col]);
        let qt = tape.transpose(q);
        let g = tape.gather_rows(tbl, &[Some(4), None, Some(0), Some(4)]);
        let m = tape.gather_mean(tbl, &[vec![1, 2], vec![], vec![3]]);
        let gm = tape.concat_rows(&[g, m]);
        let sc = tape.matmul(gm, qt);
        let flat = tape.reshape(sc, 1, 21);
        let tail = tape.slice_cols(flat, 3, 10);
        let e = tape.add_scalar(tail, 0.5);
        Ok(tape.relu(e))
    });
}

#[test]
fn softmax_norm_and_pooling_gradients() {
    let s = random_store(51, &[("x", 3, 5), ("scores", 6, 1), ("rows", 6, 3)]);
    assert_grads(&s, &|tape| {
        let x = tape.param("x")?;
        let sm = tape.masked_softmax_rows(x, &[true, false, true, true, false])?;
        let ln = tape.layer_norm_rows(x);
        let mix = tape.mul(sm, ln);
        let pooled = tape.mean_rows_masked(mix, &[true, false, true])?;
        let sc = tape.param("scores")?;
        let alpha = tape.segment_softmax(sc, &[0, 1, 0, 2, 1, 0]);
        let rows = tape.param("rows")?;
        let weighted = tape.scale_rows(rows, alpha);
        let agg = tape.scatter_add_rows(weighted, &[0, 1, 0, 2, 1, 0], 4);
        let agg = tape.reshape(agg, 1, 12);
        let agg = tape.slice_cols(agg, 0, 5);
        let c = tape.cosine(pooled, agg)?;
        let t = tape.sum(agg);
        let out = tape.concat_cols(&[c, t]);
        Ok(tape.mul(out, out))
    });
}

#[test]
fn ranking_loss_gradients() {
    let s = random_store(61, &[("code", 1, 6), ("pos", 1, 6), ("neg", 1, 6)]);
    // Margin large enough that the hinge is active.
    assert_grads(&s, &|tape| {
        let p = tape.params(&["code", "pos", "neg"])?;
        ranking_loss_var(tape, p[0], p[1], p[2], 3.0)
    });
}

#[test]
fn cosine_examples() {
    assert_eq!(cosine(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
    assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
    let c = cosine(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
    // 32 / sqrt(14 · 77)
    assert!((c - 0.9746318461970762).abs() < 1e-15);
    assert!(matches!(cosine(&[0.0, 0.0], &[1.0, 0.0]), Err(KernelError::ZeroVector)));
}

#[test]
fn ranking_loss_examples() {
    let code = [1.0, 0.0];
    let at = |c: f64| [c, (1.0 - c * c).sqrt()];
    assert_eq!(ranking_loss(&code, &at(0.9), &at(0.1), 0.05).unwrap(), 0.0);
    assert_eq!(ranking_loss(&code, &at(0.4), &at(0.4), 0.05).unwrap(), 0.05);
    let l = ranking_loss(&code, &at(0.2), &at(0.3), 0.05).unwrap();
    assert!((l - 0.15).abs() < 1e-12);
    assert!(ranking_loss(&code, &[0.0, 0.0], &at(0.3), 0.05).is_err());
}

#[test]
fn forward_passes_are_bit_stable() {
    let s = attention_store(8, 4, 2, 71);
    let mut rng = ChaCha8Rng::seed_from_u64(72);
    let x = random_tensor(&mut rng, 5, 8);
    let run = || {
        let mut tape = Tape::new(&s);
        let v = tape.constant(x.clone());
        let out = transformer_block(&mut tape, v, "blk", 2, &[true; 5]).unwrap();
        tape.value(out).data.iter().map(|f| f.to_bits()).collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}

fn vector(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, n).prop_filter("nonzero", |v| v.iter().any(|x| x.abs() > 1e-3))
}

proptest! {
    #[test]
    fn cosine_is_scale_invariant(a in vector(5), b in vector(5), s in 0.01f64..100.0, t in 0.01f64..100.0) {
        let base = cosine(&a, &b).unwrap();
        let sa: Vec<f64> = a.iter().map(|x| x * s).collect();
        let tb: Vec<f64> = b.iter().map(|x| x * t).collect();
        prop_assert!((cosine(&sa, &tb).unwrap() - base).abs() < 1e-12);
        prop_assert!((-1.0..=1.0).contains(&base));
    }

    #[test]
    fn ranking_loss_is_a_hinge(c in vector(4), p in vector(4), n in vector(4), margin in 0.0f64..1.0) {
        let l = ranking_loss(&c, &p, &n, margin).unwrap();
        prop_assert!(l >= 0.0);
        if cosine(&c, &p).unwrap() - cosine(&c, &n).unwrap() >= margin {
            prop_assert_eq!(l, 0.0);
        }
    }

    #[test]
    fn masked_softmax_rows_normalize(
        rows in 1usize..5,
        scores in prop::collection::vec(-50.0f64..50.0, 40),
        mask in prop::collection::vec(any::<bool>(), 8),
    ) {
        prop_assume!(mask.iter().any(|&m| m));
        let store = ParameterStore::new(0);
        let mut tape = Tape::new(&store);
        let x = tape.constant(Tensor::matrix(rows, 8, scores[..rows * 8].to_vec()));
        let w = tape.masked_softmax_rows(x, &mask).unwrap();
        let t = tape.value(w);
        for r in 0..rows {
            let row = t.row_slice(r);
            let total: f64 = row.iter().zip(&mask).filter(|(_, &m)| m).map(|(v, _)| v).sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
            for (v, &m) in row.iter().zip(&mask) {
                if !m {
                    prop_assert_eq!(*v, 0.0);
                }
            }
        }
    }
}
