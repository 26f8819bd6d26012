//! Layer primitives built on the tape: positional encoding, attention,
//! transformer block, LSTM, dense projection and the ranking loss.

use super::params::{Init, ParameterStore};
use super::tape::{cosine, Tape, Var};
use super::{KernelError, Tensor};

/// Sinusoidal encoding of a single (position, dimension) entry.
pub fn positional_value(pos: usize, dim: usize, d: usize) -> f64 {
    let pair = (dim / 2) * 2;
    let angle = pos as f64 / 10000f64.powf(pair as f64 / d as f64);
    if dim.is_multiple_of(2) {
        angle.sin()
    } else {
        angle.cos()
    }
}

/// `max_pos × d` table of sinusoidal position encodings.
pub fn positional_encoding(max_pos: usize, d: usize) -> Result<Tensor, KernelError> {
    if !d.is_multiple_of(2) || d == 0 {
        return Err(KernelError::Config(format!("positional encoding width must be even and positive, got {d}")));
    }
    positional_rows(0..max_pos, d)
}

/// Encodings for an arbitrary list of positions.
pub fn positional_rows(positions: impl IntoIterator<Item = usize>, d: usize) -> Result<Tensor, KernelError> {
    if !d.is_multiple_of(2) || d == 0 {
        return Err(KernelError::Config(format!("positional encoding width must be even and positive, got {d}")));
    }
    let mut data = Vec::new();
    let mut rows = 0;
    for pos in positions {
        data.extend((0..d).map(|i| positional_value(pos, i, d)));
        rows += 1;
    }
    Ok(Tensor::matrix(rows, d, data))
}

/// `softmax(Q Kᵀ / √d_k) V` with masked keys receiving zero weight.
/// Returns the output and the attention weights.
pub fn scaled_attention(tape: &mut Tape, q: Var, k: Var, v: Var, mask: &[bool]) -> Result<(Var, Var), KernelError> {
    let dk = tape.value(q).cols();
    let scores = tape.matmul_bt(q, k);
    let scores = tape.scale(scores, 1.0 / (dk as f64).sqrt());
    let weights = tape.masked_softmax_rows(scores, mask)?;
    Ok((tape.matmul(weights, v), weights))
}

/// Parameter names of one head.
fn head_names(prefix: &str, head: usize) -> [String; 3] {
    ["w_q", "w_k", "w_v"].map(|w| format!("{prefix}.h{head}.{w}"))
}

pub fn declare_attention(store: &mut ParameterStore, prefix: &str, d: usize, d_k: usize, heads: usize) {
    for h in 0..heads {
        for name in head_names(prefix, h) {
            store.declare(&name, d, d_k, Init::Uniform { fan_in: d });
        }
    }
}

/// Concatenation of `heads` attention heads over the rows of `x`; width `heads · d_k`.
pub fn multi_head_attention(tape: &mut Tape, x: Var, prefix: &str, heads: usize, mask: &[bool]) -> Result<Var, KernelError> {
    let names: Vec<String> = (0..heads).flat_map(|h| head_names(prefix, h)).collect();
    let w = tape.params(&names)?;
    let mut outs = Vec::with_capacity(heads);
    for h in 0..heads {
        let q = tape.matmul(x, w[3 * h]);
        let k = tape.matmul(x, w[3 * h + 1]);
        let v = tape.matmul(x, w[3 * h + 2]);
        outs.push(scaled_attention(tape, q, k, v, mask)?.0);
    }
    Ok(if outs.len() == 1 { outs[0] } else { tape.concat_cols(&outs) })
}

pub fn declare_dense(store: &mut ParameterStore, prefix: &str, input: usize, output: usize) {
    store.declare(&format!("{prefix}.w"), input, output, Init::Uniform { fan_in: input });
    store.declare(&format!("{prefix}.b"), 1, output, Init::Zeros);
}

/// `x W + b` applied row-wise.
pub fn dense(tape: &mut Tape, x: Var, prefix: &str) -> Result<Var, KernelError> {
    let p = tape.params(&[format!("{prefix}.w"), format!("{prefix}.b")])?;
    let y = tape.matmul(x, p[0]);
    Ok(tape.add_row(y, p[1]))
}

pub fn declare_transformer(store: &mut ParameterStore, prefix: &str, d: usize, d_k: usize, heads: usize) {
    declare_attention(store, prefix, d, d_k, heads);
    let inner = 4 * d;
    store.declare(&format!("{prefix}.ffn.w1"), d, inner, Init::Uniform { fan_in: d });
    store.declare(&format!("{prefix}.ffn.b1"), 1, inner, Init::Zeros);
    store.declare(&format!("{prefix}.ffn.w2"), inner, d, Init::Uniform { fan_in: inner });
    store.declare(&format!("{prefix}.ffn.b2"), 1, d, Init::Zeros);
}

/// Attention, add & norm, feed-forward, add & norm; one output row per input row.
pub fn transformer_sequence(tape: &mut Tape, x: Var, prefix: &str, heads: usize, mask: &[bool]) -> Result<Var, KernelError> {
    let ffn = tape.params(&[
        format!("{prefix}.ffn.w1"),
        format!("{prefix}.ffn.b1"),
        format!("{prefix}.ffn.w2"),
        format!("{prefix}.ffn.b2"),
    ])?;
    let att = multi_head_attention(tape, x, prefix, heads, mask)?;
    let res = tape.add(x, att);
    let normed = tape.layer_norm_rows(res);
    let hidden = tape.matmul(normed, ffn[0]);
    let hidden = tape.add_row(hidden, ffn[1]);
    let hidden = tape.relu(hidden);
    let ff = tape.matmul(hidden, ffn[2]);
    let ff = tape.add_row(ff, ffn[3]);
    let res = tape.add(normed, ff);
    Ok(tape.layer_norm_rows(res))
}

/// Transformer block followed by mean pooling over unmasked positions.
pub fn transformer_block(tape: &mut Tape, x: Var, prefix: &str, heads: usize, mask: &[bool]) -> Result<Var, KernelError> {
    let seq = transformer_sequence(tape, x, prefix, heads, mask)?;
    tape.mean_rows_masked(seq, mask)
}

pub fn declare_lstm(store: &mut ParameterStore, prefix: &str, input: usize, hidden: usize) {
    store.declare(&format!("{prefix}.w_x"), input, 4 * hidden, Init::Uniform { fan_in: input });
    store.declare(&format!("{prefix}.w_h"), hidden, 4 * hidden, Init::Uniform { fan_in: hidden });
    store.declare(&format!("{prefix}.b"), 1, 4 * hidden, Init::Zeros);
}

/// Runs an LSTM (gate order input, forget, cell, output) over `steps`
/// (`1 × input` rows) from a zero state; returns the final hidden state.
pub fn lstm_sequence(tape: &mut Tape, steps: &[Var], prefix: &str) -> Result<Var, KernelError> {
    let p = tape.params(&[format!("{prefix}.w_x"), format!("{prefix}.w_h"), format!("{prefix}.b")])?;
    let hidden = tape.value(p[1]).rows();
    let mut h = tape.constant(Tensor::zeros(1, hidden));
    let mut c = tape.constant(Tensor::zeros(1, hidden));
    for &x in steps {
        let zx = tape.matmul(x, p[0]);
        let zh = tape.matmul(h, p[1]);
        let z = tape.add(zx, zh);
        let z = tape.add_row(z, p[2]);
        let gate = |tape: &mut Tape, k: usize| tape.slice_cols(z, k * hidden, hidden);
        let (zi, zf, zg, zo) = (gate(tape, 0), gate(tape, 1), gate(tape, 2), gate(tape, 3));
        let i = tape.sigmoid(zi);
        let f = tape.sigmoid(zf);
        let g = tape.tanh(zg);
        let o = tape.sigmoid(zo);
        let keep = tape.mul(f, c);
        let write = tape.mul(i, g);
        c = tape.add(keep, write);
        let ct = tape.tanh(c);
        h = tape.mul(o, ct);
    }
    Ok(h)
}

/// `max(0, margin + cos(code, negative) − cos(code, positive))` on the tape.
pub fn ranking_loss_var(tape: &mut Tape, code: Var, positive: Var, negative: Var, margin: f64) -> Result<Var, KernelError> {
    let pos = tape.cosine(code, positive)?;
    let neg = tape.cosine(code, negative)?;
    let diff = tape.sub(neg, pos);
    let shifted = tape.add_scalar(diff, margin);
    Ok(tape.relu(shifted))
}

/// Plain evaluation of the margin ranking loss.
pub fn ranking_loss(code: &[f64], positive: &[f64], negative: &[f64], margin: f64) -> Result<f64, KernelError> {
    let pos = cosine(code, positive)?;
    let neg = cosine(code, negative)?;
    Ok((margin + (neg - pos)).max(0.0))
}
