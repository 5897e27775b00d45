use rand::Rng;

use crate::autodiff::{glorot_uniform, AdError, Bound, ParamSet, Tape, Tensor, Var};

type R<'t> = Result<Var<'t>, AdError>;

pub(crate) fn init_linear<G: Rng + ?Sized>(
    p: &mut ParamSet,
    rng: &mut G,
    name: &str,
    fan_in: usize,
    fan_out: usize,
) {
    p.insert(format!("{name}.w"), glorot_uniform(rng, fan_in, fan_out));
    p.insert(format!("{name}.b"), Tensor::zeros(&[fan_out]));
}

/// `x W + b` over the last axis of a rank-2 or rank-3 input.
pub(crate) fn linear<'t>(b: &Bound<'t>, name: &str, x: Var<'t>) -> R<'t> {
    let w = b.get(&format!("{name}.w"))?;
    let bias = b.get(&format!("{name}.b"))?;
    let shape = x.shape();
    if shape.len() == 3 {
        let out = w.shape()[1];
        let flat = x.reshape(&[shape[0] * shape[1], shape[2]])?;
        flat.matmul(w)?
            .add_row(bias)?
            .reshape(&[shape[0], shape[1], out])
    } else {
        x.matmul(w)?.add_row(bias)
    }
}

/// Output width of a linear layer.
pub(crate) fn linear_out(b: &Bound<'_>, name: &str) -> Result<usize, AdError> {
    Ok(b.get(&format!("{name}.w"))?.shape()[1])
}

pub(crate) fn init_gru<G: Rng + ?Sized>(
    p: &mut ParamSet,
    rng: &mut G,
    name: &str,
    input: usize,
    hidden: usize,
) {
    p.insert(format!("{name}.wi"), glorot_uniform(rng, input, 3 * hidden));
    p.insert(
        format!("{name}.wh"),
        glorot_uniform(rng, hidden, 3 * hidden),
    );
    p.insert(format!("{name}.bi"), Tensor::zeros(&[3 * hidden]));
    p.insert(format!("{name}.bh"), Tensor::zeros(&[3 * hidden]));
}

/// One GRU step; gates are packed `[reset | update | candidate]`.
///
/// `h' = (1 - u) ⊙ n + u ⊙ h`, written as `n + u ⊙ (h - n)`.
pub(crate) fn gru_cell<'t>(b: &Bound<'t>, name: &str, x: Var<'t>, h: Var<'t>) -> R<'t> {
    let hid = h.shape()[1];
    let gi = x
        .matmul(b.get(&format!("{name}.wi"))?)?
        .add_row(b.get(&format!("{name}.bi"))?)?;
    let gh = h
        .matmul(b.get(&format!("{name}.wh"))?)?
        .add_row(b.get(&format!("{name}.bh"))?)?;
    let r = gi.slice(1, 0, hid)?.add(gh.slice(1, 0, hid)?)?.sigmoid()?;
    let u = gi
        .slice(1, hid, 2 * hid)?
        .add(gh.slice(1, hid, 2 * hid)?)?
        .sigmoid()?;
    let n = gi
        .slice(1, 2 * hid, 3 * hid)?
        .add(r.mul(gh.slice(1, 2 * hid, 3 * hid)?)?)?
        .tanh()?;
    n.add(u.mul(h.sub(n)?)?)
}

/// Sinusoidal positional table, `[positions, width]`.
pub(crate) fn positional_encoding(positions: usize, width: usize) -> Tensor {
    Tensor::from_fn(&[positions, width], |idx| {
        let (pos, i) = (idx / width, idx % width);
        let freq = 10000f64.powf(-((i / 2 * 2) as f64) / width as f64);
        let angle = pos as f64 * freq;
        if i % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

/// Positional table tiled over a batch, `[batch, positions, width]`.
pub(crate) fn batched_positions<'t>(
    tape: &'t Tape,
    batch: usize,
    positions: usize,
    width: usize,
) -> Var<'t> {
    let pe = positional_encoding(positions, width);
    let block = pe.data();
    let tiled = Tensor::from_fn(&[batch, positions, width], |i| block[i % block.len()]);
    tape.constant(tiled)
}

/// Zero-mean, unit-variance over the feature axis of each token (no gain).
pub(crate) fn layer_norm<'t>(x: Var<'t>) -> R<'t> {
    let shape = x.shape();
    let width = *shape.last().expect("layer_norm of a scalar");
    let tokens = shape.iter().product::<usize>() / width;
    x.reshape(&[tokens, width])?
        .transpose()?
        .standardize_cols()?
        .transpose()?
        .reshape(&shape)
}

pub(crate) fn init_block<G: Rng + ?Sized>(p: &mut ParamSet, rng: &mut G, name: &str, width: usize) {
    for part in ["q", "k", "v", "o"] {
        init_linear(p, rng, &format!("{name}.{part}"), width, width);
    }
    init_linear(p, rng, &format!("{name}.ff1"), width, 2 * width);
    init_linear(p, rng, &format!("{name}.ff2"), 2 * width, width);
}

/// Multi-head self-attention with residual and layer norm, then a tanh
/// feed-forward with residual and layer norm. `x` is `[batch, tokens, width]`.
pub(crate) fn attention_block<'t>(
    b: &Bound<'t>,
    tape: &'t Tape,
    name: &str,
    x: Var<'t>,
    heads: usize,
    causal: bool,
) -> R<'t> {
    let shape = x.shape();
    let (batch, tokens, width) = (shape[0], shape[1], shape[2]);
    let dh = width / heads;
    let q = linear(b, &format!("{name}.q"), x)?;
    let k = linear(b, &format!("{name}.k"), x)?;
    let v = linear(b, &format!("{name}.v"), x)?;
    let mask = causal.then(|| {
        tape.constant(Tensor::from_fn(&[batch, tokens, tokens], |i| {
            let (row, col) = ((i / tokens) % tokens, i % tokens);
            if col > row {
                -1e9
            } else {
                0.0
            }
        }))
    });
    let scale = 1.0 / (dh as f64).sqrt();
    let mut ctx = Vec::with_capacity(heads);
    for h in 0..heads {
        let (lo, hi) = (h * dh, (h + 1) * dh);
        let qh = q.slice(2, lo, hi)?;
        let kh = k.slice(2, lo, hi)?;
        let vh = v.slice(2, lo, hi)?;
        let mut scores = qh.matmul(kh.transpose()?)?.scale(scale)?;
        if let Some(m) = mask {
            scores = scores.add(m)?;
        }
        ctx.push(scores.softmax(2)?.matmul(vh)?);
    }
    let ctx = if heads == 1 {
        ctx[0]
    } else {
        Var::concat(&ctx, 2)?
    };
    let x = layer_norm(x.add(linear(b, &format!("{name}.o"), ctx)?)?)?;
    let ff = linear(
        b,
        &format!("{name}.ff2"),
        linear(b, &format!("{name}.ff1"), x)?.tanh()?,
    )?;
    layer_norm(x.add(ff)?)
}
