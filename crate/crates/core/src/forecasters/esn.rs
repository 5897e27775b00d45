//! Echo-state network: fixed sparse reservoir, ridge read-out.

use nalgebra::DMatrix;
use rand::Rng;

use super::train::{batch_tensors, EpochLog};
use super::{
    encode_graph, eval, Family, Forecaster, ForecasterCheckpoint, ForecasterSpec, ModelError,
};
use crate::autodiff::{Bound, ParamSet, Tape, Tensor, Var};
use crate::dynsys::{Split, TrajectorySet};
use crate::linalg::{ridge_solve, spectral_radius};

pub(crate) fn init_reservoir<G: Rng + ?Sized>(
    spec: &ForecasterSpec,
    rng: &mut G,
    p: &mut ParamSet,
) {
    let n = spec.reservoir_size;
    let mut w = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if rng.random::<f64>() < spec.reservoir_density {
                w[(i, j)] = rng.random_range(-1.0..1.0);
            }
        }
    }
    if let Ok(rho) = spectral_radius(&w) {
        if rho > 0.0 {
            w *= spec.spectral_radius / rho;
        }
    }
    let s = spec.input_scale;
    let u = Tensor::from_fn(&[spec.dim, n], |_| {
        if s > 0.0 {
            rng.random_range(-s..s)
        } else {
            0.0
        }
    });
    p.insert(
        "esn.w",
        Tensor::new(vec![n, n], crate::linalg::to_row_major(&w)).expect("square"),
    );
    p.insert("esn.u", u);
}

/// `r_{k+1} = tanh(W r_k + U x_k)` from `r_0 = 0` over every input row; returns `r_L`.
pub(crate) fn reservoir_graph<'t>(
    spec: &ForecasterSpec,
    b: &Bound<'t>,
    tape: &'t Tape,
    x: Var<'t>,
) -> Result<Var<'t>, ModelError> {
    let d = spec.dim;
    let batch = x.shape()[0];
    let wt = b.get("esn.w")?.transpose()?;
    let u = b.get("esn.u")?;
    let n = u.shape()[1];
    let mut r = tape.constant(Tensor::zeros(&[batch, n]));
    for t in 0..spec.input_len {
        let xt = x.slice(1, t * d, (t + 1) * d)?;
        r = r.matmul(wt)?.add(xt.matmul(u)?)?.tanh()?;
    }
    Ok(r)
}

/// Final reservoir states of `[batch, L·d]` inputs.
pub fn reservoir_states(model: &Forecaster, inputs: &Tensor) -> Result<Tensor, ModelError> {
    if model.spec.family != Family::Esn {
        return Err(ModelError::InvalidSpec(
            "reservoir_states needs an ESN".into(),
        ));
    }
    let tape = Tape::new();
    let b = model.params.bind_frozen(&tape);
    let x = tape.constant(inputs.clone());
    Ok(encode_graph(&model.spec, &b, &tape, x)?.value())
}

/// Fits the read-out `[r_L; 1] ↦ vec(target)` by ridge regression on the training windows.
pub fn esn_fit(
    spec: &ForecasterSpec,
    set: &TrajectorySet,
) -> Result<ForecasterCheckpoint, ModelError> {
    if spec.family != Family::Esn {
        return Err(ModelError::InvalidSpec(format!(
            "esn_fit called with {}",
            spec.label()
        )));
    }
    let mut spec = spec.clone();
    spec.dim = set.dim();
    let mut model = Forecaster::init(&spec)?;
    let (l, h, d) = (spec.input_len, spec.horizon, spec.dim);
    let refs = set.window_refs(Split::Train, l, h, spec.train_stride)?;
    let n = spec.reservoir_size;
    let mut g = DMatrix::<f64>::zeros(refs.len(), n + 1);
    let mut y = DMatrix::<f64>::zeros(refs.len(), h * d);
    for (c, chunk) in refs.chunks(512).enumerate() {
        let (x, t) = batch_tensors(set, Split::Train, chunk, l, h)?;
        let r = reservoir_states(&model, &x)?;
        for i in 0..chunk.len() {
            let row = c * 512 + i;
            for j in 0..n {
                g[(row, j)] = r.at(i, j);
            }
            g[(row, n)] = 1.0;
            for j in 0..h * d {
                y[(row, j)] = t.at(i, j);
            }
        }
    }
    let w = ridge_solve(&g, &y, spec.ridge_lambda)?;
    let out_w = Tensor::from_fn(&[n, h * d], |i| w[(i / (h * d), i % (h * d))]);
    let out_b = Tensor::from_fn(&[h * d], |j| w[(n, j)]);
    model.params.insert("esn.out.w", out_w);
    model.params.insert("esn.out.b", out_b);

    let train_mse = eval::mean_mse(&model, set, Split::Train, spec.train_stride)?;
    let val_mse = eval::mean_mse(&model, set, Split::Val, spec.eval_stride)?;
    let log = vec![EpochLog {
        epoch: 0,
        train_mse,
        val_mse,
        lr: 0.0,
    }];
    Ok(ForecasterCheckpoint::new(model, set, log, val_mse))
}
