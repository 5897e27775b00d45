use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{esn_fit, eval, Family, Forecaster, ForecasterCheckpoint, ForecasterSpec, ModelError};
use crate::autodiff::{AdError, AdamState, Tape, Tensor};
use crate::dynsys::{Split, TrajectorySet, WindowRef};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
    pub lr: f64,
}

/// Stacks windows into `([batch, L·d], [batch, H·d])` tensors.
pub fn batch_tensors(
    set: &TrajectorySet,
    split: Split,
    refs: &[WindowRef],
    input_len: usize,
    horizon: usize,
) -> Result<(Tensor, Tensor), ModelError> {
    let d = set.dim();
    let trajs = set.split(split);
    let mut x = Vec::with_capacity(refs.len() * input_len * d);
    let mut y = Vec::with_capacity(refs.len() * horizon * d);
    for r in refs {
        let traj = trajs.get(r.traj_id).ok_or(ModelError::Index {
            index: r.traj_id,
            len: trajs.len(),
        })?;
        if r.start_index + input_len + horizon > traj.steps() {
            return Err(ModelError::Index {
                index: r.start_index,
                len: traj.steps().saturating_sub(input_len + horizon) + 1,
            });
        }
        x.extend_from_slice(traj.rows(r.start_index, input_len));
        y.extend_from_slice(traj.rows(r.start_index + input_len, horizon));
    }
    Ok((
        Tensor::new(vec![refs.len(), input_len * d], x)?,
        Tensor::new(vec![refs.len(), horizon * d], y)?,
    ))
}

/// Optional observers of the training loop.
#[derive(Default)]
pub struct TrainHooks<'a> {
    pub on_epoch: Option<&'a mut dyn FnMut(&EpochLog)>,
}

/// Trains with Adam and early stopping on validation MSE; the ESN is fitted
/// in closed form instead.
pub fn train(
    spec: &ForecasterSpec,
    set: &TrajectorySet,
) -> Result<ForecasterCheckpoint, ModelError> {
    train_with(spec, set, TrainHooks::default())
}

pub fn train_with(
    spec: &ForecasterSpec,
    set: &TrajectorySet,
    mut hooks: TrainHooks<'_>,
) -> Result<ForecasterCheckpoint, ModelError> {
    if spec.family == Family::Esn {
        let ckpt = esn_fit(spec, set)?;
        if let Some(f) = hooks.on_epoch.as_mut() {
            ckpt.train_log.iter().for_each(f);
        }
        return Ok(ckpt);
    }
    let mut spec = spec.clone();
    spec.dim = set.dim();
    spec.dt = set.system.dt;
    let mut model = Forecaster::init(&spec)?;
    let (l, h) = (spec.input_len, spec.horizon);
    let mut refs = set.window_refs(Split::Train, l, h, spec.train_stride)?;
    let mut adam = AdamState::new(spec.lr, spec.lr_decay);
    let mut log = Vec::new();
    let mut best = (f64::INFINITY, model.params.clone());
    let mut stale = 0;

    for epoch in 0..spec.epochs {
        let mut order_rng = rng::stream(rng::derive(spec.seed, "shuffle"), epoch as u64);
        refs.shuffle(&mut order_rng);
        let mut sse = 0.0;
        let mut count = 0usize;
        for chunk in refs.chunks(spec.batch_size) {
            let (x, y) = batch_tensors(set, Split::Train, chunk, l, h)?;
            let tape = Tape::new();
            let b = model.params.bind(&tape);
            let xv = tape.constant(x);
            let yv = tape.constant(y);
            let step = model
                .forward_graph(&b, &tape, xv, Some(yv))
                .and_then(|pred| Ok(pred.mse(yv)?))
                .map_err(|e| diverged(e, epoch))?;
            let loss = step.item();
            if !loss.is_finite() {
                return Err(ModelError::Diverged { epoch });
            }
            let grads = tape.backward(step).map_err(|e| diverged(e.into(), epoch))?;
            adam.step(&mut model.params, &b.grads(&grads))?;
            if model.params.iter().any(|(_, t)| !t.is_finite()) {
                return Err(ModelError::Diverged { epoch });
            }
            sse += loss * chunk.len() as f64;
            count += chunk.len();
        }
        let val_mse = eval::mean_mse(&model, set, Split::Val, spec.eval_stride)
            .map_err(|e| diverged(e, epoch))?;
        let entry = EpochLog {
            epoch,
            train_mse: sse / count.max(1) as f64,
            val_mse,
            lr: adam.lr,
        };
        if let Some(f) = hooks.on_epoch.as_mut() {
            f(&entry);
        }
        log.push(entry);
        adam.decay_epoch();
        if val_mse < best.0 {
            best = (val_mse, model.params.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= spec.patience {
                break;
            }
        }
    }
    model.params = best.1;
    Ok(ForecasterCheckpoint::new(model, set, log, best.0))
}

fn diverged(e: ModelError, epoch: usize) -> ModelError {
    match e {
        ModelError::Ad(AdError::NonFinite { .. }) => ModelError::Diverged { epoch },
        other => other,
    }
}
