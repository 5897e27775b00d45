use serde::{Deserialize, Serialize};

use super::train::batch_tensors;
use super::{Forecaster, ForecasterCheckpoint, ModelError};
use crate::autodiff::Tensor;
use crate::dynsys::{Split, TrajectorySet};

const EVAL_BATCH: usize = 256;

/// Forecast errors in normalized units: each metric is computed per horizon
/// step over all windows and channels, then averaged over the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mse: f64,
    pub rmse: f64,
    pub mae: f64,
    pub per_step_mse: Vec<f64>,
    pub per_step_mae: Vec<f64>,
    pub windows: usize,
}

/// Accumulates squared and absolute errors per horizon step.
#[derive(Debug, Clone)]
struct StepErrors {
    sq: Vec<f64>,
    abs: Vec<f64>,
    count: usize,
}

impl StepErrors {
    fn new(horizon: usize) -> Self {
        Self {
            sq: vec![0.0; horizon],
            abs: vec![0.0; horizon],
            count: 0,
        }
    }

    fn add(&mut self, pred: &Tensor, target: &Tensor, dim: usize) {
        let horizon = self.sq.len();
        for (p, t) in pred
            .data()
            .chunks(horizon * dim)
            .zip(target.data().chunks(horizon * dim))
        {
            for s in 0..horizon {
                for c in 0..dim {
                    let e = p[s * dim + c] - t[s * dim + c];
                    self.sq[s] += e * e;
                    self.abs[s] += e.abs();
                }
            }
            self.count += 1;
        }
    }

    fn report(self, dim: usize) -> EvalReport {
        let n = (self.count * dim).max(1) as f64;
        let per_step_mse: Vec<f64> = self.sq.iter().map(|s| s / n).collect();
        let per_step_mae: Vec<f64> = self.abs.iter().map(|s| s / n).collect();
        let h = per_step_mse.len() as f64;
        EvalReport {
            mse: per_step_mse.iter().sum::<f64>() / h,
            rmse: per_step_mse.iter().map(|m| m.sqrt()).sum::<f64>() / h,
            mae: per_step_mae.iter().sum::<f64>() / h,
            per_step_mse,
            per_step_mae,
            windows: self.count,
        }
    }
}

/// Metrics of `[N, H·d]` predictions against matching targets.
pub fn evaluate_predictions(
    pred: &Tensor,
    target: &Tensor,
    horizon: usize,
    dim: usize,
) -> Result<EvalReport, ModelError> {
    if pred.shape() != target.shape() || pred.rank() != 2 || pred.shape()[1] != horizon * dim {
        return Err(ModelError::Shape(format!(
            "predictions {:?} vs targets {:?} (H={horizon}, d={dim})",
            pred.shape(),
            target.shape()
        )));
    }
    let mut acc = StepErrors::new(horizon);
    acc.add(pred, target, dim);
    Ok(acc.report(dim))
}

fn run(
    model: &Forecaster,
    set: &TrajectorySet,
    split: Split,
    stride: usize,
) -> Result<EvalReport, ModelError> {
    let spec = &model.spec;
    if spec.dim != set.dim() {
        return Err(ModelError::Incompatible(format!(
            "model d={}, dataset d={}",
            spec.dim,
            set.dim()
        )));
    }
    let (l, h) = (spec.input_len, spec.horizon);
    let refs = set.window_refs(split, l, h, stride)?;
    let mut acc = StepErrors::new(h);
    for chunk in refs.chunks(EVAL_BATCH) {
        let (x, y) = batch_tensors(set, split, chunk, l, h)?;
        let pred = model.predict_batch(&x)?;
        acc.add(&pred, &y, spec.dim);
    }
    Ok(acc.report(spec.dim))
}

/// Mean squared error over every window of a split (used for early stopping).
pub fn mean_mse(
    model: &Forecaster,
    set: &TrajectorySet,
    split: Split,
    stride: usize,
) -> Result<f64, ModelError> {
    Ok(run(model, set, split, stride)?.mse)
}

/// Evaluates a checkpoint on one split at `spec.eval_stride`.
pub fn evaluate(
    ckpt: &ForecasterCheckpoint,
    set: &TrajectorySet,
    split: Split,
) -> Result<EvalReport, ModelError> {
    ckpt.check_dataset(set)?;
    run(&ckpt.model, set, split, ckpt.model.spec.eval_stride)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction_is_zero() {
        let t = Tensor::from_fn(&[4, 6], |i| (i as f64).cos());
        let r = evaluate_predictions(&t, &t, 3, 2).unwrap();
        assert_eq!((r.mse, r.rmse, r.mae), (0.0, 0.0, 0.0));
    }

    #[test]
    fn unit_offset_gives_unit_metrics() {
        let t = Tensor::from_fn(&[5, 6], |i| (i as f64).sin());
        let p = t.map(|v| v + 1.0);
        let r = evaluate_predictions(&p, &t, 3, 2).unwrap();
        assert!((r.mse - 1.0).abs() < 1e-12);
        assert!((r.rmse - 1.0).abs() < 1e-12);
        assert!((r.mae - 1.0).abs() < 1e-12);
    }

    #[test]
    fn per_step_then_average() {
        // Step 0 errors 0, step 1 errors 2: mse = (0 + 4) / 2, rmse = (0 + 2) / 2.
        let t = Tensor::zeros(&[2, 2]);
        let p = Tensor::new(vec![2, 2], vec![0.0, 2.0, 0.0, -2.0]).unwrap();
        let r = evaluate_predictions(&p, &t, 2, 1).unwrap();
        assert_eq!(r.mse, 2.0);
        assert_eq!(r.rmse, 1.0);
        assert_eq!(r.mae, 1.0);
    }
}
