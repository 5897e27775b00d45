use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::StitchError;
use crate::autodiff::{AdError, AdamState, Bound, ParamSet, Tape, Tensor, Var};
use crate::dynsys::{NormalizationStats, Split, SystemSpec, TrajectorySet, WindowRef};
use crate::forecasters::{
    batch_tensors, decode_graph, encode_graph, evaluate_predictions, init_decoder, init_encoder,
    init_propagator, propagate_graph, EpochLog, EvalReport, Family, ForecasterSpec, ModelError,
    TrainHooks, CHECKPOINT_VERSION,
};
use crate::relgeom::{AnchorSet, ZScore};
use crate::rng;

/// Anchor count of the shared relative code.
pub const STITCH_ANCHORS: usize = 32;

const EVAL_BATCH: usize = 256;

/// Anchor windows shared by every relative forecaster of one dataset.
///
/// `anchors` indexes the train-split windows enumerated at stride 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlobalAnchors {
    pub input_len: usize,
    pub horizon: usize,
    pub anchors: AnchorSet,
    pub refs: Vec<WindowRef>,
    pub seed: u64,
}

impl GlobalAnchors {
    pub fn sample(
        set: &TrajectorySet,
        input_len: usize,
        horizon: usize,
        m: usize,
        seed: u64,
    ) -> Result<Self, StitchError> {
        let pool = set.window_refs(Split::Train, input_len, horizon, 1)?;
        let anchors = AnchorSet::sample(pool.len(), m, seed)?;
        let refs = anchors.indices.iter().map(|&i| pool[i]).collect();
        Ok(Self {
            input_len,
            horizon,
            anchors,
            refs,
            seed,
        })
    }

    pub fn m(&self) -> usize {
        self.refs.len()
    }

    /// `[m, L·d]` anchor inputs.
    pub fn inputs(&self, set: &TrajectorySet) -> Result<Tensor, ModelError> {
        Ok(batch_tensors(set, Split::Train, &self.refs, self.input_len, self.horizon)?.0)
    }
}

/// A forecaster trained end to end on per-anchor z-scored cosine codes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeForecaster {
    pub format_version: u32,
    pub spec: ForecasterSpec,
    /// `enc.*` acts on windows; `prop.*` and `dec.*` on `m`-vectors.
    pub params: ParamSet,
    pub global_anchors: GlobalAnchors,
    /// `[m, k]` latents of the anchor windows under this encoder.
    pub anchor_latents: Tensor,
    pub anchor_mean: Vec<f64>,
    pub anchor_std: Vec<f64>,
    pub system: SystemSpec,
    pub norm: NormalizationStats,
    pub train_log: Vec<EpochLog>,
    pub best_val_mse: f64,
    pub dataset_fingerprint: String,
}

fn tiled(row: &[f64], n: usize) -> Tensor {
    let mut data = Vec::with_capacity(row.len() * n);
    for _ in 0..n {
        data.extend_from_slice(row);
    }
    Tensor::new(vec![n, row.len()], data).expect("consistent length")
}

/// Raw `[batch, m]` cosines of encoded windows to unit anchor latents.
fn cosine_graph<'t>(
    spec: &ForecasterSpec,
    b: &Bound<'t>,
    tape: &'t Tape,
    x: Var<'t>,
    anchor_unit: Var<'t>,
) -> Result<Var<'t>, ModelError> {
    let z = encode_graph(spec, b, tape, x)?;
    Ok(z.normalize_rows()?.matmul(anchor_unit.transpose()?)?)
}

fn code_graph<'t>(
    spec: &ForecasterSpec,
    b: &Bound<'t>,
    tape: &'t Tape,
    x: Var<'t>,
    anchor_unit: Var<'t>,
    mean: &[f64],
    std: &[f64],
) -> Result<Var<'t>, ModelError> {
    let c = cosine_graph(spec, b, tape, x, anchor_unit)?;
    let n = c.shape()[0];
    Ok(c.sub(tape.constant(tiled(mean, n)))?
        .div(tape.constant(tiled(std, n)))?)
}

#[derive(Clone)]
struct Frozen {
    anchor_latents: Tensor,
    mean: Vec<f64>,
    std: Vec<f64>,
}

fn encode_frozen(
    spec: &ForecasterSpec,
    params: &ParamSet,
    x: &Tensor,
) -> Result<Tensor, ModelError> {
    let tape = Tape::new();
    let b = params.bind_frozen(&tape);
    let xv = tape.constant(x.clone());
    Ok(encode_graph(spec, &b, &tape, xv)?.value())
}

/// Anchor latents and per-anchor statistics over the train windows.
fn freeze(
    spec: &ForecasterSpec,
    params: &ParamSet,
    anchor_x: &Tensor,
    set: &TrajectorySet,
    refs: &[WindowRef],
) -> Result<Frozen, StitchError> {
    let anchor_latents = encode_frozen(spec, params, anchor_x)?;
    let m = anchor_latents.shape()[0];
    let mut cos = DMatrix::zeros(refs.len(), m);
    let mut row = 0;
    for chunk in refs.chunks(EVAL_BATCH) {
        let (x, _) = batch_tensors(set, Split::Train, chunk, spec.input_len, spec.horizon)?;
        let tape = Tape::new();
        let b = params.bind_frozen(&tape);
        let au = tape.constant(anchor_latents.clone()).normalize_rows()?;
        let c = cosine_graph(spec, &b, &tape, tape.constant(x), au)?.value();
        for i in 0..chunk.len() {
            for (j, v) in c.row(i).iter().enumerate() {
                cos[(row + i, j)] = *v;
            }
        }
        row += chunk.len();
    }
    let stats = ZScore::fit(&cos)?;
    Ok(Frozen {
        anchor_latents,
        mean: stats.mean,
        std: stats.std,
    })
}

fn check_family(spec: &ForecasterSpec) -> Result<(), StitchError> {
    match spec.family {
        Family::Mlp | Family::Transformer => Ok(()),
        other => Err(StitchError::Unsupported(format!(
            "relative forecasters need an MLP or transformer encoder, got {other:?}"
        ))),
    }
}

pub fn train_relative(
    spec: &ForecasterSpec,
    set: &TrajectorySet,
    anchors: &GlobalAnchors,
) -> Result<RelativeForecaster, StitchError> {
    train_relative_with(spec, set, anchors, TrainHooks::default())
}

/// Adam with early stopping, as for absolute forecasters. Anchor windows are
/// encoded inside every batch; the z-score statistics used by an epoch are
/// those measured on the train split after the previous epoch.
pub fn train_relative_with(
    spec: &ForecasterSpec,
    set: &TrajectorySet,
    anchors: &GlobalAnchors,
    mut hooks: TrainHooks<'_>,
) -> Result<RelativeForecaster, StitchError> {
    let mut spec = spec.clone();
    spec.dim = set.dim();
    spec.dt = set.system.dt;
    spec.validate()?;
    check_family(&spec)?;
    let (l, h) = (spec.input_len, spec.horizon);
    if (anchors.input_len, anchors.horizon) != (l, h) {
        return Err(StitchError::AnchorMismatch(format!(
            "anchors drawn for L={}, H={}, model uses L={l}, H={h}",
            anchors.input_len, anchors.horizon
        )));
    }
    let m = anchors.m();
    let mut init = rng::stream(rng::derive(spec.seed, "init"), 0);
    let mut params = ParamSet::new();
    init_encoder(&spec, &mut init, &mut params);
    init_propagator(&spec, m, &mut init, &mut params);
    init_decoder(&spec, m, &mut init, &mut params);

    let anchor_x = anchors.inputs(set)?;
    let stats_refs = set.window_refs(Split::Train, l, h, spec.train_stride)?;
    let mut refs = stats_refs.clone();
    let mut frozen = freeze(&spec, &params, &anchor_x, set, &stats_refs)?;
    let mut adam = AdamState::new(spec.lr, spec.lr_decay);
    let mut log = Vec::new();
    let mut best: Option<(f64, ParamSet, Frozen)> = None;
    let mut stale = 0;

    for epoch in 0..spec.epochs {
        let diverged = |e: ModelError| match e {
            ModelError::Ad(AdError::NonFinite { .. }) => {
                StitchError::Model(ModelError::Diverged { epoch })
            }
            other => other.into(),
        };
        let mut order = rng::stream(rng::derive(spec.seed, "shuffle"), epoch as u64);
        refs.shuffle(&mut order);
        let (mut sse, mut count) = (0.0, 0usize);
        for chunk in refs.chunks(spec.batch_size) {
            let (x, y) = batch_tensors(set, Split::Train, chunk, l, h)?;
            let tape = Tape::new();
            let b = params.bind(&tape);
            let step = (|| -> Result<Var<'_>, ModelError> {
                let au = encode_graph(&spec, &b, &tape, tape.constant(anchor_x.clone()))?
                    .normalize_rows()?;
                let code = code_graph(
                    &spec,
                    &b,
                    &tape,
                    tape.constant(x),
                    au,
                    &frozen.mean,
                    &frozen.std,
                )?;
                let pred = decode_graph(
                    &spec,
                    &b,
                    &tape,
                    propagate_graph(&spec, &b, &tape, code)?,
                    None,
                )?;
                Ok(pred.mse(tape.constant(y))?)
            })()
            .map_err(diverged)?;
            let loss = step.item();
            if !loss.is_finite() {
                return Err(ModelError::Diverged { epoch }.into());
            }
            let grads = tape.backward(step).map_err(|e| diverged(e.into()))?;
            adam.step(&mut params, &b.grads(&grads))
                .map_err(|e| diverged(e.into()))?;
            if params.iter().any(|(_, t)| !t.is_finite()) {
                return Err(ModelError::Diverged { epoch }.into());
            }
            sse += loss * chunk.len() as f64;
            count += chunk.len();
        }
        frozen = freeze(&spec, &params, &anchor_x, set, &stats_refs)?;
        let val_mse = run_pair(
            (
                &spec,
                &params,
                &frozen.anchor_latents,
                &frozen.mean,
                &frozen.std,
            ),
            (&spec, &params),
            set,
            Split::Val,
            spec.eval_stride,
        )
        .map_err(|e| match e {
            StitchError::Model(m) => diverged(m),
            other => other,
        })?
        .mse;
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
        if best.as_ref().is_none_or(|(v, _, _)| val_mse < *v) {
            best = Some((val_mse, params.clone(), frozen.clone()));
            stale = 0;
        } else {
            stale += 1;
            if stale >= spec.patience {
                break;
            }
        }
    }
    let (best_val_mse, params, frozen) = best.unwrap_or((f64::INFINITY, params, frozen));
    Ok(RelativeForecaster {
        format_version: CHECKPOINT_VERSION,
        spec,
        params,
        global_anchors: anchors.clone(),
        anchor_latents: frozen.anchor_latents,
        anchor_mean: frozen.mean,
        anchor_std: frozen.std,
        system: set.system.clone(),
        norm: set.norm.clone(),
        train_log: log,
        best_val_mse,
        dataset_fingerprint: set.fingerprint(),
    })
}

type EncoderSide<'a> = (
    &'a ForecasterSpec,
    &'a ParamSet,
    &'a Tensor,
    &'a [f64],
    &'a [f64],
);
type DecoderSide<'a> = (&'a ForecasterSpec, &'a ParamSet);

/// Forecast errors of `enc`'s relative codes decoded by `dec`'s propagator and decoder.
pub(crate) fn run_pair(
    enc: EncoderSide<'_>,
    dec: DecoderSide<'_>,
    set: &TrajectorySet,
    split: Split,
    stride: usize,
) -> Result<EvalReport, StitchError> {
    let (espec, eparams, anchor_latents, mean, std) = enc;
    let (dspec, dparams) = dec;
    if espec.dim != set.dim() {
        return Err(ModelError::Incompatible(format!(
            "model d={}, dataset d={}",
            espec.dim,
            set.dim()
        ))
        .into());
    }
    let (l, h, d) = (espec.input_len, espec.horizon, espec.dim);
    let refs = set.window_refs(split, l, h, stride)?;
    let mut preds = Vec::with_capacity(refs.len() * h * d);
    let mut targets = Vec::with_capacity(refs.len() * h * d);
    for chunk in refs.chunks(EVAL_BATCH) {
        let (x, y) = batch_tensors(set, split, chunk, l, h)?;
        let code = {
            let tape = Tape::new();
            let b = eparams.bind_frozen(&tape);
            let au = tape.constant(anchor_latents.clone()).normalize_rows()?;
            code_graph(espec, &b, &tape, tape.constant(x), au, mean, std)?.value()
        };
        let tape = Tape::new();
        let b = dparams.bind_frozen(&tape);
        let z = propagate_graph(dspec, &b, &tape, tape.constant(code))?;
        let pred = decode_graph(dspec, &b, &tape, z, None)?.value();
        preds.extend_from_slice(pred.data());
        targets.extend_from_slice(y.data());
    }
    let n = refs.len();
    let pred = Tensor::new(vec![n, h * d], preds).map_err(ModelError::from)?;
    let target = Tensor::new(vec![n, h * d], targets).map_err(ModelError::from)?;
    Ok(evaluate_predictions(&pred, &target, h, d)?)
}

impl RelativeForecaster {
    pub fn label(&self) -> String {
        self.spec.label()
    }

    pub fn id(&self) -> String {
        self.spec.to_string()
    }

    pub fn m(&self) -> usize {
        self.anchor_std.len()
    }

    /// Encoder latent size `k`.
    pub fn latent_dim(&self) -> usize {
        self.anchor_latents.shape()[1]
    }

    pub(crate) fn encoder_side(&self) -> EncoderSide<'_> {
        (
            &self.spec,
            &self.params,
            &self.anchor_latents,
            &self.anchor_mean,
            &self.anchor_std,
        )
    }

    pub(crate) fn decoder_side(&self) -> DecoderSide<'_> {
        (&self.spec, &self.params)
    }

    /// Anchor latents recomputed from the current encoder parameters.
    pub fn recompute_anchor_latents(&self, set: &TrajectorySet) -> Result<Tensor, StitchError> {
        Ok(encode_frozen(
            &self.spec,
            &self.params,
            &self.global_anchors.inputs(set)?,
        )?)
    }

    /// `[batch, L·d]` windows to `[batch, m]` z-scored anchor cosines.
    pub fn relative_codes(&self, inputs: &Tensor) -> Result<Tensor, StitchError> {
        let tape = Tape::new();
        let b = self.params.bind_frozen(&tape);
        let au = tape
            .constant(self.anchor_latents.clone())
            .normalize_rows()?;
        let (mean, std) = (&self.anchor_mean, &self.anchor_std);
        Ok(code_graph(
            &self.spec,
            &b,
            &tape,
            tape.constant(inputs.clone()),
            au,
            mean,
            std,
        )?
        .value())
    }

    /// `[batch, L·d]` windows to `[batch, k]` absolute latents.
    pub fn encode_batch(&self, inputs: &Tensor) -> Result<Tensor, StitchError> {
        Ok(encode_frozen(&self.spec, &self.params, inputs)?)
    }

    /// Errors on one split at `spec.eval_stride`.
    pub fn evaluate(&self, set: &TrajectorySet, split: Split) -> Result<EvalReport, StitchError> {
        run_pair(
            self.encoder_side(),
            self.decoder_side(),
            set,
            split,
            self.spec.eval_stride,
        )
    }

    pub fn to_json(&self) -> Result<String, ModelError> {
        serde_json::to_string(self).map_err(|e| ModelError::Format(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self, ModelError> {
        let rf: Self = serde_json::from_str(s).map_err(|e| ModelError::Format(e.to_string()))?;
        if rf.format_version != CHECKPOINT_VERSION {
            return Err(ModelError::Format(format!(
                "unsupported format_version {}",
                rf.format_version
            )));
        }
        rf.spec.validate()?;
        Ok(rf)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        let path = path.as_ref();
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)
                .map_err(|e| ModelError::Io(format!("{}: {e}", dir.display())))?;
        }
        fs::write(path, self.to_json()?)
            .map_err(|e| ModelError::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let path = path.as_ref();
        let s = fs::read_to_string(path)
            .map_err(|e| ModelError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&s)
    }
}
