use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::relative::run_pair;
use super::{RelativeForecaster, StitchError};
use crate::autodiff::Tensor;
use crate::dynsys::{Split, TrajectorySet};
use crate::forecasters::{
    batch_tensors, evaluate_predictions, EvalReport, ForecasterCheckpoint, ModelError,
};

const EVAL_BATCH: usize = 256;

/// Test-split errors of `enc_from`'s encoder and anchor transform feeding
/// `dec_from`'s propagator and decoder.
pub fn stitch(
    enc_from: &RelativeForecaster,
    dec_from: &RelativeForecaster,
    set: &TrajectorySet,
) -> Result<EvalReport, StitchError> {
    let (a, b) = (&enc_from.spec, &dec_from.spec);
    if enc_from.global_anchors.refs != dec_from.global_anchors.refs {
        return Err(StitchError::AnchorMismatch(format!(
            "{} and {} use different anchor windows",
            enc_from.id(),
            dec_from.id()
        )));
    }
    if (a.input_len, a.horizon, a.dim) != (b.input_len, b.horizon, b.dim) {
        return Err(ModelError::Incompatible(format!(
            "{} and {} differ in window shape",
            enc_from.id(),
            dec_from.id()
        ))
        .into());
    }
    run_pair(
        enc_from.encoder_side(),
        dec_from.decoder_side(),
        set,
        Split::Test,
        a.eval_stride,
    )
}

/// Raw latents of `enc_from` decoded by `dec_from`, on the test split.
pub fn stitch_absolute(
    enc_from: &ForecasterCheckpoint,
    dec_from: &ForecasterCheckpoint,
    set: &TrajectorySet,
) -> Result<EvalReport, StitchError> {
    let (a, b) = (&enc_from.model.spec, &dec_from.model.spec);
    if a.code_dim() != b.code_dim() {
        return Err(StitchError::DimMismatch {
            encoder: a.code_dim(),
            decoder: b.code_dim(),
        });
    }
    if (a.input_len, a.horizon, a.dim) != (b.input_len, b.horizon, b.dim) {
        return Err(ModelError::Incompatible(format!(
            "{} and {} differ in window shape",
            enc_from.id(),
            dec_from.id()
        ))
        .into());
    }
    enc_from.check_dataset(set)?;
    let (l, h, d) = (a.input_len, a.horizon, a.dim);
    let refs = set.window_refs(Split::Test, l, h, a.eval_stride)?;
    let mut preds = Vec::with_capacity(refs.len() * h * d);
    let mut targets = Vec::with_capacity(refs.len() * h * d);
    for chunk in refs.chunks(EVAL_BATCH) {
        let (x, y) = batch_tensors(set, Split::Test, chunk, l, h)?;
        let z = enc_from.model.encode_batch(&x)?;
        let pred = dec_from
            .model
            .decode_batch(&dec_from.model.propagate_batch(&z)?)?;
        preds.extend_from_slice(pred.data());
        targets.extend_from_slice(y.data());
    }
    let n = refs.len();
    let pred = Tensor::new(vec![n, h * d], preds).map_err(ModelError::from)?;
    let target = Tensor::new(vec![n, h * d], targets).map_err(ModelError::from)?;
    Ok(evaluate_predictions(&pred, &target, h, d)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StitchMode {
    Absolute,
    Relative,
}

pub enum StitchInstances<'a> {
    Absolute(&'a [ForecasterCheckpoint]),
    Relative(&'a [RelativeForecaster]),
}

/// One encoder/decoder instance pairing; `mse` is `None` for incompatible latent sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairResult {
    pub encoder: String,
    pub decoder: String,
    pub encoder_family: String,
    pub decoder_family: String,
    pub mode: StitchMode,
    pub mse: Option<f64>,
}

/// Family-level averages; `None` marks an absent cell.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StitchCell {
    pub abs_mse: Option<f64>,
    pub rel_mse: Option<f64>,
    pub abs_pairs: usize,
    pub rel_pairs: usize,
}

/// Encoder families as rows, decoder families as columns.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StitchTable {
    pub families: Vec<String>,
    /// `cells[row][col]`.
    pub cells: Vec<Vec<StitchCell>>,
    pub pairs: Vec<PairResult>,
}

/// Every ordered instance pair (self-pairs included), averaged per family pair.
pub fn stitch_grid(
    instances: StitchInstances<'_>,
    set: &TrajectorySet,
) -> Result<StitchTable, StitchError> {
    let pairs = match instances {
        StitchInstances::Absolute(list) => grid(
            list,
            |c| (c.id(), c.label()),
            StitchMode::Absolute,
            |a, b| match stitch_absolute(a, b, set) {
                Ok(r) => Ok(Some(r.mse)),
                Err(StitchError::DimMismatch { .. }) => Ok(None),
                Err(e) => Err(e),
            },
        )?,
        StitchInstances::Relative(list) => grid(
            list,
            |r| (r.id(), r.label()),
            StitchMode::Relative,
            |a, b| stitch(a, b, set).map(|r| Some(r.mse)),
        )?,
    };
    Ok(StitchTable::from_pairs(pairs))
}

fn grid<T: Sync>(
    list: &[T],
    name: impl Fn(&T) -> (String, String) + Sync,
    mode: StitchMode,
    run: impl Fn(&T, &T) -> Result<Option<f64>, StitchError> + Sync,
) -> Result<Vec<PairResult>, StitchError> {
    let jobs: Vec<(usize, usize)> = (0..list.len())
        .flat_map(|i| (0..list.len()).map(move |j| (i, j)))
        .collect();
    jobs.par_iter()
        .map(|&(i, j)| {
            let ((ei, ef), (di, df)) = (name(&list[i]), name(&list[j]));
            Ok(PairResult {
                mse: run(&list[i], &list[j])?,
                encoder: ei,
                decoder: di,
                encoder_family: ef,
                decoder_family: df,
                mode,
            })
        })
        .collect()
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl StitchTable {
    pub fn from_pairs(pairs: Vec<PairResult>) -> Self {
        let mut families: Vec<String> = Vec::new();
        for p in &pairs {
            for f in [&p.encoder_family, &p.decoder_family] {
                if !families.contains(f) {
                    families.push(f.clone());
                }
            }
        }
        let n = families.len();
        let pos = |f: &str| {
            families
                .iter()
                .position(|x| x == f)
                .expect("collected above")
        };
        let mut abs = vec![vec![Vec::new(); n]; n];
        let mut rel = vec![vec![Vec::new(); n]; n];
        for p in &pairs {
            let (r, c) = (pos(&p.encoder_family), pos(&p.decoder_family));
            if let Some(v) = p.mse {
                match p.mode {
                    StitchMode::Absolute => abs[r][c].push(v),
                    StitchMode::Relative => rel[r][c].push(v),
                }
            }
        }
        let cells = (0..n)
            .map(|r| {
                (0..n)
                    .map(|c| StitchCell {
                        abs_mse: mean(&abs[r][c]),
                        rel_mse: mean(&rel[r][c]),
                        abs_pairs: abs[r][c].len(),
                        rel_pairs: rel[r][c].len(),
                    })
                    .collect()
            })
            .collect();
        Self {
            families,
            cells,
            pairs,
        }
    }

    /// Union of two tables' pair lists, re-aggregated.
    pub fn merge(self, other: StitchTable) -> Self {
        let mut pairs = self.pairs;
        pairs.extend(other.pairs);
        Self::from_pairs(pairs)
    }

    pub fn cell(&self, encoder_family: &str, decoder_family: &str) -> Option<&StitchCell> {
        let r = self.families.iter().position(|f| f == encoder_family)?;
        let c = self.families.iter().position(|f| f == decoder_family)?;
        Some(&self.cells[r][c])
    }

    /// Mean MSE of pairs matching `filter`, or `None` when no pair qualifies.
    pub fn mean_where(
        &self,
        mode: StitchMode,
        filter: impl Fn(&PairResult) -> bool,
    ) -> Option<f64> {
        let v: Vec<f64> = self
            .pairs
            .iter()
            .filter(|p| p.mode == mode && filter(p))
            .filter_map(|p| p.mse)
            .collect();
        mean(&v)
    }

    /// Encoder rows and `<decoder>_abs`, `<decoder>_rel` column pairs; absent cells are empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("encoder");
        for f in &self.families {
            let _ = write!(out, ",{f}_abs,{f}_rel");
        }
        out.push('\n');
        for (r, f) in self.families.iter().enumerate() {
            out.push_str(f);
            for cell in &self.cells[r] {
                let _ = write!(out, ",{},{}", fmt_opt(cell.abs_mse), fmt_opt(cell.rel_mse));
            }
            out.push('\n');
        }
        out
    }

    /// One line per instance pair.
    pub fn pairs_csv(&self) -> String {
        let mut out = String::from("mode,encoder,decoder,encoder_family,decoder_family,mse\n");
        for p in &self.pairs {
            let mode = match p.mode {
                StitchMode::Absolute => "absolute",
                StitchMode::Relative => "relative",
            };
            let _ = writeln!(
                out,
                "{mode},{},{},{},{},{}",
                p.encoder,
                p.decoder,
                p.encoder_family,
                p.decoder_family,
                fmt_opt(p.mse)
            );
        }
        out
    }
}
