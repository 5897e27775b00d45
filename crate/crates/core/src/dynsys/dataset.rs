use nalgebra::DMatrix;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::integrate::integrate_recorded;
use super::skew::{sample_skew_product, SkewProduct};
use super::{step_map, DynError, SystemId, SystemSpec};
use crate::rng;

/// One trajectory, stored row-major as `steps × dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    data: Vec<f64>,
    steps: usize,
    dim: usize,
    pub t0: f64,
    pub dt: f64,
    /// Raw initial condition the trajectory was integrated from.
    pub source_ic: Vec<f64>,
}

impl Trajectory {
    pub fn from_rows(rows: &[Vec<f64>], t0: f64, dt: f64, source_ic: Vec<f64>) -> Self {
        let dim = rows.first().map_or(0, Vec::len);
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self {
            data,
            steps: rows.len(),
            dim,
            t0,
            dt,
            source_ic,
        }
    }

    pub(crate) fn from_flat(
        data: Vec<f64>,
        dim: usize,
        t0: f64,
        dt: f64,
        source_ic: Vec<f64>,
    ) -> Self {
        assert_eq!(data.len() % dim, 0);
        Self {
            steps: data.len() / dim,
            data,
            dim,
            t0,
            dt,
            source_ic,
        }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn state(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    /// `len` consecutive states starting at `start`, flattened row-major.
    pub fn rows(&self, start: usize, len: usize) -> &[f64] {
        &self.data[start * self.dim..(start + len) * self.dim]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.steps, self.dim, &self.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn map_channels(&mut self, f: impl Fn(usize, f64) -> f64) {
        let d = self.dim;
        for (i, v) in self.data.iter_mut().enumerate() {
            *v = f(i % d, *v);
        }
    }
}

/// Per-channel statistics in raw system units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormalizationStats {
    /// Population mean/std over every state of `trajs`.
    pub fn fit(trajs: &[Trajectory]) -> Result<Self, DynError> {
        let d = trajs[0].dim();
        let n: usize = trajs.iter().map(Trajectory::steps).sum();
        let mut mean = vec![0.0; d];
        for t in trajs {
            for row in t.as_flat().chunks(d) {
                for c in 0..d {
                    mean[c] += row[c];
                }
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; d];
        for t in trajs {
            for row in t.as_flat().chunks(d) {
                for c in 0..d {
                    var[c] += (row[c] - mean[c]).powi(2);
                }
            }
        }
        let std: Vec<f64> = var.iter().map(|v| (v / n as f64).sqrt()).collect();
        if let Some((channel, &s)) = std.iter().enumerate().find(|(_, &s)| s < 1e-12) {
            return Err(DynError::DegenerateChannel { channel, std: s });
        }
        Ok(Self { mean, std })
    }

    pub fn normalize(&self, t: &mut Trajectory) {
        t.map_channels(|c, v| (v - self.mean[c]) / self.std[c]);
    }

    pub fn denormalize(&self, t: &mut Trajectory) {
        t.map_channels(|c, v| v * self.std[c] + self.mean[c]);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// Z-scored trajectories in three splits.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySet {
    pub system: SystemSpec,
    pub norm: NormalizationStats,
    pub train: Vec<Trajectory>,
    pub val: Vec<Trajectory>,
    pub test: Vec<Trajectory>,
    /// Sampled skew product, for `random_skew` datasets.
    pub skew: Option<SkewProduct>,
}

/// Provenance of a window: which trajectory and where its input starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WindowRef {
    pub traj_id: usize,
    pub start_index: usize,
}

/// Input `x[s..s+L]` and target `x[s+L..s+L+H]` of one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub input: DMatrix<f64>,
    pub target: DMatrix<f64>,
    pub traj_id: usize,
    pub start_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitWindows {
    pub train: Vec<Window>,
    pub val: Vec<Window>,
    pub test: Vec<Window>,
}

impl TrajectorySet {
    /// Normalizes raw splits with train-split statistics.
    pub fn from_raw(
        system: SystemSpec,
        mut train: Vec<Trajectory>,
        mut val: Vec<Trajectory>,
        mut test: Vec<Trajectory>,
        skew: Option<SkewProduct>,
    ) -> Result<Self, DynError> {
        let norm = NormalizationStats::fit(&train)?;
        for t in train
            .iter_mut()
            .chain(val.iter_mut())
            .chain(test.iter_mut())
        {
            norm.normalize(t);
        }
        Ok(Self {
            system,
            norm,
            train,
            val,
            test,
            skew,
        })
    }

    pub fn dim(&self) -> usize {
        self.system.dim()
    }

    pub fn split(&self, split: Split) -> &[Trajectory] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn split_mut(&mut self, split: Split) -> &mut Vec<Trajectory> {
        match split {
            Split::Train => &mut self.train,
            Split::Val => &mut self.val,
            Split::Test => &mut self.test,
        }
    }

    /// Copy with i.i.d. `N(0, sigma²)` added to every normalized value.
    ///
    /// Split `s` draws from stream `s` of `seed`; `sigma = 0` returns an exact copy.
    pub fn with_noise(&self, sigma: f64, seed: u64) -> Result<Self, DynError> {
        if !(sigma >= 0.0) {
            return Err(DynError::InvalidSpec(format!(
                "noise sigma {sigma} must be non-negative"
            )));
        }
        let noise = Normal::new(0.0, sigma)
            .map_err(|e| DynError::InvalidSpec(format!("noise sigma {sigma}: {e}")))?;
        let mut out = self.clone();
        if sigma == 0.0 {
            return Ok(out);
        }
        for (s, split) in [Split::Train, Split::Val, Split::Test]
            .into_iter()
            .enumerate()
        {
            let mut g = rng::stream(seed, s as u64);
            for t in out.split_mut(split) {
                t.data.iter_mut().for_each(|v| *v += noise.sample(&mut g));
            }
        }
        Ok(out)
    }

    /// Window start positions of one split, trajectory-major.
    pub fn window_refs(
        &self,
        split: Split,
        input_len: usize,
        horizon: usize,
        stride: usize,
    ) -> Result<Vec<WindowRef>, DynError> {
        let trajs = self.split(split);
        let mut out = Vec::new();
        for (traj_id, t) in trajs.iter().enumerate() {
            for start in window_starts(t.steps(), input_len, horizon, stride)? {
                out.push(WindowRef {
                    traj_id,
                    start_index: start,
                });
            }
        }
        Ok(out)
    }

    pub fn window(
        &self,
        split: Split,
        r: WindowRef,
        input_len: usize,
        horizon: usize,
    ) -> Result<Window, DynError> {
        let traj = self.split(split).get(r.traj_id).ok_or_else(|| {
            DynError::Shape(format!(
                "trajectory {} out of range in {} split",
                r.traj_id,
                split.name()
            ))
        })?;
        if r.start_index + input_len + horizon > traj.steps() {
            return Err(DynError::Shape(format!(
                "window at {} with L={input_len}, H={horizon} exceeds T={}",
                r.start_index,
                traj.steps()
            )));
        }
        let d = traj.dim();
        Ok(Window {
            input: DMatrix::from_row_slice(input_len, d, traj.rows(r.start_index, input_len)),
            target: DMatrix::from_row_slice(
                horizon,
                d,
                traj.rows(r.start_index + input_len, horizon),
            ),
            traj_id: r.traj_id,
            start_index: r.start_index,
        })
    }
}

/// Start indices of all windows in a trajectory of `steps` samples;
/// there are `floor((T - L - H) / stride) + 1` of them.
pub fn window_starts(
    steps: usize,
    input_len: usize,
    horizon: usize,
    stride: usize,
) -> Result<Vec<usize>, DynError> {
    if input_len == 0 || horizon == 0 || stride == 0 {
        return Err(DynError::Shape(format!(
            "L, H and stride must be >= 1 (L={input_len}, H={horizon}, stride={stride})"
        )));
    }
    if input_len + horizon > steps {
        return Err(DynError::Shape(format!(
            "L + H = {} exceeds trajectory length {steps}",
            input_len + horizon
        )));
    }
    Ok((0..=steps - input_len - horizon).step_by(stride).collect())
}

/// Materializes every window of every split.
pub fn make_windows(
    set: &TrajectorySet,
    input_len: usize,
    horizon: usize,
    stride: usize,
) -> Result<SplitWindows, DynError> {
    let build = |split: Split| -> Result<Vec<Window>, DynError> {
        set.window_refs(split, input_len, horizon, stride)?
            .into_iter()
            .map(|r| set.window(split, r, input_len, horizon))
            .collect()
    };
    Ok(SplitWindows {
        train: build(Split::Train)?,
        val: build(Split::Val)?,
        test: build(Split::Test)?,
    })
}

/// Integrates a continuous system from `x0` (observation coordinates) for
/// `t_span` time units, recording every `dt_record`.
pub fn integrate(
    spec: &SystemSpec,
    x0: &[f64],
    t_span: f64,
    dt_record: f64,
) -> Result<Trajectory, DynError> {
    if !spec.system.is_continuous() {
        return Err(DynError::InvalidSpec(format!(
            "{} is not a continuous system",
            spec.system
        )));
    }
    if x0.len() != spec.dim() {
        return Err(DynError::Shape(format!(
            "initial condition has {} entries, {} needs {}",
            x0.len(),
            spec.system,
            spec.dim()
        )));
    }
    if !(dt_record > 0.0) || !(t_span >= 0.0) {
        return Err(DynError::InvalidSpec(format!(
            "bad time grid: t_span={t_span}, dt={dt_record}"
        )));
    }
    let n = (t_span / dt_record).round() as usize + 1;
    integrate_records(spec, x0, 0.0, dt_record, n)
}

fn integrate_records(
    spec: &SystemSpec,
    x0: &[f64],
    t0: f64,
    dt: f64,
    n: usize,
) -> Result<Trajectory, DynError> {
    let field = spec.field()?;
    let tol = spec.system.tolerances();
    let rows = if spec.system == SystemId::LimitCycle {
        let polar = [x0[0].hypot(x0[1]), x0[1].atan2(x0[0])];
        integrate_recorded(field.as_ref(), &polar, t0, dt, n, tol)?
            .into_iter()
            .map(|p| vec![p[0] * p[1].cos(), p[0] * p[1].sin()])
            .collect()
    } else {
        integrate_recorded(field.as_ref(), x0, t0, dt, n, tol)?
    };
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(DynError::NonFiniteState { t: t0 });
    }
    Ok(Trajectory::from_rows(&rows, t0, dt, x0.to_vec()))
}

/// Iterates the logistic map `steps - 1` times from `x0`.
pub fn iterate_map(spec: &SystemSpec, x0: f64, steps: usize) -> Result<Trajectory, DynError> {
    let mut rows = Vec::with_capacity(steps);
    let mut x = x0;
    step_map(spec, x)?; // domain check on x0
    rows.push(vec![x]);
    for _ in 1..steps {
        x = step_map(spec, x)?;
        rows.push(vec![x]);
    }
    Ok(Trajectory::from_rows(&rows, 0.0, spec.dt, vec![x0]))
}

const RESAMPLE_STREAM: u64 = 1 << 40;

fn skew_trajectory(
    spec: &SystemSpec,
    product: &SkewProduct,
    index: u64,
) -> Result<Trajectory, DynError> {
    let noise = Normal::new(0.0, spec.param("ic_noise")?)
        .map_err(|e| DynError::InvalidSpec(format!("ic_noise: {e}")))?;
    let warmup = (spec.param("warmup")? * spec.steps as f64).ceil() as usize;
    let attempt = |stream: u64| -> Result<Trajectory, DynError> {
        let mut rng = rng::stream(spec.seed, stream);
        let ic: Vec<f64> = product
            .seed_state()
            .iter()
            .map(|v| v + noise.sample(&mut rng))
            .collect();
        let rows = integrate_recorded(
            product,
            &ic,
            0.0,
            spec.dt,
            warmup + spec.steps,
            spec.system.tolerances(),
        )?;
        let kept = &rows[warmup..];
        let t = Trajectory::from_rows(kept, warmup as f64 * spec.dt, spec.dt, ic);
        if skew_rejected(&t) {
            return Err(DynError::GenerationFailed {
                traj: index as usize,
            });
        }
        Ok(t)
    };
    attempt(index)
        .or_else(|_| attempt(index + RESAMPLE_STREAM))
        .map_err(|_| DynError::GenerationFailed {
            traj: index as usize,
        })
}

/// Non-finite states, radius above 1e6, or summed channel variance below 1e-6.
pub fn skew_rejected(t: &Trajectory) -> bool {
    if !t.is_finite() {
        return true;
    }
    let d = t.dim();
    let radius = t
        .as_flat()
        .chunks(d)
        .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    if radius > 1e6 {
        return true;
    }
    let n = t.steps() as f64;
    let mut total_var = 0.0;
    for c in 0..d {
        let mean = t.as_flat().chunks(d).map(|r| r[c]).sum::<f64>() / n;
        total_var += t
            .as_flat()
            .chunks(d)
            .map(|r| (r[c] - mean).powi(2))
            .sum::<f64>()
            / n;
    }
    total_var < 1e-6
}

/// Raw trajectory `index` (0-based over all splits) of `spec`.
fn raw_trajectory(
    spec: &SystemSpec,
    skew: Option<&SkewProduct>,
    index: u64,
) -> Result<Trajectory, DynError> {
    match spec.system {
        SystemId::LogisticMap => {
            let mut rng = rng::stream(spec.seed, index);
            let x0 = spec.sample_ic(&mut rng)[0];
            iterate_map(spec, x0, spec.steps)
        }
        SystemId::RandomSkew => skew_trajectory(spec, skew.expect("skew product sampled"), index),
        SystemId::PodWake => Err(DynError::InvalidSpec(
            "pod_wake datasets are loaded from a file".into(),
        )),
        _ => {
            let mut rng = rng::stream(spec.seed, index);
            let x0 = spec.sample_ic(&mut rng);
            integrate_records(spec, &x0, 0.0, spec.dt, spec.steps)
        }
    }
}

/// Generates `3 * n_traj` trajectories and z-scores them with train statistics.
///
/// Trajectory `j` draws its initial condition from stream `j` of the dataset
/// seed; the first `n_traj` go to train, the next to val, the rest to test.
pub fn generate_dataset(spec: &SystemSpec) -> Result<TrajectorySet, DynError> {
    spec.validate()?;
    let skew = match spec.system {
        SystemId::RandomSkew => Some(sample_skew_product(spec)?),
        _ => None,
    };
    let n = spec.n_traj;
    let mut all = (0..3 * n as u64)
        .map(|j| raw_trajectory(spec, skew.as_ref(), j))
        .collect::<Result<Vec<_>, _>>()?;
    let test = all.split_off(2 * n);
    let val = all.split_off(n);
    TrajectorySet::from_raw(spec.clone(), all, val, test, skew)
}
