mod ablate;
mod align;
mod generate;
mod perturb;
mod probe;
mod report;
mod stitch;
mod train;

pub use ablate::ablate;
pub use align::align;
pub use generate::generate;
pub use perturb::perturb;
pub use probe::probe;
pub use report::report;
pub use stitch::stitch;
pub use train::train;

use latent_atlas::dynsys::{Split, TrajectorySet, WindowRef};
use latent_atlas::forecasters::ForecasterCheckpoint;
use latent_atlas::relgeom::AnchorSet;
use latent_atlas::rng;
use rand::seq::index;

use crate::error::CliError;
use crate::run::Run;

/// Every `(label, seed)` of the model grid, grid-major.
pub fn grid_jobs(run: &Run, labels: &[String], seeds: usize) -> Vec<(String, u64)> {
    labels
        .iter()
        .flat_map(|l| {
            run.cfg
                .model_seeds(seeds)
                .into_iter()
                .map(move |s| (l.clone(), s))
        })
        .collect()
}

/// Window shape shared by all checkpoints.
pub fn common_shape(ckpts: &[ForecasterCheckpoint]) -> Result<(usize, usize), CliError> {
    let first = ckpts
        .first()
        .ok_or_else(|| CliError::invalid("empty model grid"))?;
    let shape = (first.model.spec.input_len, first.model.spec.horizon);
    if let Some(other) = ckpts
        .iter()
        .find(|c| (c.model.spec.input_len, c.model.spec.horizon) != shape)
    {
        return Err(CliError::invalid(format!(
            "{} and {} use different window shapes; alignment needs one shared sample",
            first.id(),
            other.id()
        )));
    }
    Ok(shape)
}

/// Up to `n_samples` test windows, drawn once per run seed and window shape.
pub fn sample_refs(
    run: &Run,
    set: &TrajectorySet,
    input_len: usize,
    horizon: usize,
) -> Result<Vec<WindowRef>, CliError> {
    let all = set.window_refs(Split::Test, input_len, horizon, 1)?;
    let n = run.cfg.alignment.n_samples.min(all.len());
    let mut g = rng::stream(rng::derive(run.cfg.seed, "samples"), input_len as u64);
    let mut idx = index::sample(&mut g, all.len(), n).into_vec();
    idx.sort_unstable();
    Ok(idx.into_iter().map(|i| all[i]).collect())
}

pub fn anchors(run: &Run, n: usize) -> Result<AnchorSet, CliError> {
    Ok(AnchorSet::sample(
        n,
        run.cfg.alignment.n_anchors.min(n),
        run.cfg.seed,
    )?)
}
