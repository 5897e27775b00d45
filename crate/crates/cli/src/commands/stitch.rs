use latent_atlas::stitching::{
    stitch_grid, train_relative, GlobalAnchors, RelativeForecaster, StitchInstances,
};
use rayon::prelude::*;

use super::{common_shape, grid_jobs};
use crate::error::{CliError, Context};
use crate::run::Run;

fn split_csv(text: &str) -> (String, Vec<String>) {
    let mut lines = text.lines().map(str::to_string);
    let header = lines.next().unwrap_or_default();
    (header, lines.collect())
}

pub fn stitch(run: &Run) -> Result<(), CliError> {
    let cfg = &run.cfg.stitching;
    let set = run.dataset()?;
    let jobs = grid_jobs(run, &cfg.labels, cfg.seeds);
    let absolute = run.checkpoints(&set, &jobs)?;
    let (l, h) = common_shape(&absolute)?;
    let anchors = GlobalAnchors::sample(&set, l, h, cfg.anchors, run.cfg.seed)?;
    let fingerprint = set.fingerprint();

    let relative = run.pool.install(|| {
        jobs.par_iter()
            .map(|(label, seed)| {
                let spec = run.trained_spec(&set, label, *seed)?;
                let path = run.path(&format!("stitch/relative/{}_seed{seed}.json", spec.label()));
                if let Ok(rf) = RelativeForecaster::load(&path) {
                    if rf.spec == spec
                        && rf.global_anchors == anchors
                        && rf.dataset_fingerprint == fingerprint
                    {
                        run.record(path);
                        return Ok(rf);
                    }
                }
                let rf = train_relative(&spec, &set, &anchors)
                    .context(|| format!("training relative {spec}"))?;
                rf.save(&path)
                    .context(|| format!("saving {}", path.display()))?;
                run.record(path);
                Ok(rf)
            })
            .collect::<Result<Vec<_>, CliError>>()
    })?;

    let table = run.pool.install(|| -> Result<_, CliError> {
        let abs = stitch_grid(StitchInstances::Absolute(&absolute), &set)?;
        let rel = stitch_grid(StitchInstances::Relative(&relative), &set)?;
        Ok(abs.merge(rel))
    })?;
    let (header, rows) = split_csv(&table.to_csv());
    run.write_csv("stitch/table.csv", &header, &rows)?;
    let (header, rows) = split_csv(&table.pairs_csv());
    run.write_csv("stitch/pairs.csv", &header, &rows)?;
    Ok(())
}
