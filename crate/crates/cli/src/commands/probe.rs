use latent_atlas::dynsys::Split;
use latent_atlas::forecasters::{collect_latents, current_states};
use latent_atlas::relgeom::{probe_ridge, relative_embed};

use super::{anchors, grid_jobs, sample_refs};
use crate::error::{CliError, Context};
use crate::run::{num, Run};

pub fn probe(run: &Run) -> Result<(), CliError> {
    let labels = if run.cfg.probe.labels.is_empty() {
        run.cfg.labels()
    } else {
        run.cfg.probe.labels.clone()
    };
    let set = run.dataset()?;
    let ckpts = run.checkpoints(&set, &grid_jobs(run, &labels, run.cfg.models.seeds))?;
    let lambda = run.cfg.probe.lambda;
    let d = set.dim();
    let mut rows = Vec::new();
    for ck in &ckpts {
        let (l, h) = (ck.model.spec.input_len, ck.model.spec.horizon);
        let refs = sample_refs(run, &set, l, h)?;
        let target = current_states(&set, Split::Test, &refs, l, h)?;
        let train: Vec<usize> = (0..refs.len()).step_by(2).collect();
        let test: Vec<usize> = (1..refs.len()).step_by(2).collect();
        let z = collect_latents(ck, &set, Split::Test, &refs)?.z;
        let rel = relative_embed(&z, &anchors(run, refs.len())?, true)?.r;
        for (space, feats) in [("absolute", &z), ("relative", &rel)] {
            let r = probe_ridge(feats, &target, lambda, &train, &test)
                .context(|| format!("{space} probe of {}", ck.id()))?;
            let per: Vec<String> = r.r2.iter().map(|v| num(*v)).collect();
            rows.push(format!(
                "{},{},{space},{},{}",
                ck.label(),
                ck.model.spec.seed,
                num(r.mean_r2),
                per.join(",")
            ));
        }
    }
    let channels: Vec<String> = (0..d).map(|c| format!("r2_{c}")).collect();
    run.write_csv(
        "probe/probe.csv",
        &format!("model,seed,space,mean_r2,{}", channels.join(",")),
        &rows,
    )?;
    Ok(())
}
