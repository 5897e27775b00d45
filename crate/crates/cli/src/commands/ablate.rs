use latent_atlas::dynsys::Split;
use latent_atlas::forecasters::{
    collect_latents, true_system_latents, LatentMatrix, TRUE_SYSTEM_ID,
};
use latent_atlas::relgeom::{anchor_ablation, random_baseline};

use super::sample_refs;
use crate::error::CliError;
use crate::run::{num, Run};

pub fn ablate(run: &Run) -> Result<(), CliError> {
    let cfg = &run.cfg.ablation;
    let set = run.dataset()?;
    let mut names = vec![cfg.model.clone()];
    let true_ref = cfg.reference.eq_ignore_ascii_case(TRUE_SYSTEM_ID);
    if !true_ref {
        names.push(cfg.reference.clone());
    }
    let jobs: Vec<(String, u64)> = names.into_iter().map(|l| (l, run.cfg.seed)).collect();
    let ckpts = run.checkpoints(&set, &jobs)?;
    let model = &ckpts[0];
    let (l, h) = (model.model.spec.input_len, model.model.spec.horizon);
    let refs = sample_refs(run, &set, l, h)?;
    let z_model = collect_latents(model, &set, Split::Test, &refs)?;
    let z_ref: LatentMatrix = if true_ref {
        true_system_latents(&set, Split::Test, &refs, l, h)?
    } else {
        collect_latents(&ckpts[1], &set, Split::Test, &refs)?
    };
    let points = anchor_ablation(&z_model.z, &z_ref.z, &cfg.ks, cfg.repeats, run.cfg.seed)?;
    let base = random_baseline(
        &z_model.z,
        &z_ref.z,
        cfg.random_k,
        cfg.repeats,
        run.cfg.seed,
    )?;

    let pair = format!("{},{}", z_model.forecaster_id, z_ref.forecaster_id);
    let mut rows: Vec<String> = points
        .iter()
        .map(|p| {
            format!(
                "{pair},anchors,{},{},{},{}",
                p.k,
                num(p.mean),
                num(p.std),
                p.values.len()
            )
        })
        .collect();
    rows.push(format!(
        "{pair},random_baseline,{},{},{},{}",
        base.k,
        num(base.mean),
        num(base.std),
        base.values.len()
    ));
    run.write_csv(
        "ablate/ablation.csv",
        "model,reference,series,k,mean,std,repeats",
        &rows,
    )?;

    let mut draws = Vec::new();
    for p in &points {
        draws.extend(
            p.values
                .iter()
                .enumerate()
                .map(|(r, v)| format!("anchors,{},{r},{}", p.k, num(*v))),
        );
    }
    draws.extend(
        base.values
            .iter()
            .enumerate()
            .map(|(r, v)| format!("random_baseline,{},{r},{}", base.k, num(*v))),
    );
    run.write_csv("ablate/draws.csv", "series,k,repeat,cosine", &draws)?;
    Ok(())
}
