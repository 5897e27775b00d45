use latent_atlas::autodiff::Tensor;
use latent_atlas::dynsys::{Split, TrajectorySet};
use latent_atlas::forecasters::{
    batch_tensors, collect_latents, evaluate_predictions, train, true_system_latents,
    ForecasterCheckpoint, ModelError,
};
use latent_atlas::relgeom::align as align_pair;
use latent_atlas::rng;
use rayon::prelude::*;

use super::{anchors, sample_refs};
use crate::error::{CliError, Context};
use crate::run::{num, Run};

#[derive(Clone, Copy)]
enum Sweep {
    Noise(usize, f64),
    InputLen(usize),
}

/// Test MSE of predictions from `noisy` inputs against `clean` targets.
fn noisy_mse(
    ck: &ForecasterCheckpoint,
    noisy: &TrajectorySet,
    clean: &TrajectorySet,
) -> Result<f64, ModelError> {
    let s = &ck.model.spec;
    let (l, h, d) = (s.input_len, s.horizon, s.dim);
    let refs = clean.window_refs(Split::Test, l, h, s.eval_stride)?;
    let (mut preds, mut targets) = (Vec::new(), Vec::new());
    for chunk in refs.chunks(256) {
        let (x, _) = batch_tensors(noisy, Split::Test, chunk, l, h)?;
        let (_, y) = batch_tensors(clean, Split::Test, chunk, l, h)?;
        preds.extend_from_slice(ck.model.predict_batch(&x)?.data());
        targets.extend_from_slice(y.data());
    }
    let n = refs.len();
    let pred = Tensor::new(vec![n, h * d], preds)?;
    let target = Tensor::new(vec![n, h * d], targets)?;
    Ok(evaluate_predictions(&pred, &target, h, d)?.mse)
}

pub fn perturb(run: &Run) -> Result<(), CliError> {
    let cfg = &run.cfg.perturbation;
    let set = run.dataset()?;
    let mut conditions: Vec<Sweep> = cfg
        .noise
        .iter()
        .copied()
        .enumerate()
        .map(|(i, s)| Sweep::Noise(i, s))
        .collect();
    conditions.extend(cfg.input_lens.iter().map(|&l| Sweep::InputLen(l)));
    let seeds = run.cfg.model_seeds(cfg.seeds);
    let tasks: Vec<(Sweep, u64)> = conditions
        .iter()
        .flat_map(|&c| seeds.iter().map(move |&s| (c, s)))
        .collect();

    let results = run.pool.install(|| {
        tasks
            .par_iter()
            .map(|&(cond, seed)| {
                let mut spec = run.trained_spec(&set, &cfg.model, seed)?;
                let noisy = match cond {
                    Sweep::Noise(i, sigma) => {
                        set.with_noise(sigma, rng::derive(run.cfg.seed, &format!("noise/{i}")))?
                    }
                    Sweep::InputLen(l) => {
                        spec.input_len = l;
                        set.clone()
                    }
                };
                let ck = train(&spec, &noisy)
                    .context(|| format!("training {spec} on a perturbed dataset"))?;
                let mse = noisy_mse(&ck, &noisy, &set)?;
                let (l, h) = (spec.input_len, spec.horizon);
                let refs = sample_refs(run, &set, l, h)?;
                let z = collect_latents(&ck, &noisy, Split::Test, &refs)?;
                let truth = true_system_latents(&set, Split::Test, &refs, l, h)?;
                let rss = align_pair(&z, &truth, &anchors(run, refs.len())?, run.cfg.seed)?.cosine;
                Ok((mse, rss))
            })
            .collect::<Result<Vec<_>, CliError>>()
    })?;

    let describe = |c: Sweep| match c {
        Sweep::Noise(_, s) => ("noise".to_string(), num(s)),
        Sweep::InputLen(l) => ("input_len".to_string(), l.to_string()),
    };
    let rows: Vec<String> = tasks
        .iter()
        .zip(&results)
        .map(|(&(c, seed), (mse, rss))| {
            let (sweep, value) = describe(c);
            format!(
                "{},{sweep},{value},{seed},{},{}",
                cfg.model,
                num(*mse),
                num(*rss)
            )
        })
        .collect();
    run.write_csv("perturb/runs.csv", "model,sweep,value,seed,mse,rss", &rows)?;

    let per = seeds.len();
    let stats = |v: Vec<f64>| {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        (
            mean,
            (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt(),
        )
    };
    let summary: Vec<String> = conditions
        .iter()
        .enumerate()
        .map(|(ci, &c)| {
            let chunk = &results[ci * per..(ci + 1) * per];
            let (m_mse, s_mse) = stats(chunk.iter().map(|r| r.0).collect());
            let (m_rss, s_rss) = stats(chunk.iter().map(|r| r.1).collect());
            let (sweep, value) = describe(c);
            format!(
                "{},{sweep},{value},{per},{},{},{},{}",
                cfg.model,
                num(m_mse),
                num(s_mse),
                num(m_rss),
                num(s_rss)
            )
        })
        .collect();
    run.write_csv(
        "perturb/summary.csv",
        "model,sweep,value,seeds,mse_mean,mse_std,rss_mean,rss_std",
        &summary,
    )?;
    Ok(())
}
