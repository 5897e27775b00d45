use latent_atlas::dynsys::Split;
use latent_atlas::forecasters::{
    collect_latents, true_system_latents, LatentMatrix, TRUE_SYSTEM_ID,
};
use latent_atlas::relgeom::{align as align_pair, baseline_cka, baseline_procrustes, baseline_rsa};
use rayon::prelude::*;
use serde_json::json;

use super::{anchors, common_shape, grid_jobs, sample_refs};
use crate::error::{CliError, Context};
use crate::run::{num, Run};

struct Scores {
    rel: [f64; 3],
    base: Option<[f64; 3]>,
}

const METRICS: [&str; 3] = ["cosine", "t1", "rank"];
const BASELINES: [&str; 3] = ["cka", "rsa", "procrustes"];

pub fn align(run: &Run) -> Result<(), CliError> {
    let set = run.dataset()?;
    let jobs = grid_jobs(run, &run.cfg.labels(), run.cfg.models.seeds);
    let ckpts = run.checkpoints(&set, &jobs)?;
    let (l, h) = common_shape(&ckpts)?;
    let refs = sample_refs(run, &set, l, h)?;
    let anchors = anchors(run, refs.len())?;

    let mut lats: Vec<(String, LatentMatrix)> = vec![(
        TRUE_SYSTEM_ID.into(),
        true_system_latents(&set, Split::Test, &refs, l, h)?,
    )];
    let encoded = run.pool.install(|| {
        ckpts
            .par_iter()
            .map(|c| {
                Ok((
                    c.label(),
                    collect_latents(c, &set, Split::Test, &refs)
                        .context(|| format!("encoding {}", c.id()))?,
                ))
            })
            .collect::<Result<Vec<_>, CliError>>()
    })?;
    lats.extend(encoded);

    let n = lats.len();
    let upper: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    let baselines = run.cfg.alignment.baselines;
    let scores = run.pool.install(|| {
        upper
            .par_iter()
            .map(|&(i, j)| {
                let (a, b) = (&lats[i].1, &lats[j].1);
                let r = align_pair(a, b, &anchors, run.cfg.seed)
                    .context(|| format!("aligning {} with {}", a.forecaster_id, b.forecaster_id))?;
                let base = if baselines {
                    Some([
                        baseline_cka(&a.z, &b.z)?,
                        baseline_rsa(&a.z, &b.z)?,
                        baseline_procrustes(&a.z, &b.z)?,
                    ])
                } else {
                    None
                };
                Ok(Scores {
                    rel: [r.cosine, r.t1, r.rank],
                    base,
                })
            })
            .collect::<Result<Vec<_>, CliError>>()
    })?;
    let mut grid: Vec<Vec<Option<&Scores>>> = vec![vec![None; n]; n];
    for (&(i, j), s) in upper.iter().zip(&scores) {
        grid[i][j] = Some(s);
        grid[j][i] = Some(s);
    }
    let at = |i: usize, j: usize| grid[i][j].expect("every pair scored");

    let selected: Vec<usize> = run
        .cfg
        .alignment
        .metrics
        .iter()
        .map(|m| METRICS.iter().position(|x| x == m).expect("validated"))
        .collect();
    let mut header = String::from("model_a,model_b,family_a,family_b");
    for &m in &selected {
        header += &format!(",{}", METRICS[m]);
    }
    if baselines {
        for b in BASELINES {
            header += &format!(",{b}");
        }
    }
    header += ",n_samples,n_anchors";
    let mut rows = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let s = at(i, j);
            let mut row = format!(
                "{},{},{},{}",
                lats[i].1.forecaster_id, lats[j].1.forecaster_id, lats[i].0, lats[j].0
            );
            for &m in &selected {
                row += &format!(",{}", num(s.rel[m]));
            }
            if let Some(b) = s.base {
                for v in b {
                    row += &format!(",{}", num(v));
                }
            }
            row += &format!(",{},{}", refs.len(), anchors.m());
            rows.push(row);
        }
    }
    run.write_csv("align/alignment.csv", &header, &rows)?;

    let mut families: Vec<String> = Vec::new();
    for (f, _) in &lats {
        if !families.contains(f) {
            families.push(f.clone());
        }
    }
    let mut metrics = serde_json::Map::new();
    let names: Vec<&str> = METRICS
        .iter()
        .copied()
        .chain(if baselines {
            BASELINES.to_vec()
        } else {
            vec![]
        })
        .collect();
    for (mi, name) in names.iter().enumerate() {
        let value = |i: usize, j: usize| {
            let s = at(i, j);
            if mi < 3 {
                s.rel[mi]
            } else {
                s.base.expect("baselines on")[mi - 3]
            }
        };
        let instance: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| value(i, j)).collect())
            .collect();
        let family: Vec<Vec<Option<f64>>> = families
            .iter()
            .map(|fa| {
                families
                    .iter()
                    .map(|fb| {
                        let v: Vec<f64> = (0..n)
                            .flat_map(|i| (0..n).map(move |j| (i, j)))
                            .filter(|&(i, j)| i != j && &lats[i].0 == fa && &lats[j].0 == fb)
                            .map(|(i, j)| value(i, j))
                            .collect();
                        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
                    })
                    .collect()
            })
            .collect();
        metrics.insert(
            name.to_string(),
            json!({ "instances": instance, "families": family }),
        );
    }
    run.write_json(
        "align/heatmap.json",
        json!({
            "instances": lats.iter().map(|(_, l)| l.forecaster_id.clone()).collect::<Vec<_>>(),
            "families": families,
            "n_samples": refs.len(),
            "n_anchors": anchors.m(),
            "metrics": metrics,
        }),
    )?;
    eprintln!(
        "aligned {n} representations on {} samples with {} anchors",
        refs.len(),
        anchors.m()
    );
    Ok(())
}
