use latent_atlas::dynsys::Split;
use latent_atlas::forecasters::evaluate;

use super::grid_jobs;
use crate::error::{CliError, Context};
use crate::run::{num, Run};

pub fn train(run: &Run) -> Result<(), CliError> {
    let set = run.dataset()?;
    let jobs = grid_jobs(run, &run.cfg.labels(), run.cfg.models.seeds);
    let ckpts = run.checkpoints(&set, &jobs)?;
    let mut log = Vec::new();
    let mut metrics = Vec::new();
    for ck in &ckpts {
        let (label, seed) = (ck.label(), ck.model.spec.seed);
        for e in &ck.train_log {
            log.push(format!(
                "{label},{seed},{},{},{},{}",
                e.epoch,
                num(e.train_mse),
                num(e.val_mse),
                num(e.lr)
            ));
        }
        let r = evaluate(ck, &set, Split::Test).context(|| format!("evaluating {}", ck.id()))?;
        metrics.push(format!(
            "{label},{seed},{},{},{},{},{}",
            num(r.mse),
            num(r.rmse),
            num(r.mae),
            num(ck.best_val_mse),
            ck.epochs_run()
        ));
        eprintln!("{}: test mse {:.4}", ck.id(), r.mse);
    }
    run.write_csv(
        "train/train_log.csv",
        "model,seed,epoch,train_mse,val_mse,lr",
        &log,
    )?;
    run.write_csv(
        "train/test_metrics.csv",
        "model,seed,mse,rmse,mae,best_val_mse,epochs",
        &metrics,
    )?;
    Ok(())
}
