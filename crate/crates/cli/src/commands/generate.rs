use crate::error::CliError;
use crate::run::Run;

pub fn generate(run: &Run) -> Result<(), CliError> {
    let set = run.build_dataset()?;
    run.save_dataset(&set)?;
    eprintln!(
        "generated {} ({} train / {} val / {} test trajectories) in {}",
        set.system.system,
        set.train.len(),
        set.val.len(),
        set.test.len(),
        run.dataset_dir().display()
    );
    Ok(())
}
