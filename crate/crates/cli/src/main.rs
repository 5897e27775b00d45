//! Command-line driver: dataset generation, training, alignment studies,
//! perturbation sweeps, stitching and probes, each writing stamped CSV/JSON
//! outputs plus a manifest under one output root.

mod commands;
mod config;
mod error;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::ExperimentConfig;
use error::CliError;
use run::Run;

#[derive(Parser, Debug)]
#[command(
    name = "latent-atlas",
    version,
    about = "Compare the latent spaces of trained forecasters"
)]
struct Cli {
    /// Experiment file (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output root.
    #[arg(long, global = true, env = "LATENT_ATLAS_OUT")]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate (or load) the dataset and save it under <out>/dataset.
    Generate {
        #[arg(long)]
        system: Option<String>,
        /// POD snapshot table for `pod_wake`.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Train the model grid, reusing matching checkpoints.
    Train {
        /// Comma-separated model labels.
        #[arg(long, value_delimiter = ',')]
        models: Vec<String>,
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Pairwise alignment of every trained model and the true system.
    Align {
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        anchors: Option<usize>,
    },
    /// Alignment against anchor count, with a disjoint-anchor baseline.
    Ablate,
    /// Noise and input-length sweeps.
    Perturb,
    /// Absolute and relative stitching tables.
    Stitch,
    /// Linear probes of the current state.
    Probe,
    /// Consolidate a run directory into report.json.
    Report { dir: Option<PathBuf> },
    /// Run every stage in order, then report.
    All,
    /// Print the resolved configuration as TOML.
    Config,
}

fn resolve(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    match &cli.command {
        Command::Generate { system, input } => {
            if let Some(s) = system {
                cfg.dataset.system = s.clone();
            }
            if let Some(i) = input {
                cfg.dataset.input = Some(i.clone());
            }
        }
        Command::Train {
            models,
            seeds,
            epochs,
        } => {
            if !models.is_empty() {
                cfg.models.labels = models.clone();
                cfg.models.full_grid = false;
            }
            if let Some(s) = seeds {
                cfg.models.seeds = *s;
            }
            if let Some(e) = epochs {
                cfg.models
                    .base
                    .insert("epochs".into(), toml::Value::Integer(*e as i64));
            }
        }
        Command::Align { samples, anchors } => {
            if let Some(n) = samples {
                cfg.alignment.n_samples = *n;
            }
            if let Some(m) = anchors {
                cfg.alignment.n_anchors = *m;
            }
        }
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cli: &Cli, cfg: &ExperimentConfig) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("runs"))
}

type Stage = fn(&Run) -> Result<(), CliError>;

fn stage(
    cfg: &ExperimentConfig,
    out: &std::path::Path,
    name: &str,
    f: Stage,
) -> Result<(), CliError> {
    let run = Run::new(cfg.clone(), out.to_path_buf(), name)?;
    f(&run)?;
    run.finish()?;
    Ok(())
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let cfg = resolve(cli)?;
    let out = out_dir(cli, &cfg);
    match &cli.command {
        Command::Config => {
            print!("{}", cfg.to_toml());
            Ok(())
        }
        Command::Generate { .. } => stage(&cfg, &out, "generate", commands::generate),
        Command::Train { .. } => stage(&cfg, &out, "train", commands::train),
        Command::Align { .. } => stage(&cfg, &out, "align", commands::align),
        Command::Ablate => stage(&cfg, &out, "ablate", commands::ablate),
        Command::Perturb => stage(&cfg, &out, "perturb", commands::perturb),
        Command::Stitch => stage(&cfg, &out, "stitch", commands::stitch),
        Command::Probe => stage(&cfg, &out, "probe", commands::probe),
        Command::Report { dir } => {
            let dir = dir.clone().unwrap_or(out);
            let run = Run::new(cfg, dir.clone(), "report")?;
            commands::report(&run, &dir)?;
            run.finish()?;
            Ok(())
        }
        Command::All => {
            let stages: [(&str, Stage); 7] = [
                ("generate", commands::generate),
                ("train", commands::train),
                ("align", commands::align),
                ("ablate", commands::ablate),
                ("perturb", commands::perturb),
                ("stitch", commands::stitch),
                ("probe", commands::probe),
            ];
            for (name, f) in stages {
                eprintln!("== {name}");
                stage(&cfg, &out, name, f)?;
            }
            let run = Run::new(cfg, out.clone(), "report")?;
            commands::report(&run, &out)?;
            run.finish()?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
