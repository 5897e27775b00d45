use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use latent_atlas::dynsys::{generate_dataset, load_pod_with, SystemId, SystemSpec, TrajectorySet};
use latent_atlas::forecasters::{train, ForecasterCheckpoint, ForecasterSpec};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::{CliError, Context};

pub const SOURCE_VERSION: &str = concat!("latent-atlas ", env!("CARGO_PKG_VERSION"));

/// State of one command invocation: resolved config, output root and the files written so far.
pub struct Run {
    pub cfg: ExperimentConfig,
    pub out: PathBuf,
    pub hash: String,
    pub pool: rayon::ThreadPool,
    command: String,
    started: Instant,
    files: Mutex<Vec<PathBuf>>,
}

#[derive(Serialize)]
struct FileEntry {
    path: String,
    sha256: String,
    bytes: u64,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config_hash: &'a str,
    seed: u64,
    source_version: &'a str,
    wall_time_s: f64,
    files: Vec<FileEntry>,
    config: &'a ExperimentConfig,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

impl Run {
    pub fn new(cfg: ExperimentConfig, out: PathBuf, command: &str) -> Result<Self, CliError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| CliError::invalid(format!("worker pool: {e}")))?;
        Ok(Self {
            hash: cfg.hash(),
            cfg,
            out,
            pool,
            command: command.to_string(),
            started: Instant::now(),
            files: Mutex::new(Vec::new()),
        })
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    pub fn record(&self, path: PathBuf) {
        let mut files = self.files.lock().expect("file list lock");
        if !files.contains(&path) {
            files.push(path);
        }
    }

    pub fn write(&self, rel: &str, contents: &str) -> Result<PathBuf, CliError> {
        let path = self.path(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).context(|| format!("creating {}", dir.display()))?;
        }
        fs::write(&path, contents).context(|| format!("writing {}", path.display()))?;
        self.record(path.clone());
        Ok(path)
    }

    /// Writes a CSV whose every row carries the config hash and run seed.
    pub fn write_csv(&self, rel: &str, header: &str, rows: &[String]) -> Result<PathBuf, CliError> {
        let stamp = format!(",{},{}", self.hash, self.cfg.seed);
        let mut text = format!("{header},config_hash,run_seed\n");
        for r in rows {
            text.push_str(r);
            text.push_str(&stamp);
            text.push('\n');
        }
        self.write(rel, &text)
    }

    /// Stamps a JSON object with the config hash and run seed.
    pub fn write_json(&self, rel: &str, value: serde_json::Value) -> Result<PathBuf, CliError> {
        let mut value = value;
        if let Some(obj) = value.as_object_mut() {
            obj.insert("config_hash".into(), self.hash.clone().into());
            obj.insert("run_seed".into(), self.cfg.seed.into());
        }
        self.write(
            rel,
            &serde_json::to_string_pretty(&value).expect("json serializes"),
        )
    }

    pub fn system_spec(&self) -> Result<SystemSpec, CliError> {
        let d = &self.cfg.dataset;
        let id = SystemId::parse(&d.system)
            .ok_or_else(|| CliError::invalid(format!("unknown system {:?}", d.system)))?;
        let mut spec = SystemSpec::new(id, self.cfg.seed);
        for (k, v) in &d.params {
            spec = spec.with_param(k, *v);
        }
        if let Some(dt) = d.dt {
            spec.dt = dt;
        }
        if let Some(steps) = d.steps {
            spec.steps = steps;
        }
        if let Some(n) = d.n_traj {
            spec.n_traj = n;
        }
        Ok(spec)
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.path("dataset")
    }

    pub fn build_dataset(&self) -> Result<TrajectorySet, CliError> {
        let spec = self.system_spec()?;
        if spec.system == SystemId::PodWake {
            let input = self
                .cfg
                .dataset
                .input
                .as_ref()
                .ok_or_else(|| CliError::invalid("pod_wake needs dataset.input (--input)"))?;
            return load_pod_with(input, spec.n_traj, spec.steps, spec.seed)
                .context(|| format!("loading {}", input.display()));
        }
        generate_dataset(&spec).context(|| format!("generating {}", spec.system))
    }

    /// The run's dataset, generated and saved on first use.
    pub fn dataset(&self) -> Result<TrajectorySet, CliError> {
        let dir = self.dataset_dir();
        if dir.join("meta.json").exists() {
            let set = TrajectorySet::load(&dir).context(|| format!("loading {}", dir.display()))?;
            let want = self.system_spec()?;
            if set.system.system != want.system || set.system.seed != want.seed {
                return Err(CliError::invalid(format!(
                    "{} holds {} seed {}, config asks for {} seed {}",
                    dir.display(),
                    set.system.system,
                    set.system.seed,
                    want.system,
                    want.seed
                )));
            }
            return Ok(set);
        }
        let set = self.build_dataset()?;
        self.save_dataset(&set)?;
        Ok(set)
    }

    pub fn save_dataset(&self, set: &TrajectorySet) -> Result<(), CliError> {
        let dir = self.dataset_dir();
        set.save(&dir)
            .context(|| format!("saving {}", dir.display()))?;
        for name in ["meta.json", "train.f64le", "val.f64le", "test.f64le"] {
            self.record(dir.join(name));
        }
        Ok(())
    }

    pub fn checkpoint_rel(label: &str, seed: u64) -> String {
        format!("checkpoints/{label}_seed{seed}.json")
    }

    /// Resolved spec as it will be stored after training on `set`.
    pub fn trained_spec(
        &self,
        set: &TrajectorySet,
        label: &str,
        seed: u64,
    ) -> Result<ForecasterSpec, CliError> {
        let mut spec = self.cfg.spec(label, seed)?;
        spec.dim = set.dim();
        spec.dt = set.system.dt;
        Ok(spec)
    }

    /// Loads matching checkpoints and trains (then saves) the rest, in parallel.
    pub fn checkpoints(
        &self,
        set: &TrajectorySet,
        jobs: &[(String, u64)],
    ) -> Result<Vec<ForecasterCheckpoint>, CliError> {
        self.pool.install(|| {
            jobs.par_iter()
                .map(|(label, seed)| {
                    let spec = self.trained_spec(set, label, *seed)?;
                    let rel = Self::checkpoint_rel(&spec.label(), *seed);
                    let path = self.path(&rel);
                    if path.exists() {
                        if let Ok(ck) = ForecasterCheckpoint::load(&path) {
                            if ck.model.spec == spec && ck.trained_on(set) {
                                self.record(path);
                                return Ok(ck);
                            }
                        }
                    }
                    let ck = train(&spec, set).context(|| format!("training {spec}"))?;
                    ck.save(&path)
                        .context(|| format!("saving {}", path.display()))?;
                    self.record(path);
                    Ok(ck)
                })
                .collect()
        })
    }

    /// Writes `manifests/<command>.json` describing every file produced.
    pub fn finish(self) -> Result<PathBuf, CliError> {
        let mut files: Vec<PathBuf> = self.files.lock().expect("file list lock").clone();
        files.sort();
        let entries = files
            .iter()
            .map(|p| {
                Ok(FileEntry {
                    path: p.strip_prefix(&self.out).unwrap_or(p).display().to_string(),
                    sha256: sha256_file(p)?,
                    bytes: fs::metadata(p).map(|m| m.len()).unwrap_or(0),
                })
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        let manifest = Manifest {
            command: &self.command,
            config_hash: &self.hash,
            seed: self.cfg.seed,
            source_version: SOURCE_VERSION,
            wall_time_s: self.started.elapsed().as_secs_f64(),
            files: entries,
            config: &self.cfg,
        };
        let path = self
            .out
            .join("manifests")
            .join(format!("{}.json", self.command));
        fs::create_dir_all(path.parent().expect("has parent"))?;
        fs::write(
            &path,
            serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
        )?;
        Ok(path)
    }
}

/// Shortest round-trip formatting, so reruns produce identical bytes.
pub fn num(v: f64) -> String {
    v.to_string()
}
