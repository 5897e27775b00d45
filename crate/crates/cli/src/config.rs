use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use latent_atlas::dynsys::SystemId;
use latent_atlas::forecasters::ForecasterSpec;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const CONFIG_VERSION: u32 = 1;

pub const DESK_GRID: [&str; 7] = ["MLP", "K-MLP", "N-MLP", "RNN", "A-RNN", "TF", "ESN"];
pub const FULL_GRID: [&str; 11] = [
    "MLP", "K-MLP", "N-MLP", "RNN", "K-RNN", "N-RNN", "A-RNN", "TF", "K-TF", "N-TF", "ESN",
];

/// One experiment, read from a TOML file. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub version: u32,
    pub seed: u64,
    /// Output root; `--out` and `LATENT_ATLAS_OUT` take precedence.
    pub out: Option<PathBuf>,
    /// Concurrent tasks; 0 uses every core.
    pub workers: usize,
    pub dataset: DatasetConfig,
    pub models: ModelsConfig,
    pub alignment: AlignmentConfig,
    pub ablation: AblationConfig,
    pub perturbation: PerturbationConfig,
    pub stitching: StitchingConfig,
    pub probe: ProbeConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub system: String,
    /// POD snapshot table, for `pod_wake`.
    pub input: Option<PathBuf>,
    /// Overrides of the system's default parameters.
    pub params: BTreeMap<String, f64>,
    pub dt: Option<f64>,
    pub steps: Option<usize>,
    pub n_traj: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelsConfig {
    pub labels: Vec<String>,
    /// Replaces `labels` with all eleven model variants.
    pub full_grid: bool,
    pub seeds: usize,
    /// Spec keys applied to every model on top of the desk-scale defaults.
    pub base: toml::Table,
    /// Per-label spec keys, applied after `base`.
    pub overrides: BTreeMap<String, toml::Table>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlignmentConfig {
    pub n_samples: usize,
    pub n_anchors: usize,
    pub metrics: Vec<String>,
    /// Adds CKA, RSA and Procrustes on absolute latents.
    pub baselines: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationConfig {
    pub model: String,
    pub reference: String,
    pub ks: Vec<usize>,
    pub repeats: usize,
    pub random_k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerturbationConfig {
    pub model: String,
    /// Gaussian σ in normalized units.
    pub noise: Vec<f64>,
    pub input_lens: Vec<usize>,
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StitchingConfig {
    pub labels: Vec<String>,
    pub seeds: usize,
    pub anchors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    /// Empty means every model of the grid.
    pub labels: Vec<String>,
    pub lambda: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            seed: 0,
            out: None,
            workers: 0,
            dataset: DatasetConfig::default(),
            models: ModelsConfig::default(),
            alignment: AlignmentConfig::default(),
            ablation: AblationConfig::default(),
            perturbation: PerturbationConfig::default(),
            stitching: StitchingConfig::default(),
            probe: ProbeConfig::default(),
        }
    }
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            system: "lorenz63".into(),
            input: None,
            params: BTreeMap::new(),
            dt: None,
            steps: None,
            n_traj: None,
        }
    }
}

impl Default for ModelsConfig {
    fn default() -> Self {
        Self {
            labels: DESK_GRID.iter().map(|s| s.to_string()).collect(),
            full_grid: false,
            seeds: 3,
            base: toml::Table::new(),
            overrides: BTreeMap::new(),
        }
    }
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        Self {
            n_samples: 1000,
            n_anchors: 80,
            metrics: vec!["cosine".into(), "t1".into(), "rank".into()],
            baselines: true,
        }
    }
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            model: "MLP".into(),
            reference: "True System".into(),
            ks: vec![2, 8, 16, 64, 256],
            repeats: 30,
            random_k: 80,
        }
    }
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        Self {
            model: "MLP".into(),
            noise: vec![0.0, 0.05, 0.1, 0.2],
            input_lens: vec![10, 20, 40],
            seeds: 3,
        }
    }
}

impl Default for StitchingConfig {
    fn default() -> Self {
        Self {
            labels: vec!["MLP".into(), "K-MLP".into(), "N-MLP".into(), "TF".into()],
            seeds: 2,
            anchors: latent_atlas::stitching::STITCH_ANCHORS,
        }
    }
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            labels: Vec::new(),
            lambda: 1e-3,
        }
    }
}

/// Desk-scale training defaults shared by every model.
pub fn desk_spec() -> ForecasterSpec {
    ForecasterSpec {
        latent_dim: 16,
        width: 64,
        d_model: 32,
        layers: 1,
        epochs: 30,
        patience: 10,
        train_stride: 5,
        eval_stride: 5,
        ..ForecasterSpec::default()
    }
}

const METRICS: [&str; 3] = ["cosine", "t1", "rank"];

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
            .map_err(|e| CliError::invalid(format!("{}: {}", path.display(), e.message)))
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::invalid(m));
        if self.version != CONFIG_VERSION {
            return bad(format!(
                "config version {} is not supported (expected {CONFIG_VERSION})",
                self.version
            ));
        }
        if SystemId::parse(&self.dataset.system).is_none() {
            return bad(format!("unknown system {:?}", self.dataset.system));
        }
        if self.models.seeds == 0 || self.perturbation.seeds == 0 || self.stitching.seeds == 0 {
            return bad("seed counts must be >= 1".into());
        }
        for m in &self.alignment.metrics {
            if !METRICS.contains(&m.as_str()) {
                return bad(format!(
                    "unknown alignment metric {m:?}; expected one of {METRICS:?}"
                ));
            }
        }
        if self.alignment.n_anchors == 0 || self.alignment.n_anchors > self.alignment.n_samples {
            return bad("alignment needs 1 <= n_anchors <= n_samples".into());
        }
        if self
            .perturbation
            .noise
            .iter()
            .any(|s| !(*s >= 0.0 && s.is_finite()))
        {
            return bad("noise levels must be finite and >= 0".into());
        }
        if self.probe.lambda.is_nan() || self.probe.lambda < 0.0 {
            return bad("probe lambda must be >= 0".into());
        }
        let labels = self.labels();
        for l in labels
            .iter()
            .chain(&self.stitching.labels)
            .chain(&self.probe.labels)
            .chain([&self.ablation.model, &self.perturbation.model])
        {
            self.spec(l, 0)?;
        }
        for l in self.models.overrides.keys() {
            ForecasterSpec::from_label(l).map_err(|e| CliError::invalid(e.to_string()))?;
        }
        Ok(())
    }

    pub fn labels(&self) -> Vec<String> {
        if self.models.full_grid {
            FULL_GRID.iter().map(|s| s.to_string()).collect()
        } else {
            self.models.labels.clone()
        }
    }

    /// Model seeds `seed, seed + 1, …`.
    pub fn model_seeds(&self, count: usize) -> Vec<u64> {
        (0..count as u64).map(|i| self.seed + i).collect()
    }

    /// Fully resolved spec of one grid entry.
    pub fn spec(&self, label: &str, seed: u64) -> Result<ForecasterSpec, CliError> {
        let named =
            ForecasterSpec::from_label(label).map_err(|e| CliError::invalid(e.to_string()))?;
        let mut table = toml::Table::try_from(desk_spec()).expect("spec serializes");
        for (k, v) in &self.models.base {
            table.insert(k.clone(), v.clone());
        }
        let key = named.label();
        if let Some(extra) = self
            .models
            .overrides
            .iter()
            .find(|(l, _)| l.eq_ignore_ascii_case(&key))
            .map(|(_, t)| t)
        {
            for (k, v) in extra {
                table.insert(k.clone(), v.clone());
            }
        }
        let mut spec: ForecasterSpec = table.try_into().map_err(|e: toml::de::Error| {
            CliError::invalid(format!("model spec for {label}: {}", e.message()))
        })?;
        spec.family = named.family;
        spec.propagator = named.propagator;
        spec.seed = seed;
        Ok(spec)
    }

    /// SHA-256 of the settings that affect numeric outputs.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut c = self.clone();
        c.out = None;
        c.workers = 0;
        hex::encode(Sha256::digest(
            serde_json::to_vec(&c).expect("config serializes"),
        ))
    }
}
