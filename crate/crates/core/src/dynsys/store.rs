//! On-disk dataset layout (`format_version` 1).
//!
//! ```text
//! <dir>/meta.json       system spec, normalization stats, per-trajectory provenance
//! <dir>/train.f64le     n_traj × steps × dim little-endian f64, z-scored
//! <dir>/val.f64le
//! <dir>/test.f64le
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    DynError, NormalizationStats, SkewProduct, Split, SystemSpec, Trajectory, TrajectorySet,
};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrajMeta {
    t0: f64,
    source_ic: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Meta {
    format_version: u32,
    system: SystemSpec,
    init_sampler: String,
    norm: NormalizationStats,
    dim: usize,
    steps: usize,
    train: Vec<TrajMeta>,
    val: Vec<TrajMeta>,
    test: Vec<TrajMeta>,
    skew: Option<SkewProduct>,
    fingerprint: String,
}

fn io(path: &Path, e: impl std::fmt::Display) -> DynError {
    DynError::Io(format!("{}: {e}", path.display()))
}

fn split_bytes(trajs: &[Trajectory]) -> Vec<u8> {
    trajs
        .iter()
        .flat_map(|t| t.as_flat().iter().flat_map(|v| v.to_le_bytes()))
        .collect()
}

impl TrajectorySet {
    /// SHA-256 over the `SystemSpec` and every stored value.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&self.system).expect("spec serializes"));
        for split in Split::ALL {
            h.update(split_bytes(self.split(split)));
        }
        hex::encode(h.finalize())
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), DynError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        let metas = |trajs: &[Trajectory]| {
            trajs
                .iter()
                .map(|t| TrajMeta {
                    t0: t.t0,
                    source_ic: t.source_ic.clone(),
                })
                .collect()
        };
        let meta = Meta {
            format_version: FORMAT_VERSION,
            system: self.system.clone(),
            init_sampler: self.system.system.init_sampler().to_string(),
            norm: self.norm.clone(),
            dim: self.dim(),
            steps: self.train.first().map_or(0, Trajectory::steps),
            train: metas(&self.train),
            val: metas(&self.val),
            test: metas(&self.test),
            skew: self.skew.clone(),
            fingerprint: self.fingerprint(),
        };
        let meta_path = dir.join("meta.json");
        let json = serde_json::to_string_pretty(&meta).map_err(|e| io(&meta_path, e))?;
        fs::write(&meta_path, json).map_err(|e| io(&meta_path, e))?;
        for split in Split::ALL {
            let p = dir.join(format!("{}.f64le", split.name()));
            fs::write(&p, split_bytes(self.split(split))).map_err(|e| io(&p, e))?;
        }
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self, DynError> {
        let dir = dir.as_ref();
        let meta_path = dir.join("meta.json");
        let text = fs::read_to_string(&meta_path).map_err(|e| io(&meta_path, e))?;
        let meta: Meta = serde_json::from_str(&text).map_err(|e| io(&meta_path, e))?;
        if meta.format_version != FORMAT_VERSION {
            return Err(io(
                &meta_path,
                format!("unsupported format_version {}", meta.format_version),
            ));
        }
        let read_split = |split: Split, metas: &[TrajMeta]| -> Result<Vec<Trajectory>, DynError> {
            let p = dir.join(format!("{}.f64le", split.name()));
            let bytes = fs::read(&p).map_err(|e| io(&p, e))?;
            let per = meta.steps * meta.dim * 8;
            if bytes.len() != per * metas.len() {
                return Err(io(
                    &p,
                    format!(
                        "expected {} bytes, found {}",
                        per * metas.len(),
                        bytes.len()
                    ),
                ));
            }
            Ok(bytes
                .chunks(per)
                .zip(metas)
                .map(|(chunk, m)| {
                    let data = chunk
                        .chunks_exact(8)
                        .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                        .collect();
                    Trajectory::from_flat(data, meta.dim, m.t0, meta.system.dt, m.source_ic.clone())
                })
                .collect())
        };
        let set = TrajectorySet {
            train: read_split(Split::Train, &meta.train)?,
            val: read_split(Split::Val, &meta.val)?,
            test: read_split(Split::Test, &meta.test)?,
            system: meta.system,
            norm: meta.norm,
            skew: meta.skew,
        };
        if set.fingerprint() != meta.fingerprint {
            return Err(io(
                &meta_path,
                "fingerprint mismatch; data files do not match meta.json",
            ));
        }
        Ok(set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynsys::{generate_dataset, SystemId};

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let set =
            generate_dataset(&SystemSpec::new(SystemId::RandomSkew, 9).with_shape(1, 120)).unwrap();
        set.save(dir.path()).unwrap();
        let back = TrajectorySet::load(dir.path()).unwrap();
        assert_eq!(set, back);
    }

    #[test]
    fn tampered_data_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let set = generate_dataset(&SystemSpec::new(SystemId::Hopf, 2).with_shape(1, 50)).unwrap();
        set.save(dir.path()).unwrap();
        let p = dir.path().join("val.f64le");
        let mut bytes = fs::read(&p).unwrap();
        bytes[3] ^= 0x40;
        fs::write(&p, bytes).unwrap();
        assert!(TrajectorySet::load(dir.path()).is_err());
    }
}
