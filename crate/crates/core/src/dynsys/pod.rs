//! Ingestion of precomputed POD-wake coefficient tables.
//!
//! One snapshot per line, three comma- or whitespace-separated coefficients.
//! Blank lines and lines starting with `#` are skipped.

use std::path::Path;

use super::{DynError, SystemId, SystemSpec, Trajectory, TrajectorySet};

pub const POD_CHANNELS: usize = 3;

/// Parses a delimited numeric table with exactly three columns.
pub fn parse_table(text: &str) -> Result<Vec<[f64; POD_CHANNELS]>, DynError> {
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())) {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cells: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        if cells.len() != POD_CHANNELS {
            return Err(DynError::Shape(format!(
                "line {lineno}: expected {POD_CHANNELS} channels, found {}",
                cells.len()
            )));
        }
        let mut row = [0.0; POD_CHANNELS];
        for (col, cell) in cells.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| DynError::Parse {
                line: lineno,
                column: col + 1,
                msg: format!("not a number: {cell:?}"),
            })?;
            if !v.is_finite() {
                return Err(DynError::Parse {
                    line: lineno,
                    column: col + 1,
                    msg: format!("non-finite value {cell:?}"),
                });
            }
            row[col] = v;
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(DynError::Parse {
            line: 0,
            column: 0,
            msg: "empty table".into(),
        });
    }
    Ok(rows)
}

/// Cuts a parsed table into `3 * n_traj` consecutive trajectories of
/// `steps` snapshots and z-scores them with train statistics.
pub fn pod_dataset(
    rows: &[[f64; POD_CHANNELS]],
    n_traj: usize,
    steps: usize,
    seed: u64,
) -> Result<TrajectorySet, DynError> {
    let spec = SystemSpec::new(SystemId::PodWake, seed).with_shape(n_traj, steps);
    spec.validate()?;
    let needed = 3 * n_traj * steps;
    if rows.len() < needed {
        return Err(DynError::Shape(format!(
            "POD table has {} snapshots, {needed} needed for {n_traj} trajectories per split of length {steps}",
            rows.len()
        )));
    }
    let mut trajs: Vec<Trajectory> = rows[..needed]
        .chunks(steps)
        .enumerate()
        .map(|(k, chunk)| {
            let flat: Vec<f64> = chunk.iter().flatten().copied().collect();
            let ic = chunk[0].to_vec();
            Trajectory::from_flat(
                flat,
                POD_CHANNELS,
                (k * steps) as f64 * spec.dt,
                spec.dt,
                ic,
            )
        })
        .collect();
    let test = trajs.split_off(2 * n_traj);
    let val = trajs.split_off(n_traj);
    TrajectorySet::from_raw(spec, trajs, val, test, None)
}

/// Loads a POD table with the default layout: 10 trajectories per split, 500 snapshots each.
pub fn load_pod(path: impl AsRef<Path>) -> Result<TrajectorySet, DynError> {
    load_pod_with(path, 10, 500, 0)
}

pub fn load_pod_with(
    path: impl AsRef<Path>,
    n_traj: usize,
    steps: usize,
    seed: u64,
) -> Result<TrajectorySet, DynError> {
    let text = std::fs::read_to_string(path.as_ref())
        .map_err(|e| DynError::Io(format!("{}: {e}", path.as_ref().display())))?;
    pod_dataset(&parse_table(&text)?, n_traj, steps, seed)
}
