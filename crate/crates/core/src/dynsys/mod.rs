//! Benchmark dynamical systems: integration, dataset generation,
//! normalization, windowing, and persistence.

mod dataset;
pub mod integrate;
mod pod;
mod skew;
mod store;
mod systems;

pub use dataset::{
    generate_dataset, integrate, iterate_map, make_windows, skew_rejected, window_starts,
    NormalizationStats, Split, SplitWindows, Trajectory, TrajectorySet, Window, WindowRef,
};
pub use integrate::Tolerances;
pub use pod::{load_pod, load_pod_with, parse_table, pod_dataset};
pub use skew::{sample_skew_product, Founder, SkewProduct};
pub use store::FORMAT_VERSION;
pub use systems::{step_map, DoublePendulum, Hopf, LimitCyclePolar, Lorenz, SystemId, SystemSpec};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynError {
    #[error("non-finite state near t = {t}")]
    NonFiniteState { t: f64 },
    #[error("adaptive step fell to {h:e} at t = {t}")]
    StepSizeUnderflow { t: f64, h: f64 },
    #[error("logistic map argument {0} outside (0, 1)")]
    Domain(f64),
    #[error("{system} needs parameter `{name}`")]
    MissingParam { system: SystemId, name: String },
    #[error("invalid system spec: {0}")]
    InvalidSpec(String),
    #[error("trajectory {traj} failed generation twice")]
    GenerationFailed { traj: usize },
    #[error("train channel {channel} has std {std:e}")]
    DegenerateChannel { channel: usize, std: f64 },
    #[error("parse error at line {line}, column {column}: {msg}")]
    Parse {
        line: usize,
        column: usize,
        msg: String,
    },
    #[error("shape error: {0}")]
    Shape(String),
    #[error("io: {0}")]
    Io(String),
}
