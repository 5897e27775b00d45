//! Random skew products of two chaotic founders.
//!
//! A drive founder `ẋ = f_a(x)` forces a response founder
//! `ẏ = f_b(y) + ε e₁ x₁` through its first coordinate only.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::integrate::VectorField;
use super::{DynError, SystemId, SystemSpec};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Founder {
    Lorenz,
    Rossler,
    Chen,
}

impl Founder {
    pub const ALL: [Founder; 3] = [Founder::Lorenz, Founder::Rossler, Founder::Chen];

    /// Nominal parameters: (σ, ρ, β) for Lorenz, (a, b, c) otherwise.
    pub fn nominal_params(self) -> [f64; 3] {
        match self {
            Founder::Lorenz => [10.0, 28.0, 8.0 / 3.0],
            Founder::Rossler => [0.2, 0.2, 5.7],
            Founder::Chen => [35.0, 3.0, 28.0],
        }
    }

    /// Nominal initial state.
    pub fn seed_state(self) -> [f64; 3] {
        match self {
            Founder::Lorenz => [1.0, 1.0, 1.0],
            Founder::Rossler => [0.1, 0.0, 0.0],
            Founder::Chen => [-10.0, 0.0, 37.0],
        }
    }

    pub fn eval(self, p: &[f64; 3], x: &[f64], dx: &mut [f64]) {
        match self {
            Founder::Lorenz => {
                dx[0] = p[0] * (x[1] - x[0]);
                dx[1] = x[0] * (p[1] - x[2]) - x[1];
                dx[2] = x[0] * x[1] - p[2] * x[2];
            }
            Founder::Rossler => {
                dx[0] = -x[1] - x[2];
                dx[1] = x[0] + p[0] * x[1];
                dx[2] = p[1] + x[2] * (x[0] - p[2]);
            }
            Founder::Chen => {
                let (a, b, c) = (p[0], p[1], p[2]);
                dx[0] = a * (x[1] - x[0]);
                dx[1] = (c - a) * x[0] - x[0] * x[2] + c * x[1];
                dx[2] = x[0] * x[1] - b * x[2];
            }
        }
    }
}

/// A sampled skew product; doubles as its own metadata record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkewProduct {
    pub drive: Founder,
    pub response: Founder,
    pub drive_params: [f64; 3],
    pub response_params: [f64; 3],
    pub epsilon: f64,
}

impl SkewProduct {
    /// Concatenated nominal founder states `[x0; y0]`.
    pub fn seed_state(&self) -> [f64; 6] {
        let (a, b) = (self.drive.seed_state(), self.response.seed_state());
        [a[0], a[1], a[2], b[0], b[1], b[2]]
    }
}

impl VectorField for SkewProduct {
    fn dim(&self) -> usize {
        6
    }

    fn eval(&self, _t: f64, x: &[f64], dx: &mut [f64]) {
        let (xd, xr) = x.split_at(3);
        let (dd, dr) = dx.split_at_mut(3);
        self.drive.eval(&self.drive_params, xd, dd);
        self.response.eval(&self.response_params, xr, dr);
        dr[0] += self.epsilon * xd[0];
    }
}

/// Multiplies each parameter by `exp(ν)`, `ν ~ N(0, jitter²)`; signs are kept.
fn jitter_params<R: Rng>(rng: &mut R, nominal: [f64; 3], jitter: f64) -> [f64; 3] {
    let normal = Normal::new(0.0, jitter).expect("jitter std is finite and non-negative");
    nominal.map(|p| p * normal.sample(rng).exp())
}

/// Samples the dataset's skew product from `spec.seed`.
///
/// The ordered founder pair is drawn uniformly from all nine pairs (a founder
/// may drive a copy of itself).
pub fn sample_skew_product(spec: &SystemSpec) -> Result<SkewProduct, DynError> {
    if spec.system != SystemId::RandomSkew {
        return Err(DynError::InvalidSpec(format!(
            "{} is not a skew product",
            spec.system
        )));
    }
    let jitter = spec.param("jitter")?;
    let epsilon = spec.param("epsilon")?;
    if !(jitter >= 0.0 && jitter.is_finite()) {
        return Err(DynError::InvalidSpec(format!(
            "jitter must be >= 0, got {jitter}"
        )));
    }
    let mut rng = rng::stream(rng::derive(spec.seed, "skew-product"), 0);
    let drive = Founder::ALL[rng.random_range(0..3)];
    let response = Founder::ALL[rng.random_range(0..3)];
    Ok(SkewProduct {
        drive,
        response,
        drive_params: jitter_params(&mut rng, drive.nominal_params(), jitter),
        response_params: jitter_params(&mut rng, response.nominal_params(), jitter),
        epsilon,
    })
}
