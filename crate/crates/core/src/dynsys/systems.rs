use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::integrate::{Tolerances, VectorField};
use super::DynError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemId {
    Lorenz63,
    LimitCycle,
    DoublePendulum,
    Hopf,
    LogisticMap,
    PodWake,
    RandomSkew,
}

impl SystemId {
    pub const ALL: [SystemId; 7] = [
        SystemId::Lorenz63,
        SystemId::LimitCycle,
        SystemId::DoublePendulum,
        SystemId::Hopf,
        SystemId::LogisticMap,
        SystemId::PodWake,
        SystemId::RandomSkew,
    ];

    /// State dimension `d`.
    pub fn dim(self) -> usize {
        match self {
            SystemId::Lorenz63 => 3,
            SystemId::LimitCycle => 2,
            SystemId::DoublePendulum => 4,
            SystemId::Hopf => 2,
            SystemId::LogisticMap => 1,
            SystemId::PodWake => 3,
            SystemId::RandomSkew => 6,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SystemId::Lorenz63 => "lorenz63",
            SystemId::LimitCycle => "limit_cycle",
            SystemId::DoublePendulum => "double_pendulum",
            SystemId::Hopf => "hopf",
            SystemId::LogisticMap => "logistic_map",
            SystemId::PodWake => "pod_wake",
            SystemId::RandomSkew => "random_skew",
        }
    }

    pub fn parse(s: &str) -> Option<SystemId> {
        let s = s.to_ascii_lowercase().replace('-', "_");
        let id = match s.as_str() {
            "lorenz" | "lorenz63" => SystemId::Lorenz63,
            "limit_cycle" => SystemId::LimitCycle,
            "double_pendulum" => SystemId::DoublePendulum,
            "hopf" => SystemId::Hopf,
            "logistic" | "logistic_map" => SystemId::LogisticMap,
            "pod" | "pod_wake" => SystemId::PodWake,
            "skew" | "random_skew" => SystemId::RandomSkew,
            _ => return None,
        };
        Some(id)
    }

    pub fn is_continuous(self) -> bool {
        !matches!(self, SystemId::LogisticMap | SystemId::PodWake)
    }

    /// Required parameters and their defaults.
    pub fn default_params(self) -> &'static [(&'static str, f64)] {
        match self {
            SystemId::Lorenz63 => &[("sigma", 10.0), ("rho", 28.0), ("beta", 8.0 / 3.0)],
            SystemId::LimitCycle => &[("mu", 1.0), ("R", 1.0), ("omega", 1.0)],
            SystemId::DoublePendulum => &[("g", 9.81)],
            SystemId::Hopf => &[("mu", 0.0), ("omega", 1.0)],
            SystemId::LogisticMap => &[("r", 3.57)],
            SystemId::PodWake => &[],
            SystemId::RandomSkew => &[
                ("epsilon", 0.05),
                ("jitter", 0.15),
                ("ic_noise", 0.1),
                ("warmup", 0.1),
            ],
        }
    }

    pub fn default_dt(self) -> f64 {
        match self {
            SystemId::LogisticMap => 0.1,
            SystemId::PodWake => 0.2,
            _ => 0.01,
        }
    }

    pub fn tolerances(self) -> Tolerances {
        match self {
            SystemId::RandomSkew => Tolerances {
                atol: 1e-8,
                rtol: 1e-6,
            },
            _ => Tolerances::default(),
        }
    }

    /// Human-readable initial-condition distribution.
    pub fn init_sampler(self) -> &'static str {
        match self {
            SystemId::Lorenz63 => "uniform [-20,20]^3",
            SystemId::LimitCycle => "r0 ~ U[0,20], theta0 ~ U[0,2pi]",
            SystemId::DoublePendulum => "angles U[-20deg,20deg], angular velocities U[-1,1]",
            SystemId::Hopf => "uniform [-2,2]^2",
            SystemId::LogisticMap => "U(0,1)",
            SystemId::PodWake => "consecutive file snapshots",
            SystemId::RandomSkew => "founder seeds + N(0, ic_noise^2)",
        }
    }
}

impl fmt::Display for SystemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Everything needed to regenerate a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub system: SystemId,
    pub params: BTreeMap<String, f64>,
    pub dt: f64,
    /// Samples per trajectory (`T`).
    pub steps: usize,
    /// Trajectories per split.
    pub n_traj: usize,
    pub seed: u64,
}

impl SystemSpec {
    /// Defaults: 10 trajectories per split, 500 steps, the system's own `dt` and parameters.
    pub fn new(system: SystemId, seed: u64) -> Self {
        let params = system
            .default_params()
            .iter()
            .map(|(k, v)| (k.to_string(), *v))
            .collect();
        Self {
            system,
            params,
            dt: system.default_dt(),
            steps: 500,
            n_traj: 10,
            seed,
        }
    }

    pub fn with_shape(mut self, n_traj: usize, steps: usize) -> Self {
        self.n_traj = n_traj;
        self.steps = steps;
        self
    }

    pub fn with_param(mut self, name: &str, value: f64) -> Self {
        self.params.insert(name.to_string(), value);
        self
    }

    pub fn dim(&self) -> usize {
        self.system.dim()
    }

    pub fn param(&self, name: &str) -> Result<f64, DynError> {
        self.params
            .get(name)
            .copied()
            .ok_or_else(|| DynError::MissingParam {
                system: self.system,
                name: name.to_string(),
            })
    }

    pub fn validate(&self) -> Result<(), DynError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(DynError::InvalidSpec(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if self.steps < 2 {
            return Err(DynError::InvalidSpec(format!(
                "steps must be >= 2, got {}",
                self.steps
            )));
        }
        if self.n_traj < 1 {
            return Err(DynError::InvalidSpec("n_traj must be >= 1".into()));
        }
        for (name, _) in self.system.default_params() {
            self.param(name)?;
        }
        Ok(())
    }

    /// Continuous vector field (for the limit cycle: in polar coordinates).
    pub(crate) fn field(&self) -> Result<Box<dyn VectorField + Send + Sync>, DynError> {
        let p = |n: &str| self.param(n);
        Ok(match self.system {
            SystemId::Lorenz63 => Box::new(Lorenz {
                sigma: p("sigma")?,
                rho: p("rho")?,
                beta: p("beta")?,
            }),
            SystemId::LimitCycle => Box::new(LimitCyclePolar {
                mu: p("mu")?,
                radius: p("R")?,
                omega: p("omega")?,
            }),
            SystemId::DoublePendulum => Box::new(DoublePendulum { g: p("g")? }),
            SystemId::Hopf => Box::new(Hopf {
                mu: p("mu")?,
                omega: p("omega")?,
            }),
            SystemId::RandomSkew => Box::new(super::skew::sample_skew_product(self)?),
            SystemId::LogisticMap | SystemId::PodWake => {
                return Err(DynError::InvalidSpec(format!(
                    "{} has no vector field",
                    self.system
                )))
            }
        })
    }

    /// Draws one initial condition in observation coordinates.
    pub(crate) fn sample_ic<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        match self.system {
            SystemId::Lorenz63 => (0..3).map(|_| rng.random_range(-20.0..=20.0)).collect(),
            SystemId::LimitCycle => {
                let r0: f64 = rng.random_range(0.0..=20.0);
                let th: f64 = rng.random_range(0.0..2.0 * PI);
                vec![r0 * th.cos(), r0 * th.sin()]
            }
            SystemId::DoublePendulum => {
                let a = 20f64.to_radians();
                vec![
                    rng.random_range(-a..=a),
                    rng.random_range(-a..=a),
                    rng.random_range(-1.0..=1.0),
                    rng.random_range(-1.0..=1.0),
                ]
            }
            SystemId::Hopf => (0..2).map(|_| rng.random_range(-2.0..=2.0)).collect(),
            SystemId::LogisticMap => loop {
                let x: f64 = rng.random();
                if x > 0.0 {
                    break vec![x];
                }
            },
            SystemId::PodWake | SystemId::RandomSkew => {
                unreachable!("initial conditions for {} are not drawn here", self.system)
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Lorenz {
    pub sigma: f64,
    pub rho: f64,
    pub beta: f64,
}

impl VectorField for Lorenz {
    fn dim(&self) -> usize {
        3
    }

    fn eval(&self, _t: f64, x: &[f64], dx: &mut [f64]) {
        dx[0] = self.sigma * (x[1] - x[0]);
        dx[1] = x[0] * (self.rho - x[2]) - x[1];
        dx[2] = x[0] * x[1] - self.beta * x[2];
    }
}

/// `ṙ = μ(R − r)`, `θ̇ = ω` on the state `(r, θ)`.
#[derive(Debug, Clone, Copy)]
pub struct LimitCyclePolar {
    pub mu: f64,
    pub radius: f64,
    pub omega: f64,
}

impl VectorField for LimitCyclePolar {
    fn dim(&self) -> usize {
        2
    }

    fn eval(&self, _t: f64, x: &[f64], dx: &mut [f64]) {
        dx[0] = self.mu * (self.radius - x[0]);
        dx[1] = self.omega;
    }
}

/// Unit masses and lengths; state `(θ1, θ2, ω1, ω2)`.
#[derive(Debug, Clone, Copy)]
pub struct DoublePendulum {
    pub g: f64,
}

impl DoublePendulum {
    /// Total mechanical energy of the unit-mass, unit-length pendulum.
    pub fn energy(&self, x: &[f64]) -> f64 {
        let (t1, t2, w1, w2) = (x[0], x[1], x[2], x[3]);
        let kinetic = w1 * w1 + 0.5 * w2 * w2 + w1 * w2 * (t1 - t2).cos();
        let potential = -2.0 * self.g * t1.cos() - self.g * t2.cos();
        kinetic + potential
    }
}

impl VectorField for DoublePendulum {
    fn dim(&self) -> usize {
        4
    }

    fn eval(&self, _t: f64, x: &[f64], dx: &mut [f64]) {
        let (t1, t2, w1, w2) = (x[0], x[1], x[2], x[3]);
        let g = self.g;
        let delta = t2 - t1;
        let (s, c) = delta.sin_cos();
        let den = 2.0 - c * c;
        dx[0] = w1;
        dx[1] = w2;
        dx[2] = (w1 * w1 * s * c + g * t2.sin() * c + w2 * w2 * s - 2.0 * g * t1.sin()) / den;
        dx[3] =
            (-w2 * w2 * s * c + 2.0 * g * t1.sin() * c - 2.0 * w1 * w1 * s - 2.0 * g * t2.sin())
                / den;
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Hopf {
    pub mu: f64,
    pub omega: f64,
}

impl VectorField for Hopf {
    fn dim(&self) -> usize {
        2
    }

    fn eval(&self, _t: f64, x: &[f64], dx: &mut [f64]) {
        let r2 = x[0] * x[0] + x[1] * x[1];
        dx[0] = self.mu * x[0] - self.omega * x[1] - r2 * x[0];
        dx[1] = self.omega * x[0] + self.mu * x[1] - r2 * x[1];
    }
}

/// One logistic-map iteration `x ↦ r·x·(1 − x)` on the open unit interval.
pub fn step_map(spec: &SystemSpec, x: f64) -> Result<f64, DynError> {
    if spec.system != SystemId::LogisticMap {
        return Err(DynError::InvalidSpec(format!(
            "{} is not a map",
            spec.system
        )));
    }
    if !(x > 0.0 && x < 1.0) {
        return Err(DynError::Domain(x));
    }
    let r = spec.param("r")?;
    Ok(r * x * (1.0 - x))
}
