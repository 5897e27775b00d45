use std::fmt;

use serde::{Deserialize, Serialize};

use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Mlp,
    Rnn,
    ARnn,
    Transformer,
    Esn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropagatorKind {
    Identity,
    Koopman,
    Node,
}

/// Architecture, optimization protocol and seed of one forecaster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForecasterSpec {
    pub family: Family,
    pub propagator: PropagatorKind,
    /// Input window length `L`.
    pub input_len: usize,
    /// Forecast horizon `H`.
    pub horizon: usize,
    /// Latent dimension `k` (ignored by the ESN, whose latent is its reservoir).
    pub latent_dim: usize,
    /// Observation dimension `d`; filled from the dataset.
    pub dim: usize,
    pub width: usize,
    pub depth: usize,
    pub d_model: usize,
    pub heads: usize,
    pub layers: usize,
    pub reservoir_size: usize,
    pub reservoir_density: f64,
    pub spectral_radius: f64,
    pub input_scale: f64,
    pub ridge_lambda: f64,
    /// Latent step of the NODE propagator; filled from the dataset `dt`.
    pub dt: f64,
    /// RK4 steps of the NODE propagator over `[0, H·dt]`; 0 means `H`.
    pub node_steps: usize,
    pub koopman_init_noise: f64,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_decay: f64,
    pub epochs: usize,
    pub patience: usize,
    pub train_stride: usize,
    pub eval_stride: usize,
    /// A-RNN only: feed ground truth to the decoder during training.
    pub teacher_forcing: bool,
    pub seed: u64,
    /// Recorded for audit; only `glorot_uniform` is implemented.
    pub init: String,
    /// Recorded for audit; gradients are never clipped.
    pub grad_clip: Option<f64>,
    /// How the latent seeds the recurrent decoder; only `hidden_init` is implemented.
    pub rnn_decoder_conditioning: String,
}

impl Default for ForecasterSpec {
    fn default() -> Self {
        Self {
            family: Family::Mlp,
            propagator: PropagatorKind::Identity,
            input_len: 20,
            horizon: 50,
            latent_dim: 32,
            dim: 0,
            width: 64,
            depth: 2,
            d_model: 64,
            heads: 2,
            layers: 2,
            reservoir_size: 256,
            reservoir_density: 0.05,
            spectral_radius: 0.9,
            input_scale: 2.0,
            ridge_lambda: 0.1,
            dt: 0.01,
            node_steps: 0,
            koopman_init_noise: 0.01,
            batch_size: 64,
            lr: 1e-3,
            lr_decay: 0.95,
            epochs: 100,
            patience: 20,
            train_stride: 1,
            eval_stride: 1,
            teacher_forcing: true,
            seed: 0,
            init: "glorot_uniform".into(),
            grad_clip: None,
            rnn_decoder_conditioning: "hidden_init".into(),
        }
    }
}

impl ForecasterSpec {
    pub fn new(family: Family, propagator: PropagatorKind) -> Self {
        Self {
            family,
            propagator,
            ..Self::default()
        }
    }

    /// Parses grid labels such as `MLP`, `K-MLP`, `N-TF`, `A-RNN`, `ESN`.
    pub fn from_label(label: &str) -> Result<Self, ModelError> {
        let upper = label.trim().to_ascii_uppercase();
        let (prop, base) = match upper.split_once('-') {
            Some(("K", rest)) => (PropagatorKind::Koopman, rest.to_string()),
            Some(("N", rest)) => (PropagatorKind::Node, rest.to_string()),
            Some(("A", "RNN")) => (PropagatorKind::Identity, "A-RNN".to_string()),
            _ => (PropagatorKind::Identity, upper.clone()),
        };
        let family = match base.as_str() {
            "MLP" => Family::Mlp,
            "RNN" => Family::Rnn,
            "A-RNN" => Family::ARnn,
            "TF" | "TRANSFORMER" => Family::Transformer,
            "ESN" => Family::Esn,
            _ => {
                return Err(ModelError::InvalidSpec(format!(
                    "unknown model label {label:?}"
                )))
            }
        };
        let spec = Self::new(family, prop);
        spec.check_pairing()?;
        Ok(spec)
    }

    /// Short grid label, e.g. `K-MLP`.
    pub fn label(&self) -> String {
        let base = match self.family {
            Family::Mlp => "MLP",
            Family::Rnn => "RNN",
            Family::ARnn => "A-RNN",
            Family::Transformer => "TF",
            Family::Esn => "ESN",
        };
        match self.propagator {
            PropagatorKind::Identity => base.to_string(),
            PropagatorKind::Koopman => format!("K-{base}"),
            PropagatorKind::Node => format!("N-{base}"),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Latent size as seen by alignment (the reservoir size for the ESN).
    pub fn code_dim(&self) -> usize {
        match self.family {
            Family::Esn => self.reservoir_size,
            _ => self.latent_dim,
        }
    }

    pub fn node_steps(&self) -> usize {
        if self.node_steps == 0 {
            self.horizon
        } else {
            self.node_steps
        }
    }

    fn check_pairing(&self) -> Result<(), ModelError> {
        if self.family == Family::Esn && self.propagator != PropagatorKind::Identity {
            return Err(ModelError::InvalidSpec(
                "the ESN pairs only with the identity propagator".into(),
            ));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.check_pairing()?;
        let bad = |msg: &str| Err(ModelError::InvalidSpec(msg.to_string()));
        if self.latent_dim == 0 || self.horizon == 0 || self.input_len == 0 {
            return bad("latent_dim, horizon and input_len must be >= 1");
        }
        if self.dim == 0 {
            return bad("observation dim is unset");
        }
        if self.family == Family::Transformer && (self.heads == 0 || !self.d_model.is_multiple_of(self.heads))
        {
            return bad("d_model must be a positive multiple of heads");
        }
        if self.family == Family::Esn && !(self.ridge_lambda >= 0.0) {
            return bad("ridge_lambda must be >= 0");
        }
        if self.batch_size == 0 || self.train_stride == 0 || self.eval_stride == 0 {
            return bad("batch_size and strides must be >= 1");
        }
        if !(self.lr > 0.0) {
            return bad("lr must be positive");
        }
        if self.propagator == PropagatorKind::Node && !(self.dt > 0.0) {
            return bad("NODE propagator needs dt > 0");
        }
        Ok(())
    }
}

impl fmt::Display for ForecasterSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.label(), self.seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_round_trip() {
        for label in [
            "MLP", "K-MLP", "N-MLP", "RNN", "A-RNN", "K-RNN", "N-RNN", "TF", "K-TF", "N-TF", "ESN",
        ] {
            assert_eq!(ForecasterSpec::from_label(label).unwrap().label(), label);
        }
    }

    #[test]
    fn esn_rejects_learned_propagators() {
        assert!(ForecasterSpec::from_label("K-ESN").is_err());
        let mut s = ForecasterSpec::new(Family::Esn, PropagatorKind::Node);
        s.dim = 3;
        assert!(s.validate().is_err());
    }
}
