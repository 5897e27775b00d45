use std::fmt;

use latent_atlas::dynsys::DynError;
use latent_atlas::forecasters::ModelError;
use latent_atlas::relgeom::RelError;
use latent_atlas::stitching::StitchError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    /// Bad configuration, arguments or input files.
    Invalid,
    /// Divergence, singular systems and other numeric breakdowns.
    Numeric,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub message: String,
}

impl CliError {
    pub fn invalid(message: impl Into<String>) -> Self {
        Self {
            kind: Kind::Invalid,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self.kind {
            Kind::Invalid => 1,
            Kind::Numeric => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

fn classify(numeric: bool, message: String) -> CliError {
    CliError {
        kind: if numeric {
            Kind::Numeric
        } else {
            Kind::Invalid
        },
        message,
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        classify(e.is_numeric(), e.to_string())
    }
}

impl From<DynError> for CliError {
    fn from(e: DynError) -> Self {
        ModelError::from(e).into()
    }
}

impl From<StitchError> for CliError {
    fn from(e: StitchError) -> Self {
        classify(e.is_numeric(), e.to_string())
    }
}

impl From<RelError> for CliError {
    fn from(e: RelError) -> Self {
        let numeric = matches!(e, RelError::SingularSystem);
        classify(numeric, e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::invalid(e.to_string())
    }
}

/// Prefixes errors with what was being done.
pub trait Context<T> {
    fn context(self, what: impl FnOnce() -> String) -> Result<T, CliError>;
}

impl<T, E: Into<CliError>> Context<T> for Result<T, E> {
    fn context(self, what: impl FnOnce() -> String) -> Result<T, CliError> {
        self.map_err(|e| {
            let e = e.into();
            CliError {
                kind: e.kind,
                message: format!("{}: {}", what(), e.message),
            }
        })
    }
}
