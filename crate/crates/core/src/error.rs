use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("placement error: {0}")]
    Placement(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("relaxation did not converge after {steps} steps (kinetic energy {kinetic_energy:e} mJ)")]
    NonConvergence { steps: usize, kinetic_energy: f64 },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("data error: {0}")]
    Data(String),

    #[error("model state error: {0}")]
    State(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Argument(_) | Error::Domain(_) => 2,
            Error::Numerical(_) | Error::NonConvergence { .. } => 4,
            _ => 3,
        }
    }
}
