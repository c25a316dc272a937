use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A config value failed validation. `field` is the dotted config path.
    #[error("invalid config field `{field}`: {reason}")]
    Config { field: String, reason: String },

    /// Input data could not be parsed or is inconsistent.
    #[error("{}: {reason}", path.display())]
    Data { path: PathBuf, reason: String },

    #[error("checksum mismatch in {}: expected {expected}, found {found}", path.display())]
    Checksum {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("unsupported {kind} version {found} (expected {expected})")]
    Version {
        kind: &'static str,
        found: u32,
        expected: u32,
    },

    /// Vector or matrix dimensions do not agree.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// The integrator produced a non-finite state; the step size is too large.
    #[error("numerical fault in {population}[{index}] at t = {time_ms} ms: {detail}")]
    Numerical {
        population: &'static str,
        index: usize,
        time_ms: f64,
        detail: String,
    },

    #[error("excitatory population silent for {silent_patches} consecutive patches (at patch {patch_index})")]
    DeadNetwork {
        patch_index: u64,
        silent_patches: u64,
    },

    #[error("solver did not converge after {epochs} epochs (class {class}, final gap {gap:.3e})")]
    NonConvergence { class: u8, epochs: usize, gap: f64 },

    #[error("{0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn data(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Data {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
