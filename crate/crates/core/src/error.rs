use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("backward: {0}")]
    Backward(&'static str),

    #[error("degenerate geometry: points {first} and {second} coincide")]
    DegenerateGeometry { first: usize, second: usize },

    #[error("non-finite value at projection iteration {iteration}")]
    NonFinite { iteration: usize },

    #[error("singular projection system (condition estimate {condition:.3e})")]
    Singular { condition: f64 },

    #[error("projection failed in layer {layer}: {source}")]
    Layer {
        layer: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("relative energy drift {drift:.3e} exceeds {limit:.0e}; use a smaller step size")]
    EnergyDrift { drift: f64, limit: f64 },

    #[error("could not place {molecules} molecules without overlap after {attempts} attempts")]
    Overlap { molecules: usize, attempts: usize },

    #[error("trajectory has {available} frames, {required} required")]
    InsufficientFrames { required: usize, available: usize },

    #[error("invalid {what}: {reason}")]
    Invalid { what: &'static str, reason: String },

    #[error("config: {0}")]
    Config(String),

    #[error("missing input {}", .0.display())]
    MissingInput(PathBuf),

    #[error("refusing to overwrite {} (pass --force)", .0.display())]
    Exists(PathBuf),

    #[error("malformed file {}: {reason}", path.display())]
    Format { path: PathBuf, reason: String },

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    TrainingAborted {
        epoch: usize,
        batch: usize,
        /// Parameters from the last batch that produced a finite loss.
        last_good: Box<crate::network::NetworkParams>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            reason: reason.into(),
        }
    }
}
