use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("non-finite state at step {step}")]
    NumericalBlowup { step: usize },

    #[error("no measurement available")]
    NoMeasurement,

    /// The actuator ran past the end of its active sequence, or had none.
    #[error("actuator buffer starved at time {time} (active sequence stamp {active_stamp:?})")]
    Starvation {
        time: usize,
        active_stamp: Option<usize>,
    },

    /// The prediction ledger has no planned input for a time the predictor needs.
    #[error("prediction ledger has no input for time {time}")]
    ConsistencyHole { time: usize },

    #[error("stage cost singular: |(x1, x3)| = {radius:e} below guard")]
    Singularity { radius: f64 },

    #[error("sequence generation failed at time {time}: {reason}")]
    Generation { time: usize, reason: String },

    /// A control sequence reached the actuator after the time it was stamped for.
    #[error("packet stamped {stamp} delivered late at {delivered}")]
    LateDelivery { stamp: usize, delivered: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
