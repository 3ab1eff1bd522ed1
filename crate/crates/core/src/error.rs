use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid pose: {0}")]
    InvalidPose(String),
    #[error("invalid skeleton: {0}")]
    InvalidSkeleton(String),
    #[error("invalid variance vector: {0}")]
    InvalidVariance(String),
    #[error("joint count mismatch: expected {expected}, found {found}")]
    JointCountMismatch { expected: usize, found: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("hypothesis set is empty")]
    EmptyHypothesisSet,
    #[error("configuration error: {0}")]
    Config(String),
    #[error("projection error: joint {joint} has depth {depth} mm in front of the camera")]
    Projection { joint: usize, depth: f64 },
    #[error("dataset error in {path}: {reason}")]
    Dataset { path: PathBuf, reason: String },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("parameter update rejected: network is frozen")]
    Frozen,
    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("degenerate pseudo-labels: normalization constant {0:e} mm is below 1e-12")]
    DegenerateLabels(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("alignment error: {0}")]
    Alignment(String),
    #[error("missing result cells: {0}")]
    MissingCells(String),
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn dataset(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Dataset {
            path: path.into(),
            reason: reason.into(),
        }
    }

    /// Tags the error with the pipeline stage it came from, once.
    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }
}
