use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A spatial index or reference map was requested over zero points.
    #[error("empty reference cloud")]
    EmptyReferenceCloud,

    /// Registration was asked to align an empty scan.
    #[error("empty scan")]
    EmptyScan,

    /// Every candidate pair was rejected by the distance gate or trimming.
    /// Signals divergence (or a bad prior) to the caller.
    #[error("no correspondences")]
    NoCorrespondences,

    /// The alignment system is rank-deficient, e.g. all pairs lie on a
    /// single plane and some degrees of freedom are unobservable.
    #[error("degenerate geometry")]
    DegenerateGeometry,

    #[error("insufficient points for normal estimation: have {have}, need {need}")]
    InsufficientPoints { have: usize, need: usize },

    /// An operation that needs per-point surface normals got a cloud without them.
    #[error("cloud has no normals")]
    MissingNormals,

    #[error("empty trajectory")]
    EmptyTrajectory,

    /// Timestamp association between two trajectories produced zero pairs.
    #[error("no associations within the time window")]
    NoAssociations,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn param(message: impl Into<String>) -> Self {
        Error::InvalidParameter(message.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
