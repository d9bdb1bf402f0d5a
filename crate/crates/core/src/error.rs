use std::path::PathBuf;

use thiserror::Error;

/// Coarse classification used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Numerical,
}

impl ErrorCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::Config => "config",
            ErrorCategory::Data => "data",
            ErrorCategory::Numerical => "numerical",
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Config => 2,
            ErrorCategory::Data => 3,
            ErrorCategory::Numerical => 4,
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    // geometry
    #[error("pixel ({0}, {1}) ray is parallel to the wall")]
    RayParallelToWall(usize, usize),
    #[error("pixel ({0}, {1}) hits the wall behind the camera")]
    BehindCamera(usize, usize),
    #[error("degenerate point set: {0}")]
    DegeneratePointSet(String),
    #[error("rotation is not a proper orthonormal matrix")]
    InvalidRotation,

    // lct
    #[error("target extent maps outside the histogram time window: {0}")]
    ExtentMismatch(String),
    #[error("depth grid includes u <= 0 where the 1/(2 sqrt(u)) factor is singular")]
    SingularDepth,
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    // simulator
    #[error("object point at z = {0} is not in front of the wall")]
    ObjectBehindWall(f64),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    // particle filter
    #[error("bounds have {bounds} axes but the state has {dim}")]
    BoundsDimensionMismatch { bounds: usize, dim: usize },
    #[error("every particle weight is zero")]
    AllZeroWeights,
    #[error("{particles} particles cannot form {clusters} clusters")]
    TooFewParticles { particles: usize, clusters: usize },

    // reconstruction
    #[error("sample cloud is empty")]
    EmptyCloud,

    // dataset
    #[error("corrupt manifest: {0}")]
    CorruptManifest(String),
    #[error("array {path} has {found} values, expected {expected}")]
    ShapeMismatch {
        path: PathBuf,
        expected: usize,
        found: usize,
    },
    #[error("missing array {0}")]
    MissingArray(PathBuf),
    #[error("content digest mismatch: manifest {expected}, data {found}")]
    DigestMismatch { expected: String, found: String },
    #[error("frame {0} is missing {1}")]
    MissingFrameData(usize, &'static str),

    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        use Error::*;
        match self {
            Config(_) | BoundsDimensionMismatch { .. } | InvalidGrid(_) | GridMismatch(_) => {
                ErrorCategory::Config
            }
            AllZeroWeights | NonFinite(_) | SingularDepth => ErrorCategory::Numerical,
            RayParallelToWall(..) | BehindCamera(..) | InvalidRotation | ExtentMismatch(_) => {
                ErrorCategory::Config
            }
            _ => ErrorCategory::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
