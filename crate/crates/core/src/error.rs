use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the library can report.
///
/// Variants fall into two classes (see [`Error::class`]): problems with the
/// data handed in, and numerical failures during computation. The CLI maps
/// them to distinct exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at `{field}` (line {line}, column {column}): {message}")]
    Parse {
        field: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("schema version mismatch: expected {expected}, found {found}")]
    SchemaVersion { expected: u32, found: String },
    #[error("unsupported units `{0}` (only meters are accepted)")]
    Units(String),
    #[error("model invariant violated ({check}): {detail}")]
    Invariant { check: &'static str, detail: String },
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("unknown landmark `{0}`")]
    UnknownLandmark(String),
    #[error("degenerate triangle at face {0}")]
    DegenerateTriangle(usize),
    #[error("mask selects no residuals")]
    EmptyMask,
    #[error("loss became non-finite")]
    NonFiniteLoss,
    #[error("no hypothesis reached the minimum support of {min_inliers} inliers (best {best})")]
    NoSupport { min_inliers: usize, best: usize },
    #[error("projection along the outward direction missed the surface")]
    ProjectionMiss,
    #[error("degenerate direction: {0}")]
    DegenerateDirection(&'static str),
    #[error("empty group `{0}`")]
    EmptyGroup(String),
    #[error("id mismatch: {0}")]
    IdMismatch(String),
    #[error("infeasible configuration: {0}")]
    InfeasibleConfig(String),
    #[error("missing data: {0}")]
    MissingData(String),
}

/// Coarse failure class, used for exit codes and error records.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Data,
    Numerical,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::NonFiniteLoss
            | Error::NoSupport { .. }
            | Error::ProjectionMiss
            | Error::DegenerateDirection(_)
            | Error::DegenerateTriangle(_) => ErrorClass::Numerical,
            _ => ErrorClass::Data,
        }
    }

    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::Schema(_) => "schema",
            Error::SchemaVersion { .. } => "schema_version",
            Error::Units(_) => "units",
            Error::Invariant { .. } => "invariant",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::UnknownLandmark(_) => "unknown_landmark",
            Error::DegenerateTriangle(_) => "degenerate_triangle",
            Error::EmptyMask => "empty_mask",
            Error::NonFiniteLoss => "non_finite_loss",
            Error::NoSupport { .. } => "no_support",
            Error::ProjectionMiss => "projection_miss",
            Error::DegenerateDirection(_) => "degenerate_direction",
            Error::EmptyGroup(_) => "empty_group",
            Error::IdMismatch(_) => "id_mismatch",
            Error::InfeasibleConfig(_) => "infeasible_config",
            Error::MissingData(_) => "missing_data",
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
