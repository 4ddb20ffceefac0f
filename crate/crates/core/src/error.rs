use std::path::PathBuf;

/// Errors produced anywhere in the synthesis pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("image error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("invalid field `{field}`: {reason}")]
    InvalidField { field: String, reason: String },

    #[error("length mismatch in `{field}`: expected {expected}, found {found}")]
    LengthMismatch {
        field: String,
        expected: usize,
        found: usize,
    },

    #[error("phrase `{phrase}` not found in `{field}`")]
    PhraseNotFound { field: String, phrase: String },

    #[error("non-positive dimension for asset `{0}`")]
    NonPositiveDimension(String),

    #[error("duplicate asset name `{0}`")]
    DuplicateAsset(String),

    #[error("point is behind the camera (z = {z})")]
    BehindCamera { z: f64 },

    #[error("non-positive depth {0}")]
    NonPositiveDepth(f64),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("too few points: need at least {needed}, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("depth for frame 1 unavailable")]
    DepthUnavailable,

    #[error("table mask unavailable")]
    TableMaskUnavailable,

    #[error("no grasp window in gripper sequence")]
    NoGraspWindow,

    #[error("grasp point ({x:.4}, {y:.4}, {z:.4}) outside workspace bounds")]
    OutsideWorkspace { x: f64, y: f64, z: f64 },

    #[error("placement collision: container covers {overlap:.3} of the object footprint")]
    PlacementCollision { overlap: f64 },

    #[error("needs ≥ 2 views, got {0}")]
    NotEnoughViews(usize),

    #[error("undefined score: {0}")]
    UndefinedScore(String),

    #[error("empty asset catalog")]
    EmptyCatalog,

    #[error("dangling path {0}")]
    DanglingPath(PathBuf),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("adapter failed: {0}")]
    Adapter(String),

    #[error("empty dataset at {0}")]
    EmptyDataset(PathBuf),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidField {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
