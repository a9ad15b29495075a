use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("zero extent")]
    ZeroExtent,

    #[error("voxelization produced empty model")]
    EmptyModel,

    #[error("resolution ≥ 8 required, got {0}")]
    ResolutionTooSmall(u32),

    #[error("no boundary")]
    NoBoundary,

    #[error("grid too small")]
    GridTooSmall,

    #[error("resolution mismatch: {0} vs {1}")]
    ResolutionMismatch(u32, u32),

    #[error("undefined CD: empty surface")]
    EmptySurface,

    #[error("numeric overflow")]
    NumericOverflow,

    #[error("training diverged at epoch {epoch}; parameters rolled back to last finite state")]
    Divergence { epoch: usize },

    #[error("length mismatch: {0} predictions vs {1} labels")]
    LengthMismatch(usize, usize),

    #[error("invalid architecture: {0}")]
    InvalidArch(String),

    #[error("parse error in {path}: {msg}")]
    Parse { path: String, msg: String },

    #[error("bad file format: {0}")]
    Format(String),

    #[error("no candidates")]
    NoCandidates,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable tag, used by the CLI's error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::ZeroExtent => "zero_extent",
            Error::EmptyModel => "empty_model",
            Error::ResolutionTooSmall(_) => "resolution_too_small",
            Error::NoBoundary => "no_boundary",
            Error::GridTooSmall => "grid_too_small",
            Error::ResolutionMismatch(_, _) => "resolution_mismatch",
            Error::EmptySurface => "empty_surface",
            Error::NumericOverflow => "numeric_overflow",
            Error::Divergence { .. } => "divergence",
            Error::LengthMismatch(_, _) => "length_mismatch",
            Error::InvalidArch(_) => "invalid_arch",
            Error::Parse { .. } => "parse",
            Error::Format(_) => "format",
            Error::NoCandidates => "no_candidates",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
