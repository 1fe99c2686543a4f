//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid MDP: {0}")]
    InvalidMdp(String),

    #[error("MDP is not episodic: {0}")]
    NonEpisodic(String),

    #[error("singular linear system while solving {context} (non-episodic input?)")]
    SingularSystem { context: &'static str },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("operation unsupported for policy kind {0}")]
    UnsupportedKind(&'static str),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("empty probe")]
    EmptyProbe,

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("undefined ratio: denominator policy has zero mass at a probed action")]
    UndefinedRatio,

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable tag, e.g. for CLI error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidMdp(_) => "invalid_mdp",
            Error::NonEpisodic(_) => "non_episodic",
            Error::SingularSystem { .. } => "singular_system",
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::NonFinite(_) => "non_finite",
            Error::UnsupportedKind(_) => "unsupported_kind",
            Error::EmptyDataset => "empty_dataset",
            Error::EmptyProbe => "empty_probe",
            Error::DegenerateInput(_) => "degenerate_input",
            Error::UndefinedRatio => "undefined_ratio",
            Error::UndefinedCorrelation(_) => "undefined_correlation",
            Error::Domain(_) => "domain",
            Error::InvalidConfig(_) => "invalid_config",
            Error::Diverged(_) => "diverged",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
