use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid geometry{}: {reason}", region.as_ref().map(|r| format!(" in region `{r}`")).unwrap_or_default())]
    InvalidGeometry {
        region: Option<String>,
        reason: String,
    },

    #[error("boundary model for region `{region}`: {reason}")]
    BoundaryModel { region: String, reason: String },

    #[error("invalid covariance parameters: {0}")]
    InvalidCovariance(String),

    /// More than the tolerated share of spectral mass was negative in the circulant embedding.
    #[error(
        "circulant embedding lost {fraction:.4} of its spectral mass to negative eigenvalues \
         ({count} truncated); enlarge the grid extension or use a tighter prior on the range"
    )]
    SpectralTruncation { fraction: f64, count: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("degenerate autoregressive prior: {0}")]
    DegenerateAr(String),

    #[error("sampling effort: {0}")]
    Effort(String),

    #[error("region `{region}` reports {total} events at time {time} but has no allocation mass")]
    NoAllocationMass {
        region: String,
        time: usize,
        total: u64,
    },

    #[error("non-finite log target at cell {cell} (time {time})")]
    NonFinite { cell: usize, time: usize },

    #[error("invalid model specification: {0}")]
    InvalidModel(String),

    #[error("invalid sampler configuration: {0}")]
    InvalidConfig(String),

    #[error("empty chain: {0}")]
    EmptyChain(String),

    #[error("{0}")]
    Validation(String),

    #[error("parse error in {path}: {reason}")]
    Parse { path: String, reason: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn geometry(reason: impl Into<String>) -> Self {
        Error::InvalidGeometry {
            region: None,
            reason: reason.into(),
        }
    }

    pub(crate) fn with_region(self, id: &str) -> Self {
        match self {
            Error::InvalidGeometry { reason, .. } => Error::InvalidGeometry {
                region: Some(id.to_string()),
                reason,
            },
            other => other,
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// True for errors caused by malformed user input rather than by the numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidGrid(_)
                | Error::InvalidGeometry { .. }
                | Error::BoundaryModel { .. }
                | Error::Effort(_)
                | Error::InvalidModel(_)
                | Error::InvalidConfig(_)
                | Error::Validation(_)
                | Error::Parse { .. }
                | Error::DimensionMismatch(_)
        )
    }

    /// Short machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidGrid(_) => "invalid_grid",
            Error::InvalidGeometry { .. } => "invalid_geometry",
            Error::BoundaryModel { .. } => "boundary_model",
            Error::InvalidCovariance(_) => "invalid_covariance",
            Error::SpectralTruncation { .. } => "spectral_truncation",
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::DegenerateAr(_) => "degenerate_ar",
            Error::Effort(_) => "effort",
            Error::NoAllocationMass { .. } => "no_allocation_mass",
            Error::NonFinite { .. } => "non_finite",
            Error::InvalidModel(_) => "invalid_model",
            Error::InvalidConfig(_) => "invalid_config",
            Error::EmptyChain(_) => "empty_chain",
            Error::Validation(_) => "validation",
            Error::Parse { .. } => "parse",
            Error::Checkpoint(_) => "checkpoint",
            Error::Io { .. } => "io",
        }
    }
}
