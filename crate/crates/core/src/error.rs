use thiserror::Error;

/// Errors raised anywhere in the core library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("degenerate vector: {0}")]
    Degenerate(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("alignment error: {0}")]
    Alignment(String),
    #[error("taxonomy error: unknown label {0:?}")]
    Taxonomy(String),
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },
    #[error("dimension conflict: {0}")]
    DimensionConflict(String),
    #[error("sampling error: {0}")]
    Sampling(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("compatibility error: {0}")]
    Compatibility(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("lookup error: unknown id {0:?}")]
    Lookup(String),
    /// `batch` is 1-based; 0 means the validation pass.
    #[error("training aborted: non-finite {component} loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        component: String,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err(msg: impl Into<String>) -> Error {
    Error::Shape(msg.into())
}

impl Error {
    /// Stable snake_case name of the variant, for machine-readable reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape(_) => "shape",
            Error::Parameter(_) => "parameter",
            Error::Degenerate(_) => "degenerate",
            Error::Numerical(_) => "numerical",
            Error::Alignment(_) => "alignment",
            Error::Taxonomy(_) => "taxonomy",
            Error::Format { .. } => "format",
            Error::DimensionConflict(_) => "dimension_conflict",
            Error::Sampling(_) => "sampling",
            Error::Config(_) => "config",
            Error::Compatibility(_) => "compatibility",
            Error::Protocol(_) => "protocol",
            Error::Lookup(_) => "lookup",
            Error::NonFiniteLoss { .. } => "non_finite_loss",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
