use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid lattice dimensions {columns}x{rows}: both must be at least 1")]
    InvalidLattice { columns: usize, rows: usize },

    #[error("invalid parameter `{key}`: {reason}")]
    InvalidParameter { key: String, reason: String },

    #[error("length mismatch: expected {expected} entries, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("configuration is not a minimum: generalized eigenvalue {eigenvalue:.3e} below tolerance {tolerance:.3e}")]
    NotAMinimum { eigenvalue: f64, tolerance: f64 },

    #[error("singular Hessian: eigenvalue {eigenvalue:.3e}, near-zero mode concentrated on island {island}")]
    SingularHessian {
        eigenvalue: f64,
        island: usize,
        eigenvector: Vec<f64>,
    },

    #[error("probe frequency {nu_ghz} GHz sits on a lossless pole of the array response")]
    Pole { nu_ghz: f64 },

    #[error("flux grid must be non-empty and sorted ascending")]
    UnsortedGrid,

    #[error("ground state not converged at flux {flux}")]
    NotConverged { flux: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("fit failed: {0}")]
    FitFailed(String),

    #[error("configuration error at `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Short machine-readable tag used in CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidLattice { .. } => "invalid_lattice",
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::NotPositiveDefinite(_) => "not_positive_definite",
            Error::NotAMinimum { .. } => "not_a_minimum",
            Error::SingularHessian { .. } => "singular_hessian",
            Error::Pole { .. } => "pole",
            Error::UnsortedGrid => "unsorted_grid",
            Error::NotConverged { .. } => "not_converged",
            Error::GridMismatch(_) => "grid_mismatch",
            Error::FitFailed(_) => "fit_failed",
            Error::Config { .. } => "config",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn param(key: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            key: key.to_string(),
            reason: reason.into(),
        }
    }
}
