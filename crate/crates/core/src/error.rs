use std::path::PathBuf;

/// Errors raised across the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{what}: argument {value} is outside the domain ({expected})")]
    Domain {
        what: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error(
        "dimension d = {0} is not supported: the process is transient (and its Green function finite) only for d >= 3"
    )]
    Dimension(u32),

    #[error(
        "Laplace inversion did not converge at t = {t}: estimates {coarse} ({coarse_nodes} nodes) and {fine} ({fine_nodes} nodes) differ by more than {accuracy}"
    )]
    InversionFailure {
        t: f64,
        coarse: f64,
        fine: f64,
        coarse_nodes: usize,
        fine_nodes: usize,
        accuracy: f64,
    },

    #[error("consistency check failed for {what}: {detail}")]
    Consistency { what: String, detail: String },

    #[error("{what}: argument {value} outside the supported range [{min}, {max}]")]
    Range {
        what: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("quadrature did not reach tolerance {tolerance} ({intervals} intervals, error estimate {estimate})")]
    Quadrature {
        tolerance: f64,
        intervals: usize,
        estimate: f64,
    },

    #[error("capacity solver failed: {0}")]
    Capacity(String),

    #[error("table file {path}: {detail}")]
    TableIntegrity { path: PathBuf, detail: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
