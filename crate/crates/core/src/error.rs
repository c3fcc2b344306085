use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("edge {edge}: {reason}")]
    InvalidEdge { edge: usize, reason: String },

    #[error("invalid weight on edge {edge}: {value}")]
    InvalidWeight { edge: usize, value: f64 },

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("eigensolver did not converge after {sweeps} sweeps (worst off-diagonal {worst_off_diagonal:e})")]
    NoConvergence { sweeps: usize, worst_off_diagonal: f64 },

    #[error("exponential overflow at t={t}, lambda={lambda}; tighten the t bounds")]
    ExpOverflow { t: f64, lambda: f64 },

    #[error("graphs {a} and {b}: {source}")]
    Pair {
        a: usize,
        b: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("edge-weight backward pass requires the cached forward state")]
    MissingForwardCache,

    #[error("non-finite {what} at step {step} (pair {a}, {b})")]
    NonFinite {
        what: &'static str,
        step: usize,
        a: usize,
        b: usize,
    },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("evaluation: {0}")]
    Evaluation(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
