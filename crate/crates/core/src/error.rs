use thiserror::Error;

/// Errors raised anywhere in the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("matrix is not Hermitian (residual {residual:.3e})")]
    NotHermitian { residual: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("local state {index} is not normalized (norm {norm:.6})")]
    Normalization { index: usize, norm: f64 },

    #[error("gate error: {0}")]
    Gate(String),

    #[error("site index {site} out of range for {len} sites")]
    Index { site: usize, len: usize },

    #[error("state has zero norm")]
    DegenerateState,

    #[error("bond weights are stale; canonicalize the state first")]
    StaleGauge,

    #[error("entanglement metric undefined: {0}")]
    MetricUndefined(String),

    #[error("recovery denominator vanished (trace {0:.3e})")]
    RecoveryDegenerate(f64),

    #[error("evolution diverged at step {step}: {reason}")]
    Divergence { step: usize, reason: String },

    #[error("dense instance too large: {0}")]
    InstanceTooLarge(String),

    #[error("LAPACK failure: {0}")]
    Lapack(#[from] ndarray_linalg::error::LinalgError),
}

pub type Result<T> = std::result::Result<T, Error>;
