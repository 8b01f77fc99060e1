use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("simulation diverged at step {step}, cell {cell}: {reason}")]
    Divergence {
        step: usize,
        cell: usize,
        reason: String,
    },

    #[error("diffusion solve residual {residual:e} exceeds tolerance")]
    SolverResidual { residual: f64 },

    #[error("{diverged} of {total} trajectories diverged (budget {budget})")]
    BatchDivergence {
        diverged: usize,
        total: usize,
        budget: usize,
    },

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error("pi[{index}] = {value:e} is not strictly positive")]
    Boundary { index: usize, value: f64 },

    #[error("scaling coefficient y0 = {0:e} violates the zero-sum constraint")]
    ZeroSumViolation(f64),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("unsupported size: {0}")]
    UnsupportedSize(String),

    #[error("incompatible networks: {0}")]
    Incompatible(String),

    #[error("dense materialization needs {0} entries, above the limit")]
    TooLarge(usize),

    #[error("edge {edge}: sketch matrix is identically zero")]
    RankZero { edge: usize },

    #[error(
        "rank-deficient design at node {node}: smallest singular value {sigma_min:e} \
         (try a lower rank cap or more samples)"
    )]
    RankDeficient { node: usize, sigma_min: f64 },

    #[error("not enough samples: {0}")]
    InsufficientSamples(String),

    #[error("zero variance at site {0}")]
    ZeroVariance(usize),

    #[error("invalid density: normalization {0:e} is not positive")]
    InvalidDensity(f64),

    #[error("relative error denominator is zero")]
    ZeroDenominator,

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
