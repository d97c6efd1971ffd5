use thiserror::Error;

/// Errors surfaced by the solver and its diagnostics.
#[derive(Debug, Error)]
pub enum Error {
    #[error("weight {index} is not strictly positive ({value})")]
    NonPositiveWeight { index: usize, value: f64 },

    #[error("weights sum to {sum}, off by at least 1e-9 from 1")]
    WeightSumMismatch { sum: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("operation not supported in dimension {dim}: {what}")]
    UnsupportedDimension { dim: usize, what: &'static str },

    #[error("assignment problem too large: {rows}x{cols} exceeds the {limit}-atom limit")]
    LpSizeExceeded { rows: usize, cols: usize, limit: usize },

    #[error("marginals are not in convex order (violation near x = {witness})")]
    NotInConvexOrder { witness: f64 },

    #[error("target marginal has no density; second-order quantities are undefined")]
    DensityRequired,

    #[error("conditional-expectation kernel degenerate at zeta = {zeta}")]
    DegenerateKernel { zeta: f64 },

    #[error("direction must have mean zero (mean = {mean})")]
    MeanNotZero { mean: f64 },

    #[error("direction is identically zero")]
    ZeroDirection,

    #[error("states coincide; the strong-convexity ratio is undefined")]
    IdenticalStates,

    #[error("trace has {rows} usable rows, at least {required} are needed")]
    InsufficientTrace { rows: usize, required: usize },

    #[error("slice depth delta = {delta} must lie in (0, Delta = {gap})")]
    DeltaTooLarge { delta: f64, gap: f64 },

    #[error("support of mu is not contained in the interior of conv(supp nu) (gap = {gap})")]
    SupportNotInterior { gap: f64 },

    #[error("support of nu is unbounded; geometric certificates need a compact hull")]
    UnboundedSupport,

    #[error("semi-discrete dual did not converge: L1 mass residual {residual} > {tol}")]
    NoConvergence { residual: f64, tol: f64 },

    #[error("state is not stationary: gradient norm {grad_norm} > {limit}")]
    NotStationary { grad_norm: f64, limit: f64 },

    #[error("time {0} is not on the simulation grid")]
    TimeNotOnGrid(f64),

    #[error("{got} paths supplied, at least {required} are needed")]
    TooFewPaths { got: usize, required: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
