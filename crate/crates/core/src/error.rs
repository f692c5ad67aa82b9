use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParams(&'static str),
    /// The implied first junction lies above the tail threshold.
    #[error("invalid geometry: u1 = {u1} exceeds u2 = {u2}")]
    InvalidGeometry { u1: f64, u2: f64 },
    #[error("argument outside the domain: {0}")]
    Domain(&'static str),
    #[error("non-finite value while evaluating the model")]
    NonFinite,
    #[error("degenerate mixture junction: both densities vanish")]
    DegenerateJunction,
    #[error("empty data")]
    EmptyData,
    #[error("not enough data: need at least {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("degenerate data range (max == min)")]
    DegenerateRange,
    #[error("residuals are not finite at the initial point")]
    NonFiniteResidual,
    #[error("damped normal equations could not be solved")]
    SingularNormalEquations,
    #[error("both calibration steps failed on the first iteration")]
    AllStepsFailed,
    #[error("no grid point above the tail quantile")]
    NoTailPoints,
    #[error("threshold order statistic is not positive")]
    NonPositiveThresholdStatistic,
    #[error("degenerate probability weighted moments")]
    DegenerateMoments,
    #[error("likelihood has no interior maximum on the search interval")]
    NoInteriorMaximum,
    #[error("no candidate threshold has enough exceedances")]
    NoValidCandidate,
    #[error("zero sample variance")]
    ZeroVariance,
    #[error("density is zero or non-finite at a test point")]
    NonFiniteDensity,
    #[error("{failed} of {total} replicates failed")]
    TooManyFailures { failed: usize, total: usize },
}
