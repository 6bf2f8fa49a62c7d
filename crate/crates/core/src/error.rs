use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("volatility must be strictly positive, got {0}")]
    NonPositiveSigma(f64),
    #[error("discount rate must be strictly positive, got {0}")]
    NonPositiveRate(f64),
    #[error("ambiguity radius must be nonnegative, got {0}")]
    NegativeKappa(f64),
    #[error("r - mu + kappa*sigma must be positive, got {0}")]
    DegenerateRho(f64),
    #[error("parameter {name} is not finite")]
    NonFinite { name: &'static str },
    #[error("characteristic quadratic has complex roots (discriminant {0})")]
    ComplexRoots(f64),
    #[error("second hypergeometric parameter {0} is a nonpositive integer")]
    PoleInB(f64),
    #[error("no convergence in {what}: estimated relative error {est_rel_error:e}")]
    NoConvergence { what: &'static str, est_rel_error: f64 },
    #[error("argument outside domain in {what}: {value}")]
    DomainError { what: &'static str, value: f64 },
    #[error("overflow evaluating {what} at {at}")]
    Overflow { what: &'static str, at: f64 },
    #[error("root bracket not found in {what} on [{lo}, {hi}]")]
    BracketFailure { what: &'static str, lo: f64, hi: f64 },
    #[error("strike must be strictly positive, got {0}")]
    NonPositiveStrike(f64),
    #[error("two-sided floor solution with c* = {0} > 1 is not supported")]
    UnexpectedRegime(f64),
    #[error("ratio values at the two boundaries differ: {0} vs {1}")]
    NotAnEquilibrium(f64, f64),
    #[error("indicator has no sign change for kappa in [{lo}, {hi}]")]
    NoSignChange { lo: f64, hi: f64 },
    #[error("grid is empty")]
    EmptyGrid,
    #[error("invalid grid: {0}")]
    BadGrid(String),
    #[error("solution and oracle were built for different inputs")]
    MismatchedModel,
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("payoff ratio is not unimodal: {0}")]
    NotUnimodal(String),
    #[error("invalid initial state x0 = {x0}, y0 = {y0}")]
    InvalidInitialState { x0: f64, y0: f64 },
    #[error("time step too large: {flagged} of {total} steps exceeded the drift bound")]
    StepTooLarge { flagged: u64, total: u64 },
    #[error("initial state z = {0} lies in the stopping region")]
    StartInStopRegion(f64),
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
