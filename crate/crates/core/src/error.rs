use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid covariance spec: {0}")]
    InvalidSpec(&'static str),
    #[error("mode ({k1}, {k2}) outside truncation kmax = {kmax}")]
    ModeOutOfRange { k1: usize, k2: usize, kmax: usize },
    #[error("fields built on different covariance specs")]
    IncompatibleSpecs,
    #[error("grid with n = {n} cannot resolve kmax = {kmax} (need n >= 2 kmax)")]
    UnderResolved { n: usize, kmax: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("ensemble needs at least two members, got {0}")]
    EnsembleTooSmall(usize),
    #[error("forward evaluations are not cached on this ensemble")]
    MissingForwardCache,
    #[error("numerically singular system in {0}")]
    SingularSystem(&'static str),
    #[error("slowness must be strictly positive (found {0} at node {1})")]
    NonPositiveSlowness(f64, usize),
    #[error("permeability must be strictly positive (found {0} at node {1})")]
    NonPositivePermeability(f64, usize),
    #[error("conjugate gradients stopped after {iterations} iterations at relative residual {residual:e}")]
    CgNotConverged { iterations: usize, residual: f64 },
    #[error("operation requires a linear forward model")]
    NonlinearModel,
    #[error("initial ensemble spans a degenerate subspace")]
    DegenerateSpan,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = core::result::Result<T, Error>;
