use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("state is outside the admissible set")]
    Inadmissible,

    #[error("finite-difference probe left the finite-energy domain at coordinate {coordinate}")]
    ProbeOutsideDomain { coordinate: usize },

    /// Line search could not find an admissible point with lower value:
    /// the step is pinned against the boundary of the admissible set.
    #[error("line search exhausted against the admissible boundary")]
    DomainExhausted,

    /// The scheme hit the admissible boundary at step `(k, ell)`.
    #[error("collision at step k = {k}, window ell = {ell}")]
    Collision { k: usize, ell: usize },

    #[error("solution exceeded the blow-up bound {bound} at t = {t}")]
    BlowUp { t: f64, bound: f64 },

    #[error("time {t} is outside [0, {horizon}]")]
    OutOfRange { t: f64, horizon: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}
