use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid model parameters: {0}")]
    InvalidParams(String),

    #[error("site {site} needs both neighbours inside a window of {len} sites")]
    BoundaryAccess { site: usize, len: usize },

    #[error("window of {0} sites is too short, need at least 2")]
    WindowTooShort(usize),

    #[error("site {site} outside window 0..{len}")]
    SiteOutOfWindow { site: i64, len: usize },

    #[error("operators act on different grids")]
    GridMismatch,

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("evolution inverse is ill-conditioned (residual {residual:e}, condition {condition:e})")]
    IllConditioned { residual: f64, condition: f64 },

    #[error("grid spacing {spacing} does not resolve the kernel width {width} (coupling {coupling:.3})")]
    CouplingViolated { spacing: f64, width: f64, coupling: f64 },

    #[error("state is not strictly positive / non-zero: {0}")]
    InvalidState(String),

    #[error("states are not co-located: {0} vs {1}")]
    SiteMismatch(usize, usize),

    #[error("vanishing normalization {{psi|psi}} = {0:e}")]
    ZeroNorm(f64),

    #[error("observable support {lo}..={hi} is not inside the window 0..{len}")]
    SupportViolation { lo: i64, hi: i64, len: usize },

    #[error("monomial outside the supported operator basis: {0}")]
    UnsupportedBasis(String),

    #[error("{configs} configurations exceed the enumeration budget of {budget}")]
    BudgetExceeded { configs: f64, budget: f64 },

    #[error("exterior fixture is invalid: induced boundary states differ by {0:e}")]
    InvalidFixture(f64),

    #[error("power iteration did not converge (residual {0:e})")]
    NoConvergence(f64),

    #[error("syntax error at column {pos}: {msg}")]
    Syntax { pos: usize, msg: String },

    #[error("{0}")]
    Other(String),
}
