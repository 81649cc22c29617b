use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid rate function: {0}")]
    InvalidRate(String),
    #[error("series diverges at fugacity {zeta} (radius of convergence {zeta_star})")]
    Divergence { zeta: f64, zeta_star: f64 },
    #[error("density {rho} outside tabulated range [0, {max}]")]
    OutOfRange { rho: f64, max: f64 },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("window/profile mismatch: {0}")]
    WindowMismatch(String),
    #[error("window leakage: {exited} particles left the window (limit {limit:.3})")]
    Leakage { exited: u64, limit: f64 },
    #[error("window leakage: density {deviation:.3e} reached the window edge (limit {limit:.3e})")]
    EdgeDensity { deviation: f64, limit: f64 },
    #[error("event budget of {0} events exhausted")]
    EventBudget(u64),
    #[error("rate function is not monotone at occupation {0}")]
    NonMonotone(u32),
    #[error("negative fugacity {value} at site {site}; admissible sites {admissible:?}")]
    Negativity {
        site: i64,
        value: f64,
        admissible: Option<(i64, i64)>,
    },
    #[error("inadmissible fugacity {value} at site {site} (radius of convergence {zeta_star}); admissible sites {admissible:?}")]
    InadmissibleFugacity {
        site: i64,
        value: f64,
        zeta_star: f64,
        admissible: Option<(i64, i64)>,
    },
    #[error("CFL condition violated: number {0} exceeds 0.9")]
    Cfl(f64),
    #[error("non-finite value in solver state at step {0}")]
    NotFinite(usize),
    #[error("test function support exceeds domain: {0}")]
    Support(String),
    #[error("ODE step {dt} exceeds stability bound {bound}")]
    StepBound { dt: f64, bound: f64 },
    #[error("need at least {needed} replicas, got {got}")]
    InsufficientReplicas { needed: usize, got: usize },
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
