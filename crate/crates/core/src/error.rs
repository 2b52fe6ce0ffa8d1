use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("enthalpy did not reach zero before r_max = {r_max}")]
    NoVacuumRadius { r_max: f64 },
    #[error("enthalpy derivative is non-negative at interior radius r = {r}")]
    NonMonotone { r: f64 },
    #[error("series order {requested} not supported (max {max})")]
    UnsupportedOrder { requested: usize, max: usize },
    #[error("radius {r} outside [0, {radius}]")]
    OutOfDomain { r: f64, radius: f64 },
    #[error("only {found} nodes in the fit window, need at least {required}")]
    InsufficientResolution { found: usize, required: usize },
    #[error("trial vector vanishes on the interior nodes")]
    ZeroVector,
    #[error("eigensolver did not converge: {0}")]
    ConvergenceFailure(String),
    #[error("flow map collapsed at node {node} (r = {r}, t = {t})")]
    StatePastVacuumCollapse { node: usize, r: f64, t: f64 },
    #[error("Hardy exponent a = {0} must exceed 1")]
    ExponentOutOfRange(f64),
    #[error("fit window holds {found} samples, need {required}")]
    WindowTooSmall { found: usize, required: usize },
    #[error("runs are not on the same grid and time step")]
    GridMismatch,
    #[error("gamma = {gamma} has no growing mode (mu0 = {mu0})")]
    RateUnavailable { gamma: f64, mu0: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("integration failed: {0}")]
    Integration(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit status for the CLI: 2 for configuration and I/O
    /// problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Json(_) | Error::UnsupportedOrder { .. } | Error::Io(_) => 2,
            _ => 3,
        }
    }
}
