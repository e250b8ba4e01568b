use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid network: {}", .0.join("; "))]
    InvalidNetwork(Vec<String>),

    #[error("reduced susceptance matrix is singular; network is numerically degenerate")]
    SingularNetwork,

    #[error("unknown bus id {0}")]
    UnknownBus(i64),

    #[error("curtailment vector invalid: {0}")]
    InvalidCurtailment(String),

    #[error("clearing infeasible: curtailment exceeds the system redispatch flexibility")]
    ClearingInfeasible,

    #[error("clearing program unbounded: malformed case")]
    ClearingUnbounded,

    #[error("malformed linear program: {0}")]
    MalformedProgram(String),

    #[error("linear program is {0:?}")]
    NotOptimal(crate::lp::LpStatus),

    #[error("simplex iteration limit reached after {0} pivots")]
    IterationLimit(usize),

    #[error("degenerate basis could not be resolved at alpha = {0}")]
    Degenerate(f64),

    #[error("network is not radial")]
    NotRadial,

    #[error("budget exceeded: {what} needs {needed}, budget is {budget}")]
    BudgetExceeded {
        what: &'static str,
        needed: f64,
        budget: f64,
    },

    #[error("market power index undefined: {0}")]
    UndefinedIndex(&'static str),

    #[error("no grid assignment satisfies the relaxed constraints (epsilon {0} too small for delta)")]
    NoRelaxedAssignment(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
