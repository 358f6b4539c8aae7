use thiserror::Error;

/// Errors produced anywhere in the simulator and solver stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("config parse error: {0}")]
    Parse(String),

    #[error("{field} out of {bound}: got {value}")]
    Constraint {
        field: &'static str,
        bound: &'static str,
        value: f64,
    },

    #[error("coincident positions for link {0}")]
    CoincidentPositions(String),

    #[error("degenerate task for CV {0}: zero cycles")]
    DegenerateTask(usize),

    #[error("non-finite surrogate for CV {0}")]
    NonFiniteSurrogate(usize),

    #[error("outage-infeasible scenario: {0}")]
    OutageInfeasible(String),

    #[error("infeasible set: residual {0:.3e} did not reach tolerance")]
    InfeasibleSet(f64),

    #[error("matrix is not Hermitian (asymmetry {0:.3e})")]
    NotHermitian(f64),

    #[error("non-finite gradient at iterate {0}")]
    NonFiniteGradient(String),

    #[error("empty input to {0}")]
    Empty(&'static str),

    #[error("too few Monte-Carlo trials: {0} (need at least 100)")]
    TooFewTrials(usize),

    #[error("unknown {kind} '{name}'")]
    Unknown { kind: &'static str, name: String },

    #[error("invalid sweep: {0}")]
    InvalidSweep(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
