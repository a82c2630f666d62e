use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("gradient tape already consumed; build a fresh tape per forward pass")]
    TapeConsumed,

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("grid construction failed: {0}")]
    GridConstruction(String),

    #[error("cannot step a terminal state")]
    TerminalStep,

    #[error("invalid action index {0}")]
    InvalidAction(usize),

    #[error("margin query undefined here: {0}")]
    MarginUndefined(String),

    #[error("infeasible error budget: total epsilon {eps} must exceed classifier error {e_hat}; minimum achievable epsilon is {min_eps}")]
    InfeasibleBudget { eps: f64, e_hat: f64, min_eps: f64 },

    #[error("parameter out of range: {0}")]
    OutOfRange(String),

    #[error("validation set too small: got {got} rows, the requested (eps={eps}, delta={delta}) bound needs at least {required}")]
    ValidationTooSmall {
        got: usize,
        required: usize,
        eps: f64,
        delta: f64,
    },

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("negative synthesis rejected {rejected} of {attempted} candidates; the feasible set nearly fills the hidden domain")]
    NegativeSynthesisStuck { rejected: u64, attempted: u64 },

    #[error("training aborted: {0}")]
    Training(String),

    #[error("enumeration cap of {cap} configurations exceeded at depth {depth}")]
    EnumerationCap { cap: usize, depth: u32 },

    #[error("cell budget exceeded: resolution {resolution} over {dims} dimensions needs {cells} cells, cap is {cap}")]
    CellCap {
        resolution: u32,
        dims: usize,
        cells: u128,
        cap: u64,
    },

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
