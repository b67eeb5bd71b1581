use thiserror::Error;

pub type Result<T> = std::result::Result<T, HedgeError>;

#[derive(Debug, Error)]
pub enum HedgeError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("time step {t} is outside the horizon of {n_steps} steps")]
    OutOfHorizon { t: usize, n_steps: usize },

    #[error("illegal market transition from ({t}, {from}) to ({t_next}, {to})")]
    IllegalTransition {
        t: usize,
        from: i32,
        t_next: usize,
        to: i32,
    },

    #[error("missing risk-neutral option values for the incremental reward")]
    MissingOptionValues,

    #[error("holdings grid [{min}, {max}] is binding along the optimal policy")]
    GridExhausted { min: i64, max: i64 },

    #[error("instance too large for exhaustive search: {work} leaf evaluations exceed budget {budget}")]
    InstanceTooLarge { work: f64, budget: f64 },

    #[error("state (t={t}, j={j}, n={n}) is not covered by the policy table")]
    UnreachableState { t: usize, j: i32, n: i64 },

    #[error("bracket failure: {0}")]
    Bracket(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("training diverged: loss became {0}")]
    Divergence(f64),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl HedgeError {
    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            HedgeError::Config(_) | HedgeError::InvalidParameter(_) => 2,
            HedgeError::Io(_) => 4,
            HedgeError::Checkpoint(_) => 4,
            _ => 3,
        }
    }
}
