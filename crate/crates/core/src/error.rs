use thiserror::Error;

/// Errors produced anywhere in the verification pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("transition matrix for action `{action}`: column {column} sums to {sum} (expected 1)")]
    ColumnSum {
        action: String,
        column: usize,
        sum: f64,
    },

    #[error("observation matrix for action `{action}`: row {row} sums to {sum} (expected 1)")]
    RowSum {
        action: String,
        row: usize,
        sum: f64,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid probability: {0}")]
    Probability(String),

    #[error("invalid privacy specification: {0}")]
    Spec(String),

    #[error("unknown action `{0}`")]
    UnknownAction(String),

    #[error("unknown observation `{0}`")]
    UnknownObservation(String),

    #[error("unknown state `{0}`")]
    UnknownState(String),

    #[error("invalid belief: {0}")]
    Belief(String),

    #[error("observation `{observation}` after action `{action}` has probability {normalizer:e} under the current belief")]
    ZeroProbabilityObservation {
        action: String,
        observation: String,
        normalizer: f64,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("falsifier enumeration exceeded the node budget of {cap}")]
    BudgetExceeded { cap: u64 },

    #[error("polynomials live in different rings ({left} vs {right} variables)")]
    VarsMismatch { left: usize, right: usize },

    #[error("degree {0} is odd; a sum of squares must have even degree")]
    OddDegree(usize),

    #[error("degree {degree} exceeds the configured cap {cap}")]
    DegreeCap { degree: usize, cap: usize },

    #[error("unsupported initial-set encoding: {0}")]
    UnsupportedEncoding(String),

    #[error("initial set intersects the unsafe set (secret mass {mass} > lambda {lambda})")]
    Overlap { mass: f64, lambda: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("malformed conic program: {0}")]
    Program(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn at_step(self, step: usize) -> Error {
        Error::Step {
            step,
            source: Box::new(self),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Syntax {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}
