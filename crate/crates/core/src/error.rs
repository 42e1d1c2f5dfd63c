use thiserror::Error;

/// Error type shared by every layer of the crate.
///
/// The CLI maps variants onto its exit codes: parse errors to 2,
/// precondition violations to 3, precision exhaustion to 4 and
/// uniqueness failures to 5.
#[derive(Debug, Error)]
pub enum Error {
    #[error("context mismatch: operands belong to different p-adic contexts")]
    ContextMismatch,

    #[error("division by zero (to working precision)")]
    DivisionByZero,

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("parse error at line {line}, column {col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },

    #[error("precision exhausted: {0}")]
    PrecisionExhausted(String),

    #[error("uniqueness failure: {0}")]
    Uniqueness(String),

    #[error("residue is not nilpotent")]
    NonNilpotentResidue,

    #[error("connection is not unipotent at working truncation: {0}")]
    NotUnipotent(String),

    #[error("evaluation point is outside the certified convergence region")]
    OutsideRadius,

    #[error("crystal axioms violated: {0}")]
    CrystalAxiom(String),

    #[error("{0}")]
    Unsupported(String),
}

impl Error {
    pub fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }

    /// Exit code the CLI assigns to this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } => 2,
            Error::PrecisionExhausted(_) => 4,
            Error::Uniqueness(_) => 5,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
