use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown attribute {0:?}")]
    UnknownAttribute(String),
    #[error("too many variables: {0} (cap is {1})")]
    TooManyVars(usize, usize),
    #[error("validation: {0}")]
    Validation(String),
    #[error("fd {0} has no guard and no udf; cannot expand")]
    Unexpandable(String),
    #[error("oracle budget of {0} extension steps exceeded")]
    OracleOverflow(u64),
    #[error("linear program infeasible")]
    Infeasible,
    #[error("linear program unbounded")]
    Unbounded,
    #[error("not normal: {0}")]
    NotNormal(String),
    #[error("not integral: {0}")]
    NotIntegral(String),
    #[error("proof not good: step {step}: {reason}")]
    NotGood { step: usize, reason: String },
    #[error("no proof found: {0}")]
    NoProof(String),
    #[error("search budget exhausted after {0} nodes")]
    Budget(u64),
    #[error("invariant breach: {0}")]
    Invariant(String),
    #[error("plan mismatch: {0}")]
    Plan(String),
    #[error("size cap exceeded: {0}")]
    Cap(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
