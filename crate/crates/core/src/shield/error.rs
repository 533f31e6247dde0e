use thiserror::Error;

use crate::exec::ExecError;
use crate::lang::ParseError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ShieldError {
    #[error("controller is not in guarded-choice form: {0}")]
    NotCanonicalForm(String),
    #[error("unknown action `{0}`")]
    UnknownAction(String),
    #[error("action `{0}` appears twice")]
    DuplicateAction(String),
    #[error("fallback `{action}` must have guard true, has {guard}")]
    FallbackGuarded { action: String, guard: String },
    #[error("{labels} labels for {branches} branches")]
    LabelCount { labels: usize, branches: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("not enough usable transitions for `{0}`")]
    InsufficientData(String),
    #[error("mismatch detection needs a nonempty window")]
    EmptyWindow,
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("transition CSV: {0}")]
    Csv(String),
}

pub type ShieldResult<T> = Result<T, ShieldError>;
