use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExecError {
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("evaluation produced a non-finite value")]
    NonFiniteResult,
    #[error("`{0}` cannot be evaluated in a single state")]
    UnsupportedConnective(&'static str),
    #[error("integration produced a non-finite value for `{0}`")]
    NonFiniteState(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("resolver contract violated: {0}")]
    ResolverContract(String),
    #[error("enumeration budget of {0} configurations exceeded")]
    BudgetExceeded(usize),
    #[error("no finite sample set configured for `{0} := *`")]
    UnboundedSampling(String),
    #[error("replay of the counterexample diverged: {0}")]
    ReplayDiverged(String),
}

pub type ExecResult<T> = Result<T, ExecError>;
