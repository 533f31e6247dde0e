//! Library side of the `hpshield` command: layered configuration and the
//! five experiment commands.

pub mod commands;
pub mod output;
pub mod settings;

use thiserror::Error;

pub use commands::{cmd_adapt, cmd_check, cmd_penalty_sweep, cmd_simulate, cmd_train, AdaptReport};
pub use settings::{layered_config, EnvKind, Settings};

pub const EXIT_OK: i32 = 0;
pub const EXIT_COUNTEREXAMPLE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_INSUFFICIENT_DATA: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{0}")]
    Input(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::InsufficientData(_) => EXIT_INSUFFICIENT_DATA,
            _ => EXIT_INPUT,
        }
    }
}

macro_rules! input_error {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Input(e.to_string())
            }
        }
    )*};
}

input_error!(
    hybrid_shield::config::ConfigError,
    hybrid_shield::exec::ExecError,
    hybrid_shield::envs::EnvError,
    hybrid_shield::agent::AgentError,
    hybrid_shield::perception::PerceptionError,
    csv::Error
);

impl From<hybrid_shield::shield::ShieldError> for CliError {
    fn from(e: hybrid_shield::shield::ShieldError) -> Self {
        match e {
            hybrid_shield::shield::ShieldError::InsufficientData(m) => CliError::InsufficientData(m),
            other => CliError::Input(other.to_string()),
        }
    }
}
