//! Built-in environments: the stop-sign car with symbolic observations and
//! a pixel-rendered road-crossing grid world.

mod car;
mod crossing;

use thiserror::Error;

use crate::config::ConfigError;
use crate::exec::{ExecError, State};
use crate::perception::{Frame, PerceptionError};
use crate::shield::ShieldError;

pub use car::{car_reset, car_step, CarEnv, CarEnvConfig, CarStep, CAR_ACTIONS};
pub use crossing::{
    crossing_guard_table, crossing_reset, crossing_step, crossing_templates, crossing_symbol_map, render, sprite,
    CrossingEnv, CrossingEnvConfig, CrossingObserver, CrossingStep, CrossingWorld, ObjectClass, CROSSING_ACTIONS,
};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("unknown action `{0}`")]
    InvalidAction(String),
    #[error("invalid environment config: {0}")]
    Config(String),
    #[error("step after the episode ended")]
    EpisodeOver,
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error(transparent)]
    Perception(#[from] PerceptionError),
    #[error(transparent)]
    Shield(#[from] ShieldError),
    #[error(transparent)]
    ConfigFile(#[from] ConfigError),
}

pub type EnvResult<T> = Result<T, EnvError>;

#[derive(Debug, Clone, PartialEq)]
pub enum Observation {
    Symbolic(State),
    Visual(Frame),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    /// The step entered an unsafe state (overshoot or collision).
    pub violation: bool,
}

/// Episodic environment with named discrete actions.
pub trait Environment {
    /// Action ids in lexicographic order.
    fn actions(&self) -> &[String];
    fn reset(&mut self, seed: u64) -> EnvResult<Observation>;
    fn step(&mut self, action: &str) -> EnvResult<StepOutcome>;
    /// Hidden ground truth, for logging.
    fn ground_truth(&self) -> State;
}

/// Turns observations into the symbolic state the shield and the learner
/// work on. `None` means the observation could not be interpreted.
pub trait Observer {
    fn reset(&mut self);
    fn observe(&mut self, obs: &Observation) -> EnvResult<Option<State>>;
}

/// Passes symbolic observations through unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct SymbolicObserver;

impl Observer for SymbolicObserver {
    fn reset(&mut self) {}

    fn observe(&mut self, obs: &Observation) -> EnvResult<Option<State>> {
        match obs {
            Observation::Symbolic(s) => Ok(Some(s.clone())),
            Observation::Visual(_) => Err(EnvError::Config("symbolic observer given a frame".into())),
        }
    }
}
