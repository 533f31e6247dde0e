//! Evaluation, numerical flow, program execution and bounded falsification.

mod check;
mod compile;
mod error;
mod eval;
mod flow;
mod run;
mod state;

pub use check::{
    bounded_check, inclusive_range, BoundedCheckConfig, CheckSummary, Counterexample, InitialGrid, Verdict,
    MERGE_RESOLUTION,
};
pub use compile::{CompiledFormula, CompiledTerm, Layout};
pub use error::{ExecError, ExecResult};
pub use eval::{eval_formula, eval_term, robustness};
pub use flow::{flow, flow_with, CompiledFlow, ExitReason, FlowOptions, FlowResult, DEFAULT_EVENT_TOLERANCE, DEFAULT_STEP};
pub use run::{
    run, run_with, Decision, ExecOptions, Outcome, RandomResolver, Resolution, Resolver, ScriptedResolver, Trace,
    TraceEvent,
};
pub use state::State;
