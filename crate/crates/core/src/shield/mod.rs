//! Guard tables extracted from controllers, runtime action filtering and
//! guard adaptation from observed transitions.

mod adapt;
mod error;
mod table;

pub use adapt::{
    detect_mismatch, estimate_params, predict, read_transitions, resynthesize_guards, usable_records,
    write_transitions, MismatchReport, ModelParams, TransitionRecord, DEFAULT_MISMATCH_THRESHOLD,
    DEFAULT_SAFETY_FACTOR,
};
pub use error::{ShieldError, ShieldResult};
pub use table::{
    admissible_actions, apply_action, extract_guards, shield_action, split_control_loop, ControlLoop, GuardEntry,
    GuardTable, ShieldDecision,
};
