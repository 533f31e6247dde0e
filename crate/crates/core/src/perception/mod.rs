//! Template matching from frames to symbolic state.

mod error;
mod frame;
mod matching;

pub use error::{PerceptionError, PerceptionResult};
pub use frame::Frame;
pub use matching::{
    extract_symbols, match_all, match_template, AffineBinding, Axis, Match, SymbolMap, Symbols, Template,
};
