//! Hybrid-program and formula language: AST, parser, printer and model files.

mod ast;
mod error;
mod lexer;
pub mod model;
mod parser;
mod printer;

pub use ast::{is_identifier, Formula, OdeSystem, Program, Relation, Term};
pub use error::{ParseError, SourceSpan};
pub use model::Model;
pub use parser::{parse_formula, parse_program, parse_term};
pub use printer::{print_formula, print_program, print_term};
