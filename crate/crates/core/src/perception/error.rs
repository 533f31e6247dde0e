use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PerceptionError {
    #[error("frames and patches need at least one pixel")]
    EmptyFrame,
    #[error("bad frame shape: {0}")]
    Shape(String),
    #[error("template `{0}` is constant; normalized correlation is undefined")]
    ConstantTemplate(String),
    #[error("template `{label}` ({th}x{tw}) does not fit a {fh}x{fw} frame")]
    TemplateTooLarge { label: String, th: usize, tw: usize, fh: usize, fw: usize },
    #[error("every window under template `{0}` has zero variance")]
    DegenerateWindow(String),
    #[error("required object `{0}` not found")]
    Failure(String),
    #[error("invalid symbol map: {0}")]
    SymbolMap(String),
    #[error("PGM: {0}")]
    Pgm(String),
}

pub type PerceptionResult<T> = Result<T, PerceptionError>;
