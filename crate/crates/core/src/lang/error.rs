use std::fmt;

use thiserror::Error;

/// Byte range `[start, end)` into the parsed text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SourceSpan {
    pub start: usize,
    pub end: usize,
}

impl SourceSpan {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        SourceSpan { start, end }
    }

    pub fn shifted(self, offset: usize) -> Self {
        SourceSpan::new(self.start + offset, self.end + offset)
    }

    /// 1-based line and column of the span start.
    pub fn line_col(&self, text: &str) -> (usize, usize) {
        let upto = &text[..self.start.min(text.len())];
        let line = upto.matches('\n').count() + 1;
        let col = upto.rfind('\n').map_or(upto.len(), |nl| upto.len() - nl - 1) + 1;
        (line, col)
    }
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{message} at {span}")]
pub struct ParseError {
    pub message: String,
    pub span: SourceSpan,
}

impl ParseError {
    pub fn new(message: impl Into<String>, span: SourceSpan) -> Self {
        ParseError { message: message.into(), span }
    }

    /// Renders the error with line/column information and the offending line.
    pub fn render(&self, source: &str) -> String {
        let (line, col) = self.span.line_col(source);
        let text = source.lines().nth(line - 1).unwrap_or("");
        let width = (self.span.end - self.span.start).max(1);
        format!(
            "error: {} (line {line}, column {col})\n  | {text}\n  | {}{}",
            self.message,
            " ".repeat(col - 1),
            "^".repeat(width.min(text.len().saturating_sub(col - 1).max(1)))
        )
    }
}
