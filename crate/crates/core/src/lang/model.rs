//! `.hp` model files: labeled sections such as
//!
//! ```text
//! // stop-sign car
//! init: v^2 <= 2*b*(m-x) & v >= 0 & A >= 0 & b > 0
//! program: {{a := -b ++ ?2*b*(m-x) >= v^2 + (A+b)*(A*eps^2 + 2*eps*v); a := A};
//!           t := 0; {x' = v, v' = a, t' = 1 & v >= 0 & t <= eps}}*
//! safe: x <= m
//! ```
//!
//! A section runs from its label to the next label. `//` starts a line comment.

use super::ast::{Formula, Program};
use super::error::{ParseError, SourceSpan};
use super::parser::{parse_formula, parse_program};

/// A section label with the byte range of its content in the original text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Section {
    pub label: String,
    pub label_span: SourceSpan,
    pub content: SourceSpan,
}

/// Splits `text` into sections whose labels are drawn from `labels`.
/// Comments are blanked (offsets are preserved) in the returned string.
pub fn split_sections(text: &str, labels: &[&str]) -> Result<(String, Vec<Section>), ParseError> {
    let blanked = blank_comments(text);
    let mut sections: Vec<Section> = Vec::new();
    let mut offset = 0;
    for line in blanked.split_inclusive('\n') {
        let indent = line.len() - line.trim_start().len();
        let rest = &line[indent..];
        let label = labels.iter().find(|l| {
            rest.starts_with(*l)
                && rest[l.len()..].starts_with(':')
                && !rest[l.len() + 1..].starts_with('=')
        });
        match label {
            Some(label) => {
                let start = offset + indent;
                let label_span = SourceSpan::new(start, start + label.len() + 1);
                if let Some(prev) = sections.iter().find(|s| s.label == *label) {
                    let (line_no, _) = prev.label_span.line_col(text);
                    return Err(ParseError::new(
                        format!("duplicate section `{label}` (first defined on line {line_no})"),
                        label_span,
                    ));
                }
                if let Some(last) = sections.last_mut() {
                    last.content.end = start;
                }
                sections.push(Section {
                    label: label.to_string(),
                    label_span,
                    content: SourceSpan::new(label_span.end, offset + line.len()),
                });
            }
            None => match sections.last_mut() {
                Some(last) => last.content.end = offset + line.len(),
                None if !rest.trim().is_empty() => {
                    let start = offset + indent;
                    let end = offset + indent + rest.trim_end().len();
                    return Err(ParseError::new(
                        format!("expected a section label ({})", labels.join(", ")),
                        SourceSpan::new(start, end),
                    ));
                }
                None => {}
            },
        }
        offset += line.len();
    }
    Ok((blanked, sections))
}

fn blank_comments(text: &str) -> String {
    let mut bytes = text.as_bytes().to_vec();
    let mut i = 0;
    while i + 1 < bytes.len() {
        if bytes[i] == b'/' && bytes[i + 1] == b'/' {
            while i < bytes.len() && bytes[i] != b'\n' {
                bytes[i] = b' ';
                i += 1;
            }
        } else {
            i += 1;
        }
    }
    // only whole comments were replaced, byte for byte, so this stays UTF-8
    String::from_utf8(bytes).expect("blanking comments preserves UTF-8")
}

/// Parses one section's content with `parse`, mapping error spans back into
/// the file.
pub fn parse_section<T>(
    blanked: &str,
    section: &Section,
    parse: impl Fn(&str) -> Result<T, ParseError>,
) -> Result<T, ParseError> {
    let content = &blanked[section.content.start..section.content.end];
    if content.trim().is_empty() {
        return Err(ParseError::new(format!("section `{}` is empty", section.label), section.label_span));
    }
    parse(content).map_err(|e| ParseError::new(e.message, e.span.shifted(section.content.start)))
}

pub fn find_section<'a>(sections: &'a [Section], label: &str, text: &str) -> Result<&'a Section, ParseError> {
    sections.iter().find(|s| s.label == label).ok_or_else(|| {
        ParseError::new(format!("missing section `{label}:`"), SourceSpan::new(text.len(), text.len()))
    })
}

/// A safety model `init -> [program] safe`.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub init: Formula,
    pub program: Program,
    pub safe: Formula,
}

impl Model {
    pub fn parse(text: &str) -> Result<Model, ParseError> {
        let (blanked, sections) = split_sections(text, &["init", "program", "safe"])?;
        let section = |label| find_section(&sections, label, text);
        Ok(Model {
            init: parse_section(&blanked, section("init")?, parse_formula)?,
            program: parse_section(&blanked, section("program")?, parse_program)?,
            safe: parse_section(&blanked, section("safe")?, parse_formula)?,
        })
    }

    /// The claim `init -> [program] safe`.
    pub fn claim(&self) -> Formula {
        Formula::implies(self.init.clone(), Formula::boxed(self.program.clone(), self.safe.clone()))
    }

    pub fn to_text(&self) -> String {
        format!("init: {}\nprogram: {}\nsafe: {}\n", self.init, self.program, self.safe)
    }
}
