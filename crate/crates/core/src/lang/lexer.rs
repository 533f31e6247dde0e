use super::error::{ParseError, SourceSpan};

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    Ident(String),
    Number(f64),
    Assign,
    Plus,
    Minus,
    Star,
    Caret,
    LParen,
    RParen,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Semi,
    Comma,
    Prime,
    Question,
    Cup,
    Amp,
    Bar,
    Bang,
    Arrow,
    Dot,
    Rel(super::ast::Relation),
    Eof,
}

impl Tok {
    pub(crate) fn describe(&self) -> String {
        match self {
            Tok::Ident(name) => format!("identifier `{name}`"),
            Tok::Number(n) => format!("number `{n}`"),
            Tok::Eof => "end of input".to_string(),
            other => format!("`{}`", other.text()),
        }
    }

    fn text(&self) -> &'static str {
        use super::ast::Relation::*;
        match self {
            Tok::Assign => ":=",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Star => "*",
            Tok::Caret => "^",
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::LBrace => "{",
            Tok::RBrace => "}",
            Tok::LBracket => "[",
            Tok::RBracket => "]",
            Tok::Semi => ";",
            Tok::Comma => ",",
            Tok::Prime => "'",
            Tok::Question => "?",
            Tok::Cup => "++",
            Tok::Amp => "&",
            Tok::Bar => "|",
            Tok::Bang => "!",
            Tok::Arrow => "->",
            Tok::Dot => ".",
            Tok::Rel(Le) => "<=",
            Tok::Rel(Lt) => "<",
            Tok::Rel(Eq) => "=",
            Tok::Rel(Gt) => ">",
            Tok::Rel(Ge) => ">=",
            Tok::Ident(_) | Tok::Number(_) | Tok::Eof => "",
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Token {
    pub tok: Tok,
    pub span: SourceSpan,
}

pub(crate) fn tokenize(input: &str) -> Result<Vec<Token>, ParseError> {
    use super::ast::Relation;

    let bytes = input.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if c == b'/' && bytes.get(i + 1) == Some(&b'/') {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        let two = |a: u8, b: u8| c == a && bytes.get(i + 1) == Some(&b);
        let (tok, len) = if c.is_ascii_alphabetic() {
            let mut j = i + 1;
            while j < bytes.len() && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_') {
                j += 1;
            }
            (Tok::Ident(input[i..j].to_string()), j - i)
        } else if c.is_ascii_digit() {
            let end = scan_number(bytes, i);
            let text = &input[i..end];
            let value: f64 = text.parse().map_err(|_| {
                ParseError::new(format!("malformed number `{text}`"), SourceSpan::new(i, end))
            })?;
            if !value.is_finite() {
                return Err(ParseError::new(
                    format!("number `{text}` is out of range"),
                    SourceSpan::new(i, end),
                ));
            }
            (Tok::Number(value), end - i)
        } else if two(b':', b'=') {
            (Tok::Assign, 2)
        } else if two(b'+', b'+') {
            (Tok::Cup, 2)
        } else if two(b'-', b'>') {
            (Tok::Arrow, 2)
        } else if two(b'<', b'=') {
            (Tok::Rel(Relation::Le), 2)
        } else if two(b'>', b'=') {
            (Tok::Rel(Relation::Ge), 2)
        } else {
            let tok = match c {
                b'+' => Tok::Plus,
                b'-' => Tok::Minus,
                b'*' => Tok::Star,
                b'^' => Tok::Caret,
                b'(' => Tok::LParen,
                b')' => Tok::RParen,
                b'{' => Tok::LBrace,
                b'}' => Tok::RBrace,
                b'[' => Tok::LBracket,
                b']' => Tok::RBracket,
                b';' => Tok::Semi,
                b',' => Tok::Comma,
                b'\'' => Tok::Prime,
                b'?' => Tok::Question,
                b'&' => Tok::Amp,
                b'|' => Tok::Bar,
                b'!' => Tok::Bang,
                b'.' => Tok::Dot,
                b'<' => Tok::Rel(Relation::Lt),
                b'>' => Tok::Rel(Relation::Gt),
                b'=' => Tok::Rel(Relation::Eq),
                _ => {
                    let ch = input[i..].chars().next().unwrap_or('?');
                    return Err(ParseError::new(
                        format!("unexpected character `{ch}`"),
                        SourceSpan::new(i, i + ch.len_utf8()),
                    ));
                }
            };
            (tok, 1)
        };
        i += len;
        tokens.push(Token { tok, span: SourceSpan::new(start, i) });
    }
    tokens.push(Token { tok: Tok::Eof, span: SourceSpan::new(input.len(), input.len()) });
    Ok(tokens)
}

fn scan_number(bytes: &[u8], start: usize) -> usize {
    let digits = |mut j: usize| {
        while j < bytes.len() && bytes[j].is_ascii_digit() {
            j += 1;
        }
        j
    };
    let mut end = digits(start);
    if bytes.get(end) == Some(&b'.') && bytes.get(end + 1).is_some_and(u8::is_ascii_digit) {
        end = digits(end + 1);
    }
    if matches!(bytes.get(end), Some(b'e' | b'E')) {
        let mut j = end + 1;
        if matches!(bytes.get(j), Some(b'+' | b'-')) {
            j += 1;
        }
        if bytes.get(j).is_some_and(u8::is_ascii_digit) {
            end = digits(j);
        }
    }
    end
}
