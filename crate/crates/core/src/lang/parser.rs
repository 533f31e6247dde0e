//! Recursive-descent parser for hybrid programs and formulas.
//!
//! Program precedence, loosest first: `++` (choice), `;` (sequence), then
//! statements. A postfix `*` repeats a braced group. Formula precedence,
//! loosest first: `->` (right-associative), `|`, `&`, prefix operators
//! (`!`, quantifiers, `[prog]`), then atoms. Terms use the usual `+ -`,
//! `*`, unary minus, `^` ladder.

use std::collections::BTreeSet;

use super::ast::{is_keyword, Formula, OdeSystem, Program, Relation, Term};
use super::error::{ParseError, SourceSpan};
use super::lexer::{tokenize, Tok, Token};

const MAX_DEPTH: usize = 256;

pub fn parse_program(text: &str) -> Result<Program, ParseError> {
    let mut p = Parser::new(text)?;
    let prog = p.choice()?;
    p.expect_eof()?;
    Ok(prog)
}

pub fn parse_formula(text: &str) -> Result<Formula, ParseError> {
    let mut p = Parser::new(text)?;
    let f = p.formula()?;
    p.expect_eof()?;
    Ok(f)
}

pub fn parse_term(text: &str) -> Result<Term, ParseError> {
    let mut p = Parser::new(text)?;
    let t = p.term()?;
    p.expect_eof()?;
    Ok(t)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    depth: usize,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn new(text: &str) -> PResult<Self> {
        Ok(Parser { tokens: tokenize(text)?, pos: 0, depth: 0 })
    }

    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let idx = (self.pos + k).min(self.tokens.len() - 1);
        &self.tokens[idx].tok
    }

    fn span(&self) -> SourceSpan {
        self.tokens[self.pos].span
    }

    fn advance(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == tok {
            self.advance();
            true
        } else {
            false
        }
    }

    /// Error at the current token. At end of input the span points at the
    /// last real token, which is what dangles.
    fn error(&self, expected: &str) -> ParseError {
        let here = &self.tokens[self.pos];
        if here.tok == Tok::Eof && self.pos > 0 {
            let prev = &self.tokens[self.pos - 1];
            return ParseError::new(
                format!("expected {expected} after {}, found end of input", prev.tok.describe()),
                prev.span,
            );
        }
        ParseError::new(format!("expected {expected}, found {}", here.tok.describe()), here.span)
    }

    fn expect(&mut self, tok: Tok, what: &str) -> PResult<Token> {
        if *self.peek() == tok {
            Ok(self.advance())
        } else {
            Err(self.error(what))
        }
    }

    fn expect_eof(&self) -> PResult<()> {
        if *self.peek() == Tok::Eof {
            Ok(())
        } else {
            Err(self.error("end of input"))
        }
    }

    fn enter(&mut self) -> PResult<()> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            self.depth -= 1;
            return Err(ParseError::new("nesting too deep", self.span()));
        }
        Ok(())
    }

    fn leave(&mut self) {
        self.depth -= 1;
    }

    fn ident(&mut self, what: &str) -> PResult<(String, SourceSpan)> {
        match self.peek().clone() {
            Tok::Ident(name) if !is_keyword(&name) => {
                let span = self.advance().span;
                Ok((name, span))
            }
            Tok::Ident(name) => Err(ParseError::new(
                format!("keyword `{name}` cannot be used as {what}"),
                self.span(),
            )),
            _ => Err(self.error(what)),
        }
    }

    // ---- programs ----

    fn choice(&mut self) -> PResult<Program> {
        let mut acc = self.seq()?;
        while self.eat(&Tok::Cup) {
            let rhs = self.seq()?;
            acc = Program::choice(acc, rhs);
        }
        Ok(acc)
    }

    fn seq(&mut self) -> PResult<Program> {
        let mut acc = self.statement()?;
        while self.eat(&Tok::Semi) {
            // a `;` right before a branch or block end is a terminator
            if matches!(self.peek(), Tok::Cup | Tok::RBrace | Tok::RBracket | Tok::Eof) {
                break;
            }
            let next = self.statement()?;
            acc = Program::seq(acc, next);
        }
        Ok(acc)
    }

    fn statement(&mut self) -> PResult<Program> {
        self.enter()?;
        let result = self.statement_inner();
        self.leave();
        result
    }

    fn statement_inner(&mut self) -> PResult<Program> {
        match self.peek().clone() {
            Tok::LBrace => {
                let open = self.advance().span;
                let mut prog = if matches!(self.peek(), Tok::Ident(_))
                    && *self.peek_at(1) == Tok::Prime
                {
                    Program::Ode(self.ode_body()?)
                } else {
                    if *self.peek() == Tok::RBrace {
                        return Err(ParseError::new(
                            "empty block",
                            SourceSpan::new(open.start, self.span().end),
                        ));
                    }
                    self.choice()?
                };
                self.expect(Tok::RBrace, "`}`")?;
                while self.eat(&Tok::Star) {
                    prog = Program::looped(prog);
                }
                Ok(prog)
            }
            Tok::Question => {
                self.advance();
                Ok(Program::Test(self.formula()?))
            }
            Tok::Ident(_) => {
                let (name, _) = self.ident("an assignment target")?;
                self.expect(Tok::Assign, "`:=`")?;
                if self.eat(&Tok::Star) {
                    Ok(Program::AssignAny(name))
                } else {
                    Ok(Program::Assign(name, self.term()?))
                }
            }
            _ => Err(self.error("a program statement")),
        }
    }

    fn ode_body(&mut self) -> PResult<OdeSystem> {
        let mut equations = Vec::new();
        let mut seen = BTreeSet::new();
        loop {
            let (var, span) = self.ident("an ODE variable")?;
            self.expect(Tok::Prime, "`'`")?;
            self.expect(Tok::Rel(Relation::Eq), "`=`")?;
            let rhs = self.term()?;
            if !seen.insert(var.clone()) {
                return Err(ParseError::new(format!("duplicate ODE variable `{var}`"), span));
            }
            equations.push((var, rhs));
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        let domain = if self.eat(&Tok::Amp) { self.formula()? } else { Formula::True };
        Ok(OdeSystem { equations, domain })
    }

    // ---- formulas ----

    fn formula(&mut self) -> PResult<Formula> {
        self.enter()?;
        let result = self.implies();
        self.leave();
        result
    }

    fn implies(&mut self) -> PResult<Formula> {
        let lhs = self.or()?;
        if self.eat(&Tok::Arrow) {
            let rhs = self.formula()?;
            return Ok(Formula::implies(lhs, rhs));
        }
        Ok(lhs)
    }

    fn or(&mut self) -> PResult<Formula> {
        let mut acc = self.and()?;
        while self.eat(&Tok::Bar) {
            let rhs = self.and()?;
            acc = Formula::or(acc, rhs);
        }
        Ok(acc)
    }

    fn and(&mut self) -> PResult<Formula> {
        let mut acc = self.prefix()?;
        while self.eat(&Tok::Amp) {
            let rhs = self.prefix()?;
            acc = Formula::and(acc, rhs);
        }
        Ok(acc)
    }

    fn prefix(&mut self) -> PResult<Formula> {
        self.enter()?;
        let result = self.prefix_inner();
        self.leave();
        result
    }

    fn prefix_inner(&mut self) -> PResult<Formula> {
        match self.peek().clone() {
            Tok::Bang => {
                self.advance();
                Ok(Formula::not(self.prefix()?))
            }
            Tok::Ident(kw) if kw == "forall" || kw == "exists" => {
                self.advance();
                let (var, _) = self.ident("a bound variable")?;
                self.expect(Tok::Dot, "`.`")?;
                let body = Box::new(self.prefix()?);
                Ok(if kw == "forall" { Formula::Forall(var, body) } else { Formula::Exists(var, body) })
            }
            Tok::LBracket => {
                self.advance();
                let prog = self.choice()?;
                self.expect(Tok::RBracket, "`]`")?;
                Ok(Formula::boxed(prog, self.prefix()?))
            }
            Tok::Ident(kw) if kw == "true" => {
                self.advance();
                Ok(Formula::True)
            }
            Tok::Ident(kw) if kw == "false" => {
                self.advance();
                Ok(Formula::False)
            }
            _ => self.atom(),
        }
    }

    fn atom(&mut self) -> PResult<Formula> {
        let start = self.pos;
        let cmp_err = match self.comparison() {
            Ok(f) => return Ok(f),
            Err(e) => e,
        };
        self.pos = start;
        if *self.peek() != Tok::LParen {
            return Err(cmp_err);
        }
        self.advance();
        let grouped = self.formula().and_then(|f| {
            self.expect(Tok::RParen, "`)`")?;
            Ok(f)
        });
        // report whichever reading got further into the input
        grouped.map_err(|e| if e.span.start >= cmp_err.span.start { e } else { cmp_err })
    }

    fn comparison(&mut self) -> PResult<Formula> {
        let lhs = self.term()?;
        let rel = match self.peek() {
            Tok::Rel(rel) => *rel,
            _ => return Err(self.error("a comparison operator")),
        };
        self.advance();
        let rhs = self.term()?;
        Ok(Formula::Cmp(lhs, rel, rhs))
    }

    // ---- terms ----

    fn term(&mut self) -> PResult<Term> {
        self.enter()?;
        let result = self.additive();
        self.leave();
        result
    }

    fn additive(&mut self) -> PResult<Term> {
        let mut acc = self.multiplicative()?;
        loop {
            if self.eat(&Tok::Plus) {
                acc = Term::add(acc, self.multiplicative()?);
            } else if self.eat(&Tok::Minus) {
                acc = Term::sub(acc, self.multiplicative()?);
            } else {
                return Ok(acc);
            }
        }
    }

    fn multiplicative(&mut self) -> PResult<Term> {
        let mut acc = self.unary()?;
        while self.eat(&Tok::Star) {
            acc = Term::mul(acc, self.unary()?);
        }
        Ok(acc)
    }

    fn unary(&mut self) -> PResult<Term> {
        self.enter()?;
        let result = self.unary_inner();
        self.leave();
        result
    }

    fn unary_inner(&mut self) -> PResult<Term> {
        if !self.eat(&Tok::Minus) {
            return self.power();
        }
        // `-3` is a negative literal, but `-3^2` is `-(3^2)`
        if let Tok::Number(n) = *self.peek() {
            if *self.peek_at(1) != Tok::Caret {
                self.advance();
                return Ok(Term::Const(-n));
            }
        }
        Ok(Term::neg(self.unary()?))
    }

    fn power(&mut self) -> PResult<Term> {
        let mut acc = self.primary()?;
        while self.eat(&Tok::Caret) {
            let exp = match *self.peek() {
                Tok::Number(n) if n.fract() == 0.0 && (1.0..=u32::MAX as f64).contains(&n) => n as u32,
                Tok::Number(_) => {
                    return Err(ParseError::new(
                        "exponent must be an integer of at least 1",
                        self.span(),
                    ))
                }
                _ => return Err(self.error("an integer exponent")),
            };
            self.advance();
            acc = Term::Pow(Box::new(acc), exp);
        }
        Ok(acc)
    }

    fn primary(&mut self) -> PResult<Term> {
        match self.peek().clone() {
            Tok::Number(n) => {
                self.advance();
                Ok(Term::Const(n))
            }
            Tok::Ident(_) => Ok(Term::Var(self.ident("a variable")?.0)),
            Tok::LParen => {
                self.advance();
                let t = self.term()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(t)
            }
            _ => Err(self.error("a term")),
        }
    }
}
