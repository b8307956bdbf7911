//! Lexing, formula parsing, span splitting and command parsing.
//!
//! Grammar of a document: a sequence of commands, each terminated by a `.`
//! outside comments. Comments are `(* ... *)` and nest.
//!
//! ```text
//! def NAME := formula .
//! lemma NAME : formula .
//! proof .
//! intro NAME . | exact NAME . | apply NAME . | split . | left . | right .
//! cases NAME . | by_contra NAME . | exfalso . | search N .
//! qed .
//! ```

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::kernel::Formula;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TokenKind {
    Ident(String),
    Number(u64),
    LParen,
    RParen,
    Tilde,
    AndOp,
    OrOp,
    Arrow,
    Defines,
    Colon,
    Dot,
    Unknown(char),
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenKind::Ident(s) => f.write_str(s),
            TokenKind::Number(n) => write!(f, "{n}"),
            TokenKind::LParen => f.write_str("("),
            TokenKind::RParen => f.write_str(")"),
            TokenKind::Tilde => f.write_str("~"),
            TokenKind::AndOp => f.write_str("/\\"),
            TokenKind::OrOp => f.write_str("\\/"),
            TokenKind::Arrow => f.write_str("->"),
            TokenKind::Defines => f.write_str(":="),
            TokenKind::Colon => f.write_str(":"),
            TokenKind::Dot => f.write_str("."),
            TokenKind::Unknown(c) => write!(f, "{c}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub offset: usize,
}

/// Tokenizes `text`, dropping whitespace and (nested) comments. An
/// unterminated comment swallows the rest of the input.
pub fn lex(text: &str) -> Vec<Token> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if bytes[i..].starts_with(b"(*") {
            i = skip_comment(bytes, i);
            continue;
        }
        let start = i;
        let two = |s: &[u8]| bytes[i..].starts_with(s);
        let (kind, len) = if c.is_ascii_alphabetic() || c == b'_' {
            let mut j = i + 1;
            while j < bytes.len() && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_') {
                j += 1;
            }
            (TokenKind::Ident(text[i..j].to_string()), j - i)
        } else if c.is_ascii_digit() {
            let mut j = i + 1;
            while j < bytes.len() && bytes[j].is_ascii_digit() {
                j += 1;
            }
            match text[i..j].parse() {
                Ok(n) => (TokenKind::Number(n), j - i),
                Err(_) => (TokenKind::Unknown('#'), j - i),
            }
        } else if two(b"->") {
            (TokenKind::Arrow, 2)
        } else if two(b"/\\") {
            (TokenKind::AndOp, 2)
        } else if two(b"\\/") {
            (TokenKind::OrOp, 2)
        } else if two(b":=") {
            (TokenKind::Defines, 2)
        } else {
            match c {
                b'(' => (TokenKind::LParen, 1),
                b')' => (TokenKind::RParen, 1),
                b'~' => (TokenKind::Tilde, 1),
                b':' => (TokenKind::Colon, 1),
                b'.' => (TokenKind::Dot, 1),
                _ => {
                    let ch = text[i..].chars().next().unwrap();
                    (TokenKind::Unknown(ch), ch.len_utf8())
                }
            }
        };
        out.push(Token {
            kind,
            offset: start,
        });
        i += len;
    }
    out
}

/// Returns the index just past the comment opening at `i`.
fn skip_comment(bytes: &[u8], mut i: usize) -> usize {
    let mut depth = 0usize;
    while i < bytes.len() {
        if bytes[i..].starts_with(b"(*") {
            depth += 1;
            i += 2;
        } else if bytes[i..].starts_with(b"*)") {
            depth -= 1;
            i += 2;
            if depth == 0 {
                return i;
            }
        } else {
            i += 1;
        }
    }
    bytes.len()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormulaError {
    #[error("expected formula at offset {offset}")]
    ExpectedFormula { offset: usize },
    #[error("unbalanced parenthesis at offset {offset}")]
    UnbalancedParen { offset: usize },
    #[error("unexpected token at offset {offset}")]
    UnexpectedToken { offset: usize },
}

impl FormulaError {
    pub fn offset(&self) -> usize {
        match self {
            FormulaError::ExpectedFormula { offset }
            | FormulaError::UnbalancedParen { offset }
            | FormulaError::UnexpectedToken { offset } => *offset,
        }
    }

    /// The message without its offset, for statuses that carry the offset separately.
    pub fn description(&self) -> &'static str {
        match self {
            FormulaError::ExpectedFormula { .. } => "expected formula",
            FormulaError::UnbalancedParen { .. } => "unbalanced parenthesis",
            FormulaError::UnexpectedToken { .. } => "unexpected token",
        }
    }
}

struct FormulaParser<'a> {
    toks: &'a [Token],
    pos: usize,
    end: usize,
}

impl FormulaParser<'_> {
    fn peek(&self) -> Option<&TokenKind> {
        self.toks.get(self.pos).map(|t| &t.kind)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |t| t.offset)
    }

    fn implication(&mut self) -> Result<Formula, FormulaError> {
        let lhs = self.disjunction()?;
        if self.peek() == Some(&TokenKind::Arrow) {
            self.pos += 1;
            let rhs = self.implication()?;
            return Ok(Formula::imp(lhs, rhs));
        }
        Ok(lhs)
    }

    fn disjunction(&mut self) -> Result<Formula, FormulaError> {
        let mut lhs = self.conjunction()?;
        while self.peek() == Some(&TokenKind::OrOp) {
            self.pos += 1;
            lhs = Formula::or(lhs, self.conjunction()?);
        }
        Ok(lhs)
    }

    fn conjunction(&mut self) -> Result<Formula, FormulaError> {
        let mut lhs = self.unary()?;
        while self.peek() == Some(&TokenKind::AndOp) {
            self.pos += 1;
            lhs = Formula::and(lhs, self.unary()?);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Formula, FormulaError> {
        let offset = self.offset();
        match self.peek() {
            Some(TokenKind::Tilde) => {
                self.pos += 1;
                Ok(Formula::not(self.unary()?))
            }
            Some(TokenKind::Ident(name)) => {
                let f = if name == "false" {
                    Formula::False
                } else {
                    Formula::atom(name)
                };
                self.pos += 1;
                Ok(f)
            }
            Some(TokenKind::LParen) => {
                self.pos += 1;
                let inner = self.implication()?;
                if self.peek() != Some(&TokenKind::RParen) {
                    return Err(FormulaError::UnbalancedParen { offset });
                }
                self.pos += 1;
                Ok(inner)
            }
            _ => Err(FormulaError::ExpectedFormula { offset }),
        }
    }
}

/// Parses a complete token slice as one formula. `end` is the offset
/// reported when input runs out.
fn parse_formula_tokens(toks: &[Token], end: usize) -> Result<Formula, FormulaError> {
    let mut p = FormulaParser { toks, pos: 0, end };
    let f = p.implication()?;
    match toks.get(p.pos) {
        None => Ok(f),
        Some(Token {
            kind: TokenKind::RParen,
            offset,
        }) => Err(FormulaError::UnbalancedParen { offset: *offset }),
        Some(t) => Err(FormulaError::UnexpectedToken { offset: t.offset }),
    }
}

pub fn parse_formula(text: &str) -> Result<Formula, FormulaError> {
    parse_formula_tokens(&lex(text), text.len())
}

/// One command's worth of raw document text.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpanText {
    pub raw: String,
    pub start: usize,
    pub end: usize,
    pub terminated: bool,
}

impl SpanText {
    pub fn new(raw: impl Into<String>) -> SpanText {
        let raw = raw.into();
        let terminated = lex(&raw).last().map(|t| &t.kind) == Some(&TokenKind::Dot);
        SpanText {
            end: raw.len(),
            raw,
            start: 0,
            terminated,
        }
    }

    pub fn byte_range(&self) -> (usize, usize) {
        (self.start, self.end)
    }
}

/// Splits document text into command spans.
///
/// A span starts at the first non-whitespace byte after the previous span
/// and ends just after a `.` outside comments. Text left after the last
/// terminator becomes an unterminated span, unless it holds nothing but
/// comments, in which case it is folded into the preceding span.
pub fn split_spans(text: &str) -> Vec<SpanText> {
    let bytes = text.as_bytes();
    let mut spans: Vec<SpanText> = Vec::new();
    let mut i = 0;
    loop {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if i >= bytes.len() {
            break;
        }
        let start = i;
        let mut terminated = false;
        while i < bytes.len() {
            if bytes[i..].starts_with(b"(*") {
                i = skip_comment(bytes, i);
            } else if bytes[i] == b'.' {
                i += 1;
                terminated = true;
                break;
            } else {
                i += 1;
            }
        }
        let mut end = i;
        if !terminated {
            // trim trailing whitespace of the unterminated tail
            while end > start && bytes[end - 1].is_ascii_whitespace() {
                end -= 1;
            }
            if lex(&text[start..end]).is_empty() {
                if let Some(last) = spans.last_mut() {
                    last.end = end;
                    last.raw = text[last.start..end].to_string();
                    break;
                }
            }
        }
        spans.push(SpanText {
            raw: text[start..end].to_string(),
            start,
            end,
            terminated,
        });
    }
    spans
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum ProofStep {
    Intro(Arc<str>),
    Exact(Arc<str>),
    Apply(Arc<str>),
    Split,
    Left,
    Right,
    Cases(Arc<str>),
    ByContra(Arc<str>),
    Exfalso,
    Search(u32),
}

impl fmt::Display for ProofStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProofStep::Intro(n) => write!(f, "intro {n}"),
            ProofStep::Exact(n) => write!(f, "exact {n}"),
            ProofStep::Apply(n) => write!(f, "apply {n}"),
            ProofStep::Split => f.write_str("split"),
            ProofStep::Left => f.write_str("left"),
            ProofStep::Right => f.write_str("right"),
            ProofStep::Cases(n) => write!(f, "cases {n}"),
            ProofStep::ByContra(n) => write!(f, "by_contra {n}"),
            ProofStep::Exfalso => f.write_str("exfalso"),
            ProofStep::Search(d) => write!(f, "search {d}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Command {
    Def { name: Arc<str>, body: Formula },
    LemmaHeader { name: Arc<str>, statement: Formula },
    ProofOpen,
    Step(ProofStep),
    Qed,
    SyntaxError { message: String, offset: usize },
}

impl Command {
    pub fn is_syntax_error(&self) -> bool {
        matches!(self, Command::SyntaxError { .. })
    }
}

fn syntax_error(message: impl Into<String>, offset: usize) -> Command {
    Command::SyntaxError {
        message: message.into(),
        offset,
    }
}

fn name_at(toks: &[Token], i: usize, end: usize) -> Result<Arc<str>, Command> {
    match toks.get(i) {
        Some(Token {
            kind: TokenKind::Ident(n),
            ..
        }) if n != "false" => Ok(Arc::from(n.as_str())),
        Some(t) => Err(syntax_error("expected name", t.offset)),
        None => Err(syntax_error("expected name", end)),
    }
}

/// Parses one span. Never fails: problems come back as `Command::SyntaxError`
/// with a byte offset relative to the start of the span.
pub fn parse_command(span: &SpanText) -> Command {
    let toks = lex(&span.raw);
    let end = span.raw.len();
    let Some(last) = toks.last() else {
        return syntax_error("empty command", 0);
    };
    if !span.terminated || last.kind != TokenKind::Dot {
        return syntax_error("unterminated command", end);
    }
    let body = &toks[..toks.len() - 1];
    let dot = last.offset;
    match parse_body(body, dot) {
        Ok(c) => c,
        Err(c) => c,
    }
}

fn parse_body(toks: &[Token], end: usize) -> Result<Command, Command> {
    let Some(first) = toks.first() else {
        return Err(syntax_error("empty command", end));
    };
    let TokenKind::Ident(kw) = &first.kind else {
        return Err(syntax_error("expected command", first.offset));
    };
    let expect_len = |n: usize| -> Result<(), Command> {
        match toks.get(n) {
            None => Ok(()),
            Some(t) => Err(syntax_error("unexpected token", t.offset)),
        }
    };
    let named = |make: fn(Arc<str>) -> ProofStep| -> Result<Command, Command> {
        let n = name_at(toks, 1, end)?;
        expect_len(2)?;
        Ok(Command::Step(make(n)))
    };
    let bare = |c: Command| -> Result<Command, Command> {
        expect_len(1)?;
        Ok(c)
    };
    match kw.as_str() {
        "def" | "lemma" => {
            let name = name_at(toks, 1, end)?;
            let sep = if kw == "def" {
                TokenKind::Defines
            } else {
                TokenKind::Colon
            };
            match toks.get(2) {
                Some(t) if t.kind == sep => {}
                Some(t) => return Err(syntax_error(format!("expected `{sep}`"), t.offset)),
                None => return Err(syntax_error(format!("expected `{sep}`"), end)),
            }
            let f = parse_formula_tokens(&toks[3..], end)
                .map_err(|e| syntax_error(e.description(), e.offset()))?;
            Ok(if kw == "def" {
                Command::Def { name, body: f }
            } else {
                Command::LemmaHeader { name, statement: f }
            })
        }
        "proof" => bare(Command::ProofOpen),
        "qed" => bare(Command::Qed),
        "intro" => named(ProofStep::Intro),
        "exact" => named(ProofStep::Exact),
        "apply" => named(ProofStep::Apply),
        "cases" => named(ProofStep::Cases),
        "by_contra" => named(ProofStep::ByContra),
        "split" => bare(Command::Step(ProofStep::Split)),
        "left" => bare(Command::Step(ProofStep::Left)),
        "right" => bare(Command::Step(ProofStep::Right)),
        "exfalso" => bare(Command::Step(ProofStep::Exfalso)),
        "search" => match toks.get(1) {
            Some(Token {
                kind: TokenKind::Number(d),
                offset,
            }) => {
                if *d == 0 || *d > u32::MAX as u64 {
                    return Err(syntax_error("search depth must be a positive count", *offset));
                }
                expect_len(2)?;
                Ok(Command::Step(ProofStep::Search(*d as u32)))
            }
            Some(t) => Err(syntax_error("expected depth", t.offset)),
            None => Err(syntax_error("expected depth", end)),
        },
        _ => Err(syntax_error("unknown command", first.offset)),
    }
}

/// Canonical token form of a span: comments dropped, tokens separated by
/// single spaces. This is what gets content-hashed.
pub fn normalize(span: &SpanText) -> String {
    normalize_text(&span.raw)
}

pub fn normalize_text(raw: &str) -> String {
    let toks = lex(raw);
    let mut out = String::with_capacity(raw.len());
    for (i, t) in toks.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(&t.kind.to_string());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f(s: &str) -> Formula {
        parse_formula(s).unwrap()
    }

    #[test]
    fn formula_associativity_and_precedence() {
        let (p, q, r) = (Formula::atom("p"), Formula::atom("q"), Formula::atom("r"));
        assert_eq!(
            f("p -> q -> p"),
            Formula::imp(p.clone(), Formula::imp(q.clone(), p.clone()))
        );
        assert_eq!(
            f("~p \\/ q /\\ r"),
            Formula::or(Formula::not(p.clone()), Formula::and(q.clone(), r.clone()))
        );
        assert_eq!(
            f("p /\\ q /\\ r"),
            Formula::and(Formula::and(p.clone(), q.clone()), r.clone())
        );
        assert_eq!(f("~p"), Formula::imp(p, Formula::False));
    }

    #[test]
    fn formula_errors_carry_offsets() {
        assert_eq!(
            parse_formula("p ->"),
            Err(FormulaError::ExpectedFormula { offset: 4 })
        );
        assert_eq!(
            parse_formula("(p -> q"),
            Err(FormulaError::UnbalancedParen { offset: 0 })
        );
        assert_eq!(
            parse_formula("p)"),
            Err(FormulaError::UnbalancedParen { offset: 1 })
        );
        assert_eq!(
            parse_formula("p q"),
            Err(FormulaError::UnexpectedToken { offset: 2 })
        );
    }

    #[test]
    fn splitting() {
        let s = split_spans("def a := p. lemma t : p -> p.");
        assert_eq!(s.len(), 2);
        assert_eq!(s[1].raw, "lemma t : p -> p.");

        let s = split_spans("(* note *) qed.");
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].raw, "(* note *) qed.");

        let s = split_spans("lemma x : p");
        assert_eq!(s.len(), 1);
        assert!(!s[0].terminated);
    }

    #[test]
    fn dots_inside_nested_comments_do_not_terminate() {
        let s = split_spans("(* a. (* b. *) c. *) qed. proof.");
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].raw, "(* a. (* b. *) c. *) qed.");
    }

    #[test]
    fn trailing_comment_folds_into_last_span() {
        let text = "qed.  (* trailing *)\n";
        let s = split_spans(text);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].raw, "qed.  (* trailing *)");
        assert_eq!(normalize(&s[0]), "qed .");
    }

    #[test]
    fn commands() {
        let c = |s: &str| parse_command(&SpanText::new(s));
        assert_eq!(
            c("def a := p /\\ q."),
            Command::Def {
                name: "a".into(),
                body: f("p /\\ q")
            }
        );
        assert_eq!(c("search 3."), Command::Step(ProofStep::Search(3)));
        assert!(matches!(
            c("lemma : p."),
            Command::SyntaxError { ref message, offset: 6 } if message == "expected name"
        ));
        assert!(matches!(c("search 0."), Command::SyntaxError { .. }));
        assert!(matches!(c("intro h k."), Command::SyntaxError { .. }));
        assert!(matches!(c("frobnicate."), Command::SyntaxError { .. }));
        assert!(matches!(
            parse_command(&split_spans("lemma x : p")[0]),
            Command::SyntaxError { ref message, .. } if message == "unterminated command"
        ));
        assert_eq!(c("(* c *) qed."), Command::Qed);
        assert_eq!(c("by_contra h."), Command::Step(ProofStep::ByContra("h".into())));
    }

    #[test]
    fn normal_forms() {
        let n = |s: &str| normalize(&SpanText::new(s));
        assert_eq!(n("intro   h."), "intro h .");
        assert_eq!(n("intro h."), "intro h .");
        assert_eq!(n("(*x*) qed."), "qed .");
        assert_ne!(n("exact h1."), n("exact h2."));
        assert_eq!(n("lemma t:p->q."), n("lemma t : p -> q ."));
    }
}
