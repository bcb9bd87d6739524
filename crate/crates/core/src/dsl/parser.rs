//! Recursive-descent parser and canonical unparser for factor formulas.
//!
//! Precedence, loosest to tightest: `?:`, `||`, `&&`, comparisons,
//! `+ -`, `* /`, `^` (right-associative), unary `-`, atoms. The unparser
//! emits fully parenthesized text, so `parse(unparse(ast))` is structurally
//! equal to `ast` for every valid tree.

use super::lexer::{lex, Tok, Token};
use super::{BinOp, Builtin, FactorExpr, FieldRef};
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
#[error("parse error at offset {offset}: {message}")]
pub struct ParseError {
    pub offset: usize,
    pub message: String,
}

impl ParseError {
    pub(super) fn new(offset: usize, message: impl Into<String>) -> Self {
        ParseError { offset, message: message.into() }
    }
}

/// Parse one formula into an AST, arity- and window-checked.
pub fn parse_alpha(source: &str) -> Result<FactorExpr, ParseError> {
    let tokens = lex(source)?;
    let mut parser = Parser { tokens, pos: 0, source_len: source.len() };
    let expr = parser.ternary()?;
    if let Some(tok) = parser.peek() {
        return Err(ParseError::new(tok.offset, "unexpected trailing input"));
    }
    Ok(expr)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    source_len: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn eof_offset(&self) -> usize {
        self.source_len
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<usize, ParseError> {
        match self.next() {
            Some(t) if t.tok == tok => Ok(t.offset),
            Some(t) => Err(ParseError::new(t.offset, format!("expected {what}"))),
            None => Err(ParseError::new(self.eof_offset(), format!("unexpected end of input, expected {what}"))),
        }
    }

    fn ternary(&mut self) -> Result<FactorExpr, ParseError> {
        let cond = self.or()?;
        if matches!(self.peek(), Some(t) if t.tok == Tok::Question) {
            self.next();
            let then = self.ternary()?;
            self.expect(Tok::Colon, "`:`")?;
            let otherwise = self.ternary()?;
            return Ok(FactorExpr::Ternary {
                cond: Box::new(cond),
                then: Box::new(then),
                otherwise: Box::new(otherwise),
            });
        }
        Ok(cond)
    }

    fn or(&mut self) -> Result<FactorExpr, ParseError> {
        let mut lhs = self.and()?;
        while matches!(self.peek(), Some(t) if t.tok == Tok::OrOr) {
            self.next();
            let rhs = self.and()?;
            lhs = binary(BinOp::Or, lhs, rhs);
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<FactorExpr, ParseError> {
        let mut lhs = self.comparison()?;
        while matches!(self.peek(), Some(t) if t.tok == Tok::AndAnd) {
            self.next();
            let rhs = self.comparison()?;
            lhs = binary(BinOp::And, lhs, rhs);
        }
        Ok(lhs)
    }

    fn comparison(&mut self) -> Result<FactorExpr, ParseError> {
        let mut lhs = self.additive()?;
        loop {
            let op = match self.peek().map(|t| &t.tok) {
                Some(Tok::Lt) => BinOp::Lt,
                Some(Tok::Le) => BinOp::Le,
                Some(Tok::Gt) => BinOp::Gt,
                Some(Tok::Ge) => BinOp::Ge,
                Some(Tok::EqEq) => BinOp::Eq,
                Some(Tok::Ne) => BinOp::Ne,
                _ => break,
            };
            self.next();
            let rhs = self.additive()?;
            lhs = binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn additive(&mut self) -> Result<FactorExpr, ParseError> {
        let mut lhs = self.multiplicative()?;
        loop {
            let op = match self.peek().map(|t| &t.tok) {
                Some(Tok::Plus) => BinOp::Add,
                Some(Tok::Minus) => BinOp::Sub,
                _ => break,
            };
            self.next();
            let rhs = self.multiplicative()?;
            lhs = binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn multiplicative(&mut self) -> Result<FactorExpr, ParseError> {
        let mut lhs = self.power()?;
        loop {
            let op = match self.peek().map(|t| &t.tok) {
                Some(Tok::Star) => BinOp::Mul,
                Some(Tok::Slash) => BinOp::Div,
                _ => break,
            };
            self.next();
            let rhs = self.power()?;
            lhs = binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn power(&mut self) -> Result<FactorExpr, ParseError> {
        let base = self.unary()?;
        if matches!(self.peek(), Some(t) if t.tok == Tok::Caret) {
            self.next();
            let exp = self.power()?;
            return Ok(binary(BinOp::Pow, base, exp));
        }
        Ok(base)
    }

    fn unary(&mut self) -> Result<FactorExpr, ParseError> {
        if matches!(self.peek(), Some(t) if t.tok == Tok::Minus) {
            self.next();
            let inner = self.unary()?;
            return Ok(FactorExpr::Neg(Box::new(inner)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<FactorExpr, ParseError> {
        let token = self.next().ok_or_else(|| {
            ParseError::new(self.eof_offset(), "unexpected end of input, expected expression")
        })?;
        match token.tok {
            Tok::Num(value) => Ok(FactorExpr::Literal(value)),
            Tok::LParen => {
                let inner = self.ternary()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                if matches!(self.peek(), Some(t) if t.tok == Tok::LParen) {
                    self.next();
                    self.call(&name, token.offset)
                } else if let Some(field) = FieldRef::from_name(&name) {
                    Ok(FactorExpr::Field(field))
                } else {
                    Err(ParseError::new(token.offset, format!("unknown field `{name}`")))
                }
            }
            other => Err(ParseError::new(token.offset, format!("unexpected token `{other:?}`"))),
        }
    }

    fn call(&mut self, name: &str, name_offset: usize) -> Result<FactorExpr, ParseError> {
        let func = Builtin::from_name(name)
            .ok_or_else(|| ParseError::new(name_offset, format!("unknown function `{name}`")))?;
        let mut args = Vec::new();
        if matches!(self.peek(), Some(t) if t.tok == Tok::RParen) {
            self.next();
        } else {
            loop {
                args.push(self.ternary()?);
                match self.next() {
                    Some(t) if t.tok == Tok::Comma => continue,
                    Some(t) if t.tok == Tok::RParen => break,
                    Some(t) => return Err(ParseError::new(t.offset, "expected `,` or `)`")),
                    None => {
                        return Err(ParseError::new(
                            self.eof_offset(),
                            "unexpected end of input, expected `,` or `)`",
                        ))
                    }
                }
            }
        }
        let spec = func.spec();
        if args.len() != spec.arity {
            return Err(ParseError::new(
                name_offset,
                format!("`{name}` expects {} argument(s), got {}", spec.arity, args.len()),
            ));
        }
        let window = if spec.windowed {
            // Window is the trailing argument and must be a positive integer
            // literal; it is validated here and stored out-of-band.
            let last = args.pop().expect("windowed builtins have arity >= 1");
            match last {
                FactorExpr::Literal(v) if v.fract() == 0.0 && v >= 1.0 && v <= 10_000.0 => {
                    Some(v as usize)
                }
                _ => {
                    return Err(ParseError::new(
                        name_offset,
                        format!("`{name}` window argument must be a positive integer literal"),
                    ))
                }
            }
        } else {
            None
        };
        if func == Builtin::SignedPower {
            // Exponent occupies a scalar position.
            if !matches!(args[1], FactorExpr::Literal(_)) {
                return Err(ParseError::new(
                    name_offset,
                    "`signedpower` exponent must be a numeric literal",
                ));
            }
        }
        Ok(FactorExpr::Call { func, args, window })
    }
}

fn binary(op: BinOp, lhs: FactorExpr, rhs: FactorExpr) -> FactorExpr {
    FactorExpr::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs) }
}

/// Render an AST to canonical, fully parenthesized text that re-parses to a
/// structurally equal tree.
pub fn unparse(expr: &FactorExpr) -> String {
    match expr {
        FactorExpr::Field(field) => field.name().to_string(),
        FactorExpr::Literal(v) => format_literal(*v),
        FactorExpr::Neg(inner) => format!("(-{})", unparse(inner)),
        FactorExpr::Binary { op, lhs, rhs } => {
            format!("({} {} {})", unparse(lhs), op.symbol(), unparse(rhs))
        }
        FactorExpr::Ternary { cond, then, otherwise } => {
            format!("({} ? {} : {})", unparse(cond), unparse(then), unparse(otherwise))
        }
        FactorExpr::Call { func, args, window } => {
            let mut parts: Vec<String> = args.iter().map(unparse).collect();
            if let Some(w) = window {
                parts.push(w.to_string());
            }
            format!("{}({})", func.name(), parts.join(", "))
        }
    }
}

fn format_literal(v: f64) -> String {
    // `{}` prints the shortest text that round-trips to the same f64, so the
    // fixpoint property holds for literal payloads too.
    format!("{v}")
}
