//! Lexing and parsing of P4-14 source.
//!
//! The grammar follows P4-14 v1.0.4. A `-` in prefix position directly
//! followed by an integer literal is a negative literal; a prefix `-` on
//! anything else (including a parenthesized literal) is negation; an infix
//! `-` is subtraction.

mod ast;
mod lexer;
mod parser;
mod printer;

pub use ast::*;
pub use lexer::{tokenize, Token, TokenKind, KEYWORDS};
pub use printer::{expr_text, print_program};

use std::collections::BTreeMap;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrontendError {
    #[error("LEX_ERROR at {span}: {message}")]
    Lex { span: Span, message: String },
    #[error("PARSE_ERROR at {span}: found {found}, expected {}", expected.join(" or "))]
    Parse { span: Span, found: String, expected: Vec<String> },
}

impl FrontendError {
    pub fn span(&self) -> Span {
        match self {
            FrontendError::Lex { span, .. } | FrontendError::Parse { span, .. } => *span,
        }
    }
}

/// Parses a full token stream (as produced by [`tokenize`]).
pub fn parse_program(tokens: &[Token]) -> Result<SyntaxTree, FrontendError> {
    if tokens.last().map(|t| t.kind) != Some(TokenKind::Eof) {
        return Err(FrontendError::Parse {
            span: tokens.last().map(|t| t.span).unwrap_or_default(),
            found: "truncated token stream".into(),
            expected: vec!["end of input".into()],
        });
    }
    parser::Parser::new(tokens).program()
}

pub fn parse_source(source: &str) -> Result<SyntaxTree, FrontendError> {
    parse_program(&tokenize(source)?)
}

/// Parses a standalone expression; prefix and infix minus are classified
/// by the rule in the module docs.
pub fn parse_expression(source: &str) -> Result<Expr, FrontendError> {
    let toks = tokenize(source)?;
    let mut p = parser::Parser::new(&toks);
    let e = p.expr()?;
    p.expect_eof()?;
    Ok(e)
}

/// How a minus sign in an expression was read.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MinusReading {
    /// A constant: negative literal, negated constant, or plain.
    Constant(ConstExpr),
    Negation(Box<Expr>),
    Subtraction(Box<Expr>, Box<Expr>),
    /// No minus at the top of the expression.
    Other,
}

pub fn classify_minus(expr: &Expr) -> MinusReading {
    match &expr.kind {
        ExprKind::Const(c) => MinusReading::Constant(c.clone()),
        ExprKind::Unary(crate::values::UnOp::Neg, x) => MinusReading::Negation(x.clone()),
        ExprKind::Binary(crate::values::BinOp::Sub, a, b) => MinusReading::Subtraction(a.clone(), b.clone()),
        _ => MinusReading::Other,
    }
}

impl SyntaxTree {
    /// Number of declarations per declaration keyword.
    pub fn counts(&self) -> BTreeMap<&'static str, usize> {
        let mut m = BTreeMap::new();
        for d in &self.declarations {
            *m.entry(d.kind.keyword()).or_insert(0) += 1;
        }
        m
    }
}
