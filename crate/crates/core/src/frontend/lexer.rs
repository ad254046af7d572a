use std::fmt;

use num_bigint::BigUint;
use num_traits::Num;

use super::ast::Span;
use super::FrontendError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TokenKind {
    Ident,
    Int,
    /// `8'255`, `8'0xFF`, or `8'w255`.
    WidthInt,
    Keyword,
    Punct,
    Eof,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
    pub span: Span,
    /// Literal value for `Int` / `WidthInt`.
    pub value: Option<BigUint>,
    pub width: Option<u32>,
}

impl Token {
    pub fn is(&self, kind: TokenKind, text: &str) -> bool {
        self.kind == kind && self.text == text
    }

    pub fn is_punct(&self, text: &str) -> bool {
        self.is(TokenKind::Punct, text)
    }

    pub fn is_keyword(&self, text: &str) -> bool {
        self.is(TokenKind::Keyword, text)
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            TokenKind::Eof => f.write_str("end of input"),
            _ => write!(f, "'{}'", self.text),
        }
    }
}

pub const KEYWORDS: &[&str] = &[
    "action",
    "and",
    "apply",
    "calculated_field",
    "control",
    "counter",
    "current",
    "default",
    "else",
    "extract",
    "false",
    "field_list",
    "field_list_calculation",
    "header",
    "header_type",
    "hit",
    "if",
    "last",
    "latest",
    "mask",
    "metadata",
    "meter",
    "miss",
    "next",
    "not",
    "or",
    "parse_error",
    "parser",
    "parser_drop",
    "parser_exception",
    "payload",
    "register",
    "return",
    "select",
    "set_metadata",
    "table",
    "true",
    "valid",
];

const PUNCT3: &[&str] = &["&&&"];
const PUNCT2: &[&str] = &["<<", ">>", "==", "!=", "<=", ">="];
const PUNCT1: &str = "{}()[];:,.+-*&|^~<>=#";

struct Lexer<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
    line: u32,
    col: u32,
}

impl<'a> Lexer<'a> {
    fn peek(&self, k: usize) -> Option<u8> {
        self.bytes.get(self.pos + k).copied()
    }

    fn bump(&mut self) {
        if self.bytes[self.pos] == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        self.pos += 1;
    }

    fn here(&self) -> Span {
        Span { line: self.line, column: self.col, offset: self.pos, len: 0 }
    }

    fn error(&self, span: Span, message: impl Into<String>) -> FrontendError {
        FrontendError::Lex { span, message: message.into() }
    }

    fn skip_trivia(&mut self) -> Result<(), FrontendError> {
        loop {
            match (self.peek(0), self.peek(1)) {
                (Some(c), _) if c.is_ascii_whitespace() => self.bump(),
                (Some(b'/'), Some(b'/')) => {
                    while self.peek(0).is_some_and(|c| c != b'\n') {
                        self.bump();
                    }
                }
                (Some(b'/'), Some(b'*')) => {
                    let start = self.here();
                    self.bump();
                    self.bump();
                    loop {
                        match (self.peek(0), self.peek(1)) {
                            (Some(b'*'), Some(b'/')) => {
                                self.bump();
                                self.bump();
                                break;
                            }
                            (Some(_), _) => self.bump(),
                            (None, _) => return Err(self.error(start, "unterminated comment")),
                        }
                    }
                }
                (Some(b'@'), _) if self.src[self.pos..].starts_with("@pragma") => {
                    // Pragmas are not interpreted.
                    while self.peek(0).is_some_and(|c| c != b'\n') {
                        self.bump();
                    }
                }
                _ => return Ok(()),
            }
        }
    }

    fn digits(&mut self) {
        while self.peek(0).is_some_and(|c| c.is_ascii_alphanumeric() || c == b'_') {
            self.bump();
        }
    }

    fn number(&mut self, start: Span) -> Result<Token, FrontendError> {
        self.digits();
        let mut width = None;
        let mut body_start = start.offset;
        if self.peek(0) == Some(b'\'') {
            let w = &self.src[start.offset..self.pos];
            let w: u32 = w
                .parse()
                .map_err(|_| self.error(start, format!("bad width prefix '{w}'")))?;
            if w == 0 {
                return Err(self.error(start, "width prefix must be positive"));
            }
            width = Some(w);
            self.bump();
            if self.peek(0) == Some(b'w') {
                self.bump();
            }
            body_start = self.pos;
            if !self.peek(0).is_some_and(|c| c.is_ascii_digit()) {
                return Err(self.error(start, "expected digits after width prefix"));
            }
            self.digits();
        }
        let body: String = self.src[body_start..self.pos].chars().filter(|&c| c != '_').collect();
        let lower = body.to_ascii_lowercase();
        let (radix, digits) = if let Some(d) = lower.strip_prefix("0x") {
            (16, d)
        } else if let Some(d) = lower.strip_prefix("0b") {
            (2, d)
        } else if let Some(d) = lower.strip_prefix("0o") {
            (8, d)
        } else {
            (10, lower.as_str())
        };
        let span = Span { len: self.pos - start.offset, ..start };
        let value = BigUint::from_str_radix(digits, radix)
            .map_err(|_| self.error(span, format!("malformed integer '{}'", &self.src[start.offset..self.pos])))?;
        Ok(Token {
            kind: if width.is_some() { TokenKind::WidthInt } else { TokenKind::Int },
            text: self.src[start.offset..self.pos].to_string(),
            span,
            value: Some(value),
            width,
        })
    }

    fn next_token(&mut self) -> Result<Token, FrontendError> {
        self.skip_trivia()?;
        let start = self.here();
        let Some(c) = self.peek(0) else {
            return Ok(Token { kind: TokenKind::Eof, text: String::new(), span: start, value: None, width: None });
        };
        if c.is_ascii_digit() {
            return self.number(start);
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            while self.peek(0).is_some_and(|c| c.is_ascii_alphanumeric() || c == b'_') {
                self.bump();
            }
            let text = &self.src[start.offset..self.pos];
            let kind = if KEYWORDS.contains(&text) { TokenKind::Keyword } else { TokenKind::Ident };
            return Ok(Token {
                kind,
                text: text.to_string(),
                span: Span { len: text.len(), ..start },
                value: None,
                width: None,
            });
        }
        let rest = &self.src[self.pos..];
        let punct = PUNCT3
            .iter()
            .chain(PUNCT2)
            .find(|p| rest.starts_with(**p))
            .map(|p| p.len())
            .or_else(|| PUNCT1.as_bytes().contains(&c).then_some(1));
        match punct {
            Some(n) => {
                for _ in 0..n {
                    self.bump();
                }
                Ok(Token {
                    kind: TokenKind::Punct,
                    text: rest[..n].to_string(),
                    span: Span { len: n, ..start },
                    value: None,
                    width: None,
                })
            }
            None => {
                let ch = rest.chars().next().unwrap_or('?');
                Err(self.error(Span { len: ch.len_utf8(), ..start }, format!("unexpected character '{ch}'")))
            }
        }
    }
}

/// Splits P4 source into tokens, ending with an end-of-input token.
pub fn tokenize(source: &str) -> Result<Vec<Token>, FrontendError> {
    let mut lx = Lexer { src: source, bytes: source.as_bytes(), pos: 0, line: 1, col: 1 };
    let mut out = Vec::new();
    loop {
        let t = lx.next_token()?;
        let eof = t.kind == TokenKind::Eof;
        out.push(t);
        if eof {
            return Ok(out);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_type_fragment() {
        let src = "header_type h_t { fields { f1 : 8; } }";
        let toks = tokenize(src).unwrap();
        assert_eq!(toks.len(), 12);
        assert_eq!(toks[10].text, "}");
        assert_eq!(toks[11].kind, TokenKind::Eof);
        assert_eq!(toks[0].kind, TokenKind::Keyword);
        assert_eq!(toks[3].kind, TokenKind::Ident);
        for t in &toks {
            assert_eq!(&src[t.span.offset..t.span.offset + t.span.len], t.text);
        }
    }

    #[test]
    fn hex_literal() {
        let toks = tokenize("0x0800").unwrap();
        assert_eq!(toks.len(), 2);
        assert_eq!(toks[0].kind, TokenKind::Int);
        assert_eq!(toks[0].value, Some(BigUint::from(2048u32)));
    }

    #[test]
    fn width_prefixed_literals() {
        for src in ["8'w255", "8'255", "8'0xFF", "8'0b1111_1111"] {
            let toks = tokenize(src).unwrap();
            assert_eq!(toks.len(), 2, "{src}");
            assert_eq!(toks[0].kind, TokenKind::WidthInt);
            assert_eq!(toks[0].width, Some(8));
            assert_eq!(toks[0].value, Some(BigUint::from(255u32)));
            assert_eq!(toks[0].text, src);
        }
    }

    #[test]
    fn comments_and_pragmas_are_dropped() {
        let toks = tokenize("// c\n/* x \n y */ @pragma foo bar\n a").unwrap();
        assert_eq!(toks.len(), 2);
        assert_eq!(toks[0].text, "a");
        assert_eq!(toks[0].span.line, 4);
    }

    #[test]
    fn lex_errors_carry_spans() {
        let err = tokenize("a $ b").unwrap_err();
        match err {
            FrontendError::Lex { span, .. } => assert_eq!((span.line, span.column), (1, 3)),
            other => panic!("{other:?}"),
        }
        assert!(tokenize("/* open").is_err());
        assert!(tokenize("0xZZ").is_err());
    }

    #[test]
    fn spans_are_ordered() {
        let src = "table t { reads { h.f : ternary; } actions { a; } }";
        let toks = tokenize(src).unwrap();
        for w in toks.windows(2) {
            assert!(w[0].span.offset + w[0].span.len <= w[1].span.offset);
        }
    }

    #[test]
    fn ternary_punctuation() {
        let toks = tokenize("1&&&2 << 3").unwrap();
        let texts: Vec<_> = toks.iter().map(|t| t.text.as_str()).collect();
        assert_eq!(texts, ["1", "&&&", "2", "<<", "3", ""]);
    }
}
