use num_traits::ToPrimitive;

use super::ast::*;
use super::lexer::{Token, TokenKind};
use super::FrontendError;
use crate::values::{BinOp, UnOp};

type PResult<T> = Result<T, FrontendError>;

pub(super) struct Parser<'t> {
    toks: &'t [Token],
    pos: usize,
}

impl<'t> Parser<'t> {
    pub(super) fn new(toks: &'t [Token]) -> Self {
        Parser { toks, pos: 0 }
    }

    fn peek(&self) -> &'t Token {
        &self.toks[self.pos.min(self.toks.len() - 1)]
    }

    fn peek_at(&self, k: usize) -> &'t Token {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)]
    }

    fn advance(&mut self) -> &'t Token {
        let t = self.peek();
        if t.kind != TokenKind::Eof {
            self.pos += 1;
        }
        t
    }

    fn prev_span(&self) -> Span {
        self.toks[self.pos.saturating_sub(1)].span
    }

    fn fail<T>(&self, expected: &[&str]) -> PResult<T> {
        let t = self.peek();
        Err(FrontendError::Parse {
            span: t.span,
            found: t.to_string(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
        })
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if self.peek().is_punct(p) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn eat_keyword(&mut self, k: &str) -> bool {
        if self.peek().is_keyword(k) {
            self.advance();
            true
        } else {
            false
        }
    }

    /// Contextual words (`fields`, `reads`, `type`, ...) lex as identifiers.
    fn eat_word(&mut self, w: &str) -> bool {
        if self.peek().is(TokenKind::Ident, w) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn punct(&mut self, p: &str) -> PResult<Span> {
        if self.peek().is_punct(p) {
            Ok(self.advance().span)
        } else {
            self.fail(&[&format!("'{p}'")])
        }
    }

    fn keyword(&mut self, k: &str) -> PResult<Span> {
        if self.peek().is_keyword(k) {
            Ok(self.advance().span)
        } else {
            self.fail(&[&format!("'{k}'")])
        }
    }

    fn word(&mut self, w: &str) -> PResult<Span> {
        if self.peek().is(TokenKind::Ident, w) {
            Ok(self.advance().span)
        } else {
            self.fail(&[&format!("'{w}'")])
        }
    }

    fn ident(&mut self) -> PResult<Ident> {
        let t = self.peek();
        if t.kind == TokenKind::Ident {
            self.advance();
            Ok(Ident { name: t.text.clone(), span: t.span })
        } else {
            self.fail(&["identifier"])
        }
    }

    /// Identifier or keyword, for positions such as field names.
    fn name_like(&mut self) -> PResult<Ident> {
        let t = self.peek();
        if matches!(t.kind, TokenKind::Ident | TokenKind::Keyword) {
            self.advance();
            Ok(Ident { name: t.text.clone(), span: t.span })
        } else {
            self.fail(&["identifier"])
        }
    }

    fn uint(&mut self) -> PResult<u32> {
        let t = self.peek();
        if t.kind == TokenKind::Int {
            if let Some(v) = t.value.as_ref().and_then(|v| v.to_u32()) {
                self.advance();
                return Ok(v);
            }
        }
        self.fail(&["integer"])
    }

    fn const_expr(&mut self) -> PResult<ConstExpr> {
        let negative = self.eat_punct("-");
        let t = self.peek();
        if !matches!(t.kind, TokenKind::Int | TokenKind::WidthInt) {
            return self.fail(&["integer"]);
        }
        self.advance();
        Ok(ConstExpr {
            value: t.value.clone().unwrap_or_default(),
            width: t.width,
            sign: if negative { SignMarker::NegativeLiteral } else { SignMarker::Plain },
        })
    }

    pub(super) fn program(&mut self) -> PResult<SyntaxTree> {
        let mut declarations = Vec::new();
        loop {
            while self.eat_punct(";") {}
            if self.peek().kind == TokenKind::Eof {
                return Ok(SyntaxTree { declarations });
            }
            declarations.push(self.declaration()?);
        }
    }

    fn declaration(&mut self) -> PResult<Declaration> {
        let start = self.peek().span;
        let t = self.peek();
        if t.kind != TokenKind::Keyword {
            return self.fail(&["declaration"]);
        }
        let kind = match t.text.as_str() {
            "header_type" => DeclKind::HeaderType(self.header_type()?),
            "header" => {
                self.advance();
                DeclKind::Header(self.instance(false)?)
            }
            "metadata" => {
                self.advance();
                DeclKind::Metadata(self.instance(true)?)
            }
            "parser" => DeclKind::ParserState(self.parser_state()?),
            "parser_exception" => DeclKind::ParserException(self.parser_exception()?),
            "action" => DeclKind::Action(self.action()?),
            "table" => DeclKind::Table(self.table()?),
            "control" => DeclKind::Control(self.control()?),
            "field_list" => DeclKind::FieldList(self.field_list()?),
            "field_list_calculation" => DeclKind::FieldListCalculation(self.field_list_calc()?),
            "calculated_field" => DeclKind::CalculatedField(self.calculated_field()?),
            "counter" => DeclKind::Counter(self.counter()?),
            "meter" => DeclKind::Meter(self.meter()?),
            "register" => DeclKind::Register(self.register()?),
            _ => return self.fail(&["declaration"]),
        };
        Ok(Declaration { kind, span: start.to(self.prev_span()) })
    }

    fn header_type(&mut self) -> PResult<HeaderTypeDecl> {
        self.keyword("header_type")?;
        let name = self.ident()?;
        self.punct("{")?;
        self.word("fields")?;
        self.punct("{")?;
        let mut fields = Vec::new();
        while !self.eat_punct("}") {
            let fname = self.name_like()?;
            self.punct(":")?;
            let width = if self.eat_punct("*") {
                FieldWidth::Varbit
            } else {
                FieldWidth::Fixed(self.uint()?)
            };
            let (mut signed, mut saturating) = (false, false);
            if self.eat_punct("(") {
                loop {
                    let attr = self.ident()?;
                    match attr.name.as_str() {
                        "signed" => signed = true,
                        "saturating" => saturating = true,
                        _ => {
                            self.pos -= 1;
                            return self.fail(&["'signed'", "'saturating'"]);
                        }
                    }
                    if !self.eat_punct(",") {
                        break;
                    }
                }
                self.punct(")")?;
            }
            self.punct(";")?;
            fields.push(FieldDecl { name: fname, width, signed, saturating });
        }
        let mut length = None;
        let mut max_length = None;
        while !self.eat_punct("}") {
            if self.eat_word("length") {
                self.punct(":")?;
                length = Some(self.expr()?);
            } else if self.eat_word("max_length") {
                self.punct(":")?;
                max_length = Some(self.uint()?);
            } else {
                return self.fail(&["'length'", "'max_length'", "'}'"]);
            }
            self.punct(";")?;
        }
        Ok(HeaderTypeDecl { name, fields, length, max_length })
    }

    fn instance(&mut self, metadata: bool) -> PResult<InstanceDecl> {
        let type_name = self.ident()?;
        let name = self.ident()?;
        let mut stack_size = None;
        if !metadata && self.eat_punct("[") {
            stack_size = Some(self.uint()?);
            self.punct("]")?;
        }
        let mut initializer = Vec::new();
        if metadata && self.eat_punct("{") {
            while !self.eat_punct("}") {
                let f = self.name_like()?;
                self.punct(":")?;
                let e = self.expr()?;
                self.punct(";")?;
                initializer.push((f, e));
            }
            self.eat_punct(";");
        } else {
            self.punct(";")?;
        }
        Ok(InstanceDecl { type_name, name, stack_size, initializer })
    }

    fn header_ref(&mut self) -> PResult<HeaderRef> {
        let start = self.peek().span;
        let instance = if self.peek().is_keyword("latest") {
            let t = self.advance();
            Ident { name: t.text.clone(), span: t.span }
        } else {
            self.ident()?
        };
        let mut index = None;
        if self.eat_punct("[") {
            index = Some(if self.eat_keyword("next") {
                StackIndex::Next
            } else if self.eat_keyword("last") {
                StackIndex::Last
            } else {
                StackIndex::Const(self.uint()?)
            });
            self.punct("]")?;
        }
        Ok(HeaderRef { instance, index, span: start.to(self.prev_span()) })
    }

    fn field_ref(&mut self) -> PResult<FieldRef> {
        let header = self.header_ref()?;
        self.punct(".")?;
        let field = self.name_like()?;
        let span = header.span.to(field.span);
        Ok(FieldRef { header, field, span })
    }

    fn parser_state(&mut self) -> PResult<ParserStateDecl> {
        self.keyword("parser")?;
        let name = self.ident()?;
        self.punct("{")?;
        let mut body = Vec::new();
        loop {
            if self.eat_keyword("extract") {
                self.punct("(")?;
                let h = self.header_ref()?;
                self.punct(")")?;
                self.punct(";")?;
                body.push(ParserStmt::Extract(h));
            } else if self.eat_keyword("set_metadata") {
                self.punct("(")?;
                let f = self.field_ref()?;
                self.punct(",")?;
                let e = self.expr()?;
                self.punct(")")?;
                self.punct(";")?;
                body.push(ParserStmt::SetMetadata(f, e));
            } else {
                break;
            }
        }
        if !self.peek().is_keyword("return") {
            return self.fail(&["'extract'", "'set_metadata'", "'return'"]);
        }
        self.advance();
        let ret = if self.eat_keyword("select") {
            self.punct("(")?;
            let mut keys = Vec::new();
            loop {
                if self.eat_keyword("current") {
                    self.punct("(")?;
                    let offset = self.uint()?;
                    self.punct(",")?;
                    let width = self.uint()?;
                    self.punct(")")?;
                    keys.push(SelectKey::Current { offset, width });
                } else {
                    keys.push(SelectKey::Field(self.field_ref()?));
                }
                if !self.eat_punct(",") {
                    break;
                }
            }
            self.punct(")")?;
            self.punct("{")?;
            let mut cases = Vec::new();
            while !self.eat_punct("}") {
                let start = self.peek().span;
                let mut values = Vec::new();
                if !self.eat_keyword("default") {
                    loop {
                        let value = self.const_expr()?;
                        let mask = if self.eat_keyword("mask") { Some(self.const_expr()?) } else { None };
                        values.push(CaseValue { value, mask });
                        if !self.eat_punct(",") {
                            break;
                        }
                    }
                }
                self.punct(":")?;
                let target = self.return_target()?;
                self.punct(";")?;
                cases.push(SelectCase { values, target, span: start.to(self.prev_span()) });
            }
            ParserReturn::Select { keys, cases }
        } else {
            let t = self.return_target()?;
            self.punct(";")?;
            ParserReturn::Direct(t)
        };
        self.punct("}")?;
        Ok(ParserStateDecl { name, body, ret })
    }

    fn return_target(&mut self) -> PResult<ReturnTarget> {
        if self.eat_keyword("parse_error") {
            Ok(ReturnTarget::ParseError(self.ident()?))
        } else {
            Ok(ReturnTarget::Name(self.ident()?))
        }
    }

    fn parser_exception(&mut self) -> PResult<ParserExceptionDecl> {
        self.keyword("parser_exception")?;
        let name = self.ident()?;
        self.punct("{")?;
        let mut body = Vec::new();
        while self.eat_keyword("set_metadata") {
            self.punct("(")?;
            let f = self.field_ref()?;
            self.punct(",")?;
            let e = self.expr()?;
            self.punct(")")?;
            self.punct(";")?;
            body.push((f, e));
        }
        let ret = if self.eat_keyword("parser_drop") {
            ExceptionReturn::Drop
        } else if self.eat_keyword("return") {
            ExceptionReturn::Control(self.ident()?)
        } else {
            return self.fail(&["'set_metadata'", "'return'", "'parser_drop'"]);
        };
        self.punct(";")?;
        self.punct("}")?;
        Ok(ParserExceptionDecl { name, body, ret })
    }

    fn action(&mut self) -> PResult<ActionDecl> {
        self.keyword("action")?;
        let name = self.ident()?;
        self.punct("(")?;
        let mut params = Vec::new();
        if !self.eat_punct(")") {
            loop {
                params.push(self.ident()?);
                if !self.eat_punct(",") {
                    break;
                }
            }
            self.punct(")")?;
        }
        self.punct("{")?;
        let mut body = Vec::new();
        while !self.eat_punct("}") {
            let callee = self.ident()?;
            self.punct("(")?;
            let mut args = Vec::new();
            if !self.eat_punct(")") {
                loop {
                    args.push(self.expr()?);
                    if !self.eat_punct(",") {
                        break;
                    }
                }
                self.punct(")")?;
            }
            self.punct(";")?;
            let span = callee.span.to(self.prev_span());
            body.push(ActionCall { name: callee, args, span });
        }
        Ok(ActionDecl { name, params, body })
    }

    fn table(&mut self) -> PResult<TableDecl> {
        self.keyword("table")?;
        let name = self.ident()?;
        self.punct("{")?;
        let mut reads = Vec::new();
        let mut actions = Vec::new();
        let mut properties = Vec::new();
        let mut saw_actions = false;
        while !self.eat_punct("}") {
            if self.eat_word("reads") {
                self.punct("{")?;
                while !self.eat_punct("}") {
                    let start = self.peek().span;
                    let target = if self.peek().is_keyword("valid") && self.peek_at(1).is_punct("(") {
                        self.advance();
                        self.advance();
                        let h = self.header_ref()?;
                        self.punct(")")?;
                        ReadTarget::Header(h)
                    } else if self.peek_at(1).is_punct(".")
                        || (self.peek_at(1).is_punct("[") && self.peek_at(4).is_punct("."))
                    {
                        ReadTarget::Field(self.field_ref()?)
                    } else {
                        ReadTarget::Header(self.header_ref()?)
                    };
                    let mask = if self.eat_keyword("mask") { Some(self.const_expr()?) } else { None };
                    self.punct(":")?;
                    let kind = self.name_like()?;
                    self.punct(";")?;
                    reads.push(ReadDecl { target, mask, kind, span: start.to(self.prev_span()) });
                }
            } else if self.eat_word("actions") {
                saw_actions = true;
                self.punct("{")?;
                while !self.eat_punct("}") {
                    actions.push(self.ident()?);
                    self.punct(";")?;
                }
            } else if self.peek().kind == TokenKind::Ident && self.peek_at(1).is_punct(":") {
                let key = self.ident()?;
                self.punct(":")?;
                let v = self.expr()?;
                self.punct(";")?;
                properties.push((key, v));
            } else if self.peek().kind == TokenKind::Ident && self.peek_at(1).is_punct(";") {
                let key = self.ident()?;
                self.punct(";")?;
                properties.push((key.clone(), Expr { kind: ExprKind::Bool(true), span: key.span }));
            } else {
                return self.fail(&["'reads'", "'actions'", "table property", "'}'"]);
            }
        }
        if !saw_actions {
            return self.fail(&["'actions'"]);
        }
        Ok(TableDecl { name, reads, actions, properties })
    }

    fn control(&mut self) -> PResult<ControlDecl> {
        self.keyword("control")?;
        let name = self.ident()?;
        let body = self.block()?;
        Ok(ControlDecl { name, body })
    }

    fn block(&mut self) -> PResult<Vec<ControlStmt>> {
        self.punct("{")?;
        let mut out = Vec::new();
        while !self.eat_punct("}") {
            out.push(self.control_stmt()?);
        }
        Ok(out)
    }

    fn control_stmt(&mut self) -> PResult<ControlStmt> {
        let start = self.peek().span;
        if self.eat_keyword("apply") {
            self.punct("(")?;
            let table = self.ident()?;
            self.punct(")")?;
            let mut cases = Vec::new();
            if !self.eat_punct(";") {
                self.punct("{")?;
                while !self.eat_punct("}") {
                    let label = if self.eat_keyword("hit") {
                        CaseLabel::Hit
                    } else if self.eat_keyword("miss") {
                        CaseLabel::Miss
                    } else if self.eat_keyword("default") {
                        CaseLabel::Default
                    } else {
                        CaseLabel::Action(self.ident()?)
                    };
                    let body = self.block()?;
                    cases.push((label, body));
                }
            }
            return Ok(ControlStmt::Apply { table, cases, span: start.to(self.prev_span()) });
        }
        if self.eat_keyword("if") {
            self.punct("(")?;
            let cond = self.expr()?;
            self.punct(")")?;
            let then = self.block()?;
            let otherwise = if self.eat_keyword("else") {
                if self.peek().is_keyword("if") {
                    vec![self.control_stmt()?]
                } else {
                    self.block()?
                }
            } else {
                Vec::new()
            };
            return Ok(ControlStmt::If { cond, then, otherwise, span: start.to(self.prev_span()) });
        }
        if self.peek().kind == TokenKind::Ident {
            let name = self.ident()?;
            self.punct("(")?;
            self.punct(")")?;
            self.punct(";")?;
            return Ok(ControlStmt::Call { name, span: start.to(self.prev_span()) });
        }
        self.fail(&["'apply'", "'if'", "control function call", "'}'"])
    }

    fn field_list(&mut self) -> PResult<FieldListDecl> {
        self.keyword("field_list")?;
        let name = self.ident()?;
        self.punct("{")?;
        let mut entries = Vec::new();
        while !self.eat_punct("}") {
            let t = self.peek();
            let entry = if t.is_keyword("payload") {
                self.advance();
                FieldListEntry::Payload(t.span)
            } else if matches!(t.kind, TokenKind::Int | TokenKind::WidthInt) || t.is_punct("-") {
                FieldListEntry::Const(self.const_expr()?)
            } else {
                let h = self.header_ref()?;
                if self.eat_punct(".") {
                    let field = self.name_like()?;
                    let span = h.span.to(field.span);
                    FieldListEntry::Field(FieldRef { header: h, field, span })
                } else {
                    FieldListEntry::Header(h)
                }
            };
            self.punct(";")?;
            entries.push(entry);
        }
        Ok(FieldListDecl { name, entries })
    }

    fn field_list_calc(&mut self) -> PResult<FieldListCalcDecl> {
        self.keyword("field_list_calculation")?;
        let name = self.ident()?;
        self.punct("{")?;
        let mut inputs = Vec::new();
        let mut algorithm = None;
        let mut output_width = None;
        while !self.eat_punct("}") {
            if self.eat_word("input") {
                self.punct("{")?;
                while !self.eat_punct("}") {
                    inputs.push(self.ident()?);
                    self.punct(";")?;
                }
            } else if self.eat_word("algorithm") {
                self.punct(":")?;
                algorithm = Some(self.ident()?);
                self.punct(";")?;
            } else if self.eat_word("output_width") {
                self.punct(":")?;
                output_width = Some(self.uint()?);
                self.punct(";")?;
            } else {
                return self.fail(&["'input'", "'algorithm'", "'output_width'", "'}'"]);
            }
        }
        let Some(algorithm) = algorithm else { return self.fail(&["'algorithm'"]) };
        let Some(output_width) = output_width else { return self.fail(&["'output_width'"]) };
        Ok(FieldListCalcDecl { name, inputs, algorithm, output_width })
    }

    fn calculated_field(&mut self) -> PResult<CalculatedFieldDecl> {
        self.keyword("calculated_field")?;
        let field = self.field_ref()?;
        self.punct("{")?;
        let mut clauses = Vec::new();
        while !self.eat_punct("}") {
            let kind = if self.eat_word("verify") {
                CalcKind::Verify
            } else if self.eat_word("update") {
                CalcKind::Update
            } else {
                return self.fail(&["'verify'", "'update'", "'}'"]);
            };
            let calculation = self.ident()?;
            let condition = if self.eat_keyword("if") {
                self.punct("(")?;
                let e = self.expr()?;
                self.punct(")")?;
                Some(e)
            } else {
                None
            };
            self.punct(";")?;
            clauses.push(CalcClause { kind, calculation, condition });
        }
        Ok(CalculatedFieldDecl { field, clauses })
    }

    fn binding(&mut self) -> PResult<Option<Binding>> {
        if self.eat_word("direct") {
            self.punct(":")?;
            let t = self.ident()?;
            self.punct(";")?;
            Ok(Some(Binding::Direct(t)))
        } else if self.eat_word("static") {
            self.punct(":")?;
            let t = self.ident()?;
            self.punct(";")?;
            Ok(Some(Binding::Static(t)))
        } else {
            Ok(None)
        }
    }

    fn counter(&mut self) -> PResult<CounterDecl> {
        self.keyword("counter")?;
        let name = self.ident()?;
        self.punct("{")?;
        let mut decl = CounterDecl {
            name,
            kind: Ident::new("packets"),
            binding: None,
            instance_count: None,
            min_width: None,
            saturating: false,
        };
        while !self.eat_punct("}") {
            if let Some(b) = self.binding()? {
                decl.binding = Some(b);
                continue;
            }
            if self.eat_word("type") {
                self.punct(":")?;
                decl.kind = self.ident()?;
            } else if self.eat_word("instance_count") {
                self.punct(":")?;
                decl.instance_count = Some(self.uint()?);
            } else if self.eat_word("min_width") {
                self.punct(":")?;
                decl.min_width = Some(self.uint()?);
            } else if self.eat_word("saturating") {
                decl.saturating = true;
            } else {
                return self.fail(&["counter attribute", "'}'"]);
            }
            self.punct(";")?;
        }
        Ok(decl)
    }

    fn meter(&mut self) -> PResult<MeterDecl> {
        self.keyword("meter")?;
        let name = self.ident()?;
        self.punct("{")?;
        let mut decl = MeterDecl { name, kind: Ident::new("packets"), binding: None, instance_count: None, result: None };
        while !self.eat_punct("}") {
            if let Some(b) = self.binding()? {
                decl.binding = Some(b);
                continue;
            }
            if self.eat_word("type") {
                self.punct(":")?;
                decl.kind = self.ident()?;
            } else if self.eat_word("instance_count") {
                self.punct(":")?;
                decl.instance_count = Some(self.uint()?);
            } else if self.eat_word("result") {
                self.punct(":")?;
                decl.result = Some(self.field_ref()?);
            } else {
                return self.fail(&["meter attribute", "'}'"]);
            }
            self.punct(";")?;
        }
        Ok(decl)
    }

    fn register(&mut self) -> PResult<RegisterDecl> {
        self.keyword("register")?;
        let name = self.ident()?;
        self.punct("{")?;
        let mut decl =
            RegisterDecl { name, width: None, layout: None, binding: None, instance_count: None, attributes: Vec::new() };
        while !self.eat_punct("}") {
            if let Some(b) = self.binding()? {
                decl.binding = Some(b);
                continue;
            }
            if self.eat_word("width") {
                self.punct(":")?;
                decl.width = Some(self.uint()?);
            } else if self.eat_word("layout") {
                self.punct(":")?;
                decl.layout = Some(self.ident()?);
            } else if self.eat_word("instance_count") {
                self.punct(":")?;
                decl.instance_count = Some(self.uint()?);
            } else if self.eat_word("attributes") {
                self.punct(":")?;
                loop {
                    decl.attributes.push(self.ident()?);
                    if !self.eat_punct(",") {
                        break;
                    }
                }
            } else {
                return self.fail(&["register attribute", "'}'"]);
            }
            self.punct(";")?;
        }
        Ok(decl)
    }

    // Expressions, lowest precedence first.

    pub(super) fn expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.and_expr()?;
        while self.eat_keyword("or") {
            let rhs = self.and_expr()?;
            let span = lhs.span.to(rhs.span);
            lhs = Expr { kind: ExprKind::Or(Box::new(lhs), Box::new(rhs)), span };
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.not_expr()?;
        while self.eat_keyword("and") {
            let rhs = self.not_expr()?;
            let span = lhs.span.to(rhs.span);
            lhs = Expr { kind: ExprKind::And(Box::new(lhs), Box::new(rhs)), span };
        }
        Ok(lhs)
    }

    fn not_expr(&mut self) -> PResult<Expr> {
        let start = self.peek().span;
        if self.eat_keyword("not") {
            let inner = self.not_expr()?;
            let span = start.to(inner.span);
            return Ok(Expr { kind: ExprKind::Not(Box::new(inner)), span });
        }
        self.rel_expr()
    }

    fn rel_expr(&mut self) -> PResult<Expr> {
        let lhs = self.binary(0)?;
        let op = match self.peek().text.as_str() {
            "==" => BinOp::Eq,
            "!=" => BinOp::Ne,
            "<" => BinOp::Lt,
            "<=" => BinOp::Le,
            ">" => BinOp::Gt,
            ">=" => BinOp::Ge,
            _ => return Ok(lhs),
        };
        if self.peek().kind != TokenKind::Punct {
            return Ok(lhs);
        }
        self.advance();
        let rhs = self.binary(0)?;
        let span = lhs.span.to(rhs.span);
        Ok(Expr { kind: ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)), span })
    }

    /// Precedence levels: `|`, `^`, `&`, shifts, additive, multiplicative.
    fn binary(&mut self, level: usize) -> PResult<Expr> {
        const LEVELS: &[&[(&str, BinOp)]] = &[
            &[("|", BinOp::Or)],
            &[("^", BinOp::Xor)],
            &[("&", BinOp::And)],
            &[("<<", BinOp::Shl), (">>", BinOp::Shr)],
            &[("+", BinOp::Add), ("-", BinOp::Sub)],
            &[("*", BinOp::Mul)],
        ];
        if level == LEVELS.len() {
            return self.unary();
        }
        let mut lhs = self.binary(level + 1)?;
        loop {
            let t = self.peek();
            let Some(&(_, op)) = LEVELS[level].iter().find(|(p, _)| t.is_punct(p)) else {
                return Ok(lhs);
            };
            self.advance();
            let rhs = self.binary(level + 1)?;
            let span = lhs.span.to(rhs.span);
            lhs = Expr { kind: ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)), span };
        }
    }

    fn unary(&mut self) -> PResult<Expr> {
        let start = self.peek().span;
        if self.peek().is_punct("-") {
            let next = self.peek_at(1);
            if matches!(next.kind, TokenKind::Int | TokenKind::WidthInt) {
                let c = self.const_expr()?;
                return Ok(Expr { kind: ExprKind::Const(c), span: start.to(self.prev_span()) });
            }
            self.advance();
            let inner = self.unary()?;
            let span = start.to(inner.span);
            if let ExprKind::Const(c) = &inner.kind {
                if c.sign == SignMarker::Plain {
                    let c = ConstExpr { sign: SignMarker::NegatedExpression, ..c.clone() };
                    return Ok(Expr { kind: ExprKind::Const(c), span });
                }
            }
            return Ok(Expr { kind: ExprKind::Unary(UnOp::Neg, Box::new(inner)), span });
        }
        if self.eat_punct("~") {
            let inner = self.unary()?;
            let span = start.to(inner.span);
            return Ok(Expr { kind: ExprKind::Unary(UnOp::Not, Box::new(inner)), span });
        }
        self.primary()
    }

    fn primary(&mut self) -> PResult<Expr> {
        let t = self.peek();
        let start = t.span;
        match t.kind {
            TokenKind::Int | TokenKind::WidthInt => {
                let c = self.const_expr()?;
                Ok(Expr { kind: ExprKind::Const(c), span: start })
            }
            TokenKind::Punct if t.text == "(" => {
                self.advance();
                let e = self.expr()?;
                self.punct(")")?;
                Ok(Expr { span: start.to(self.prev_span()), ..e })
            }
            TokenKind::Keyword if t.text == "true" || t.text == "false" => {
                self.advance();
                Ok(Expr { kind: ExprKind::Bool(t.text == "true"), span: start })
            }
            TokenKind::Keyword if t.text == "valid" => {
                self.advance();
                self.punct("(")?;
                let h = self.header_ref()?;
                self.punct(")")?;
                Ok(Expr { kind: ExprKind::Valid(h), span: start.to(self.prev_span()) })
            }
            TokenKind::Ident | TokenKind::Keyword if t.kind == TokenKind::Ident || t.text == "latest" => {
                let h = self.header_ref()?;
                if self.eat_punct(".") {
                    let field = self.name_like()?;
                    let span = h.span.to(field.span);
                    return Ok(Expr { kind: ExprKind::Field(FieldRef { header: h, field, span }), span });
                }
                let span = h.span;
                if h.index.is_some() {
                    Ok(Expr { kind: ExprKind::Header(h), span })
                } else {
                    Ok(Expr { kind: ExprKind::Name(h.instance), span })
                }
            }
            _ => self.fail(&["expression"]),
        }
    }

    pub(super) fn at_eof(&self) -> bool {
        self.peek().kind == TokenKind::Eof
    }

    pub(super) fn expect_eof(&self) -> PResult<()> {
        if self.at_eof() {
            Ok(())
        } else {
            self.fail(&["end of input"])
        }
    }
}
