//! Syntax tree for P4-14 programs.

use std::fmt;

use num_bigint::BigUint;

use crate::values::{BinOp, UnOp};

/// Source location. Spans never participate in equality, so trees built
/// from different layouts of the same program compare equal.
#[derive(Clone, Copy, Default)]
pub struct Span {
    pub line: u32,
    pub column: u32,
    pub offset: usize,
    pub len: usize,
}

impl Span {
    pub fn to(self, end: Span) -> Span {
        Span { len: (end.offset + end.len).saturating_sub(self.offset), ..self }
    }
}

impl PartialEq for Span {
    fn eq(&self, _: &Span) -> bool {
        true
    }
}

impl Eq for Span {}

impl fmt::Debug for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ident {
    pub name: String,
    pub span: Span,
}

impl Ident {
    pub fn new(name: impl Into<String>) -> Self {
        Ident { name: name.into(), span: Span::default() }
    }
}

impl fmt::Display for Ident {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SignMarker {
    Plain,
    /// `-5`: a constant whose literal carries the sign.
    NegativeLiteral,
    /// `-(5)`: negation applied to a non-negative constant.
    NegatedExpression,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ConstExpr {
    pub value: BigUint,
    pub width: Option<u32>,
    pub sign: SignMarker,
}

impl ConstExpr {
    pub fn plain(value: impl Into<BigUint>) -> Self {
        ConstExpr { value: value.into(), width: None, sign: SignMarker::Plain }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SyntaxTree {
    pub declarations: Vec<Declaration>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Declaration {
    pub kind: DeclKind,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DeclKind {
    HeaderType(HeaderTypeDecl),
    Header(InstanceDecl),
    Metadata(InstanceDecl),
    ParserState(ParserStateDecl),
    ParserException(ParserExceptionDecl),
    Action(ActionDecl),
    Table(TableDecl),
    Control(ControlDecl),
    FieldList(FieldListDecl),
    FieldListCalculation(FieldListCalcDecl),
    CalculatedField(CalculatedFieldDecl),
    Counter(CounterDecl),
    Meter(MeterDecl),
    Register(RegisterDecl),
}

impl DeclKind {
    /// Declaration keyword, also used for per-kind counts.
    pub fn keyword(&self) -> &'static str {
        match self {
            DeclKind::HeaderType(_) => "header_type",
            DeclKind::Header(_) => "header",
            DeclKind::Metadata(_) => "metadata",
            DeclKind::ParserState(_) => "parser",
            DeclKind::ParserException(_) => "parser_exception",
            DeclKind::Action(_) => "action",
            DeclKind::Table(_) => "table",
            DeclKind::Control(_) => "control",
            DeclKind::FieldList(_) => "field_list",
            DeclKind::FieldListCalculation(_) => "field_list_calculation",
            DeclKind::CalculatedField(_) => "calculated_field",
            DeclKind::Counter(_) => "counter",
            DeclKind::Meter(_) => "meter",
            DeclKind::Register(_) => "register",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FieldWidth {
    Fixed(u32),
    Varbit,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FieldDecl {
    pub name: Ident,
    pub width: FieldWidth,
    pub signed: bool,
    pub saturating: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HeaderTypeDecl {
    pub name: Ident,
    pub fields: Vec<FieldDecl>,
    /// Total header length in bytes (required with a varbit field).
    pub length: Option<Expr>,
    pub max_length: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InstanceDecl {
    pub type_name: Ident,
    pub name: Ident,
    pub stack_size: Option<u32>,
    pub initializer: Vec<(Ident, Expr)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StackIndex {
    Const(u32),
    Next,
    Last,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HeaderRef {
    pub instance: Ident,
    pub index: Option<StackIndex>,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FieldRef {
    pub header: HeaderRef,
    pub field: Ident,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ExprKind {
    Const(ConstExpr),
    Bool(bool),
    /// Bare identifier: parameter, instance, stateful, or list name.
    Name(Ident),
    /// Indexed header reference such as `mpls[0]` or `mpls[next]`.
    Header(HeaderRef),
    Field(FieldRef),
    Valid(HeaderRef),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Not(Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
#[allow(clippy::large_enum_variant)]
pub enum ParserStmt {
    Extract(HeaderRef),
    SetMetadata(FieldRef, Expr),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ReturnTarget {
    /// A parser state or a control function (`ingress`).
    Name(Ident),
    ParseError(Ident),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SelectKey {
    Field(FieldRef),
    Current { offset: u32, width: u32 },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CaseValue {
    pub value: ConstExpr,
    pub mask: Option<ConstExpr>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SelectCase {
    /// Empty for `default`.
    pub values: Vec<CaseValue>,
    pub target: ReturnTarget,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ParserReturn {
    Direct(ReturnTarget),
    Select { keys: Vec<SelectKey>, cases: Vec<SelectCase> },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParserStateDecl {
    pub name: Ident,
    pub body: Vec<ParserStmt>,
    pub ret: ParserReturn,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ExceptionReturn {
    Control(Ident),
    Drop,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParserExceptionDecl {
    pub name: Ident,
    pub body: Vec<(FieldRef, Expr)>,
    pub ret: ExceptionReturn,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActionCall {
    pub name: Ident,
    pub args: Vec<Expr>,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActionDecl {
    pub name: Ident,
    pub params: Vec<Ident>,
    pub body: Vec<ActionCall>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ReadTarget {
    Field(FieldRef),
    Header(HeaderRef),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReadDecl {
    pub target: ReadTarget,
    pub mask: Option<ConstExpr>,
    pub kind: Ident,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TableDecl {
    pub name: Ident,
    pub reads: Vec<ReadDecl>,
    pub actions: Vec<Ident>,
    /// `size`, `min_size`, `max_size`, `support_timeout`: kept verbatim.
    pub properties: Vec<(Ident, Expr)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CaseLabel {
    Hit,
    Miss,
    Action(Ident),
    Default,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ControlStmt {
    Apply { table: Ident, cases: Vec<(CaseLabel, Vec<ControlStmt>)>, span: Span },
    If { cond: Expr, then: Vec<ControlStmt>, otherwise: Vec<ControlStmt>, span: Span },
    Call { name: Ident, span: Span },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ControlDecl {
    pub name: Ident,
    pub body: Vec<ControlStmt>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FieldListEntry {
    /// Instance, stack element, or nested field list.
    Header(HeaderRef),
    Field(FieldRef),
    Const(ConstExpr),
    Payload(Span),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FieldListDecl {
    pub name: Ident,
    pub entries: Vec<FieldListEntry>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FieldListCalcDecl {
    pub name: Ident,
    pub inputs: Vec<Ident>,
    pub algorithm: Ident,
    pub output_width: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CalcKind {
    Verify,
    Update,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CalcClause {
    pub kind: CalcKind,
    pub calculation: Ident,
    pub condition: Option<Expr>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CalculatedFieldDecl {
    pub field: FieldRef,
    pub clauses: Vec<CalcClause>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Binding {
    Direct(Ident),
    Static(Ident),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CounterDecl {
    pub name: Ident,
    pub kind: Ident,
    pub binding: Option<Binding>,
    pub instance_count: Option<u32>,
    pub min_width: Option<u32>,
    pub saturating: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MeterDecl {
    pub name: Ident,
    pub kind: Ident,
    pub binding: Option<Binding>,
    pub instance_count: Option<u32>,
    pub result: Option<FieldRef>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegisterDecl {
    pub name: Ident,
    pub width: Option<u32>,
    pub layout: Option<Ident>,
    pub binding: Option<Binding>,
    pub instance_count: Option<u32>,
    pub attributes: Vec<Ident>,
}
