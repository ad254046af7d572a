//! The elaborated program: every name resolved, field lists flattened,
//! deparse orders inferred.

mod elaborate;
mod graph;

pub use elaborate::elaborate;
pub use graph::{build_parse_graph, infer_deparse_orders, DeparseOrders, EdgeCond, ParseEdge, ParseGraph};

use std::collections::BTreeMap;

use thiserror::Error;

use crate::frontend::Span;
use crate::values::{BinOp, Bits, UnOp};

pub type InstId = usize;
pub type StackId = usize;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ElabError {
    #[error("UNRESOLVED_NAME at {span}: {name}")]
    UnresolvedName { name: String, span: Span },
    #[error("DUPLICATE_NAME at {span}: {name}")]
    DuplicateName { name: String, span: Span },
    #[error("PAYLOAD_UNSUPPORTED at {span}: field list {list} uses payload")]
    PayloadUnsupported { list: String, span: Span },
    #[error("NO_INGRESS: no control named ingress")]
    NoIngress,
    #[error("VARBIT_MISPLACED: {0}")]
    VarbitMisplaced(String),
    #[error("FIELD_LIST_CYCLE: {0}")]
    FieldListCycle(String),
    #[error("DEPARSE_ORDER_CONFLICT: {0}")]
    DeparseOrderConflict(String),
    #[error("INVALID_DECLARATION at {span}: {message}")]
    Invalid { message: String, span: Span },
}

impl ElabError {
    pub fn code(&self) -> &'static str {
        match self {
            ElabError::UnresolvedName { .. } => "UNRESOLVED_NAME",
            ElabError::DuplicateName { .. } => "DUPLICATE_NAME",
            ElabError::PayloadUnsupported { .. } => "PAYLOAD_UNSUPPORTED",
            ElabError::NoIngress => "NO_INGRESS",
            ElabError::VarbitMisplaced(_) => "VARBIT_MISPLACED",
            ElabError::FieldListCycle(_) => "FIELD_LIST_CYCLE",
            ElabError::DeparseOrderConflict(_) => "DEPARSE_ORDER_CONFLICT",
            ElabError::Invalid { .. } => "INVALID_DECLARATION",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FieldInfo {
    pub name: String,
    /// For a varbit field, the maximum width in bits.
    pub width: u32,
    pub signed: bool,
    pub saturating: bool,
    pub varbit: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HeaderType {
    pub name: String,
    pub fields: Vec<FieldInfo>,
    /// Total length in bytes, evaluated over the fields preceding the
    /// varbit field (`RExpr::Local`).
    pub length: Option<RExpr>,
    pub max_length: Option<u32>,
}

impl HeaderType {
    pub fn field_index(&self, name: &str) -> Option<usize> {
        self.fields.iter().position(|f| f.name == name)
    }

    pub fn fixed_bits(&self) -> u32 {
        self.fields.iter().filter(|f| !f.varbit).map(|f| f.width).sum()
    }

    pub fn has_varbit(&self) -> bool {
        self.fields.iter().any(|f| f.varbit)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instance {
    /// `h`, or `s[i]` for a stack element.
    pub name: String,
    pub header_type: usize,
    pub metadata: bool,
    pub stack: Option<(StackId, u32)>,
    /// Metadata initial values by field index (all others start at zero).
    pub initializer: Vec<(usize, Bits)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Stack {
    pub name: String,
    pub header_type: usize,
    pub elements: Vec<InstId>,
}

/// Where a header reference points.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum HdrLoc {
    Inst(InstId),
    /// First invalid element of a stack.
    Next(StackId),
    /// Last valid element of a stack.
    Last(StackId),
    /// The most recently extracted instance.
    Latest,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct FieldLoc {
    pub hdr: HdrLoc,
    pub field: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RExpr {
    Const(Bits),
    Param(usize),
    Field(FieldLoc),
    Valid(HdrLoc),
    /// Field of the header being extracted (varbit length expressions).
    Local(usize),
    Unary(UnOp, Box<RExpr>),
    Binary(BinOp, Box<RExpr>, Box<RExpr>),
    Not(Box<RExpr>),
    And(Box<RExpr>, Box<RExpr>),
    Or(Box<RExpr>, Box<RExpr>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PStmt {
    Extract(HdrLoc),
    SetMetadata(FieldLoc, RExpr),
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum PTarget {
    State(usize),
    Control(String),
    Error(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SelKey {
    Field(FieldLoc),
    Current { offset: u32, width: u32 },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SelCase {
    /// Alternatives as (value, mask) over the concatenated key; empty for
    /// `default`.
    pub values: Vec<(Bits, Bits)>,
    pub target: PTarget,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PReturn {
    Direct(PTarget),
    Select { keys: Vec<SelKey>, width: u32, cases: Vec<SelCase> },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParserState {
    pub name: String,
    pub body: Vec<PStmt>,
    pub ret: PReturn,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum HandlerReturn {
    Control(String),
    Drop,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExceptionHandler {
    pub name: String,
    pub body: Vec<(FieldLoc, RExpr)>,
    pub ret: HandlerReturn,
}

/// Parser exceptions raised by the engine itself.
pub const PE_OUT_OF_PACKET: &str = "p4_pe_out_of_packet";
pub const PE_INDEX_OUT_OF_BOUNDS: &str = "p4_pe_index_out_of_bounds";
pub const PE_CHECKSUM: &str = "p4_pe_checksum";
pub const PE_DEFAULT: &str = "p4_pe_default";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Prim {
    ModifyField,
    AddToField,
    SubtractFromField,
    Add,
    Subtract,
    BitAnd,
    BitOr,
    BitXor,
    ShiftLeft,
    ShiftRight,
    AddHeader,
    RemoveHeader,
    CopyHeader,
    Push,
    Pop,
    RegisterRead,
    RegisterWrite,
    Count,
    ExecuteMeter,
    Drop,
    NoOp,
    Truncate,
    ModifyFieldWithHashBasedOffset,
    Resubmit,
    Recirculate,
    CloneIngressToIngress,
    CloneEgressToIngress,
    CloneIngressToEgress,
    CloneEgressToEgress,
    GenerateDigest,
}

/// What an argument position of a primitive accepts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Dst,
    Value,
    Header,
    Stack,
    Register,
    Counter,
    Meter,
    FieldList,
    Calc,
}

impl Prim {
    pub const ALL: [Prim; 30] = [
        Prim::ModifyField,
        Prim::AddToField,
        Prim::SubtractFromField,
        Prim::Add,
        Prim::Subtract,
        Prim::BitAnd,
        Prim::BitOr,
        Prim::BitXor,
        Prim::ShiftLeft,
        Prim::ShiftRight,
        Prim::AddHeader,
        Prim::RemoveHeader,
        Prim::CopyHeader,
        Prim::Push,
        Prim::Pop,
        Prim::RegisterRead,
        Prim::RegisterWrite,
        Prim::Count,
        Prim::ExecuteMeter,
        Prim::Drop,
        Prim::NoOp,
        Prim::Truncate,
        Prim::ModifyFieldWithHashBasedOffset,
        Prim::Resubmit,
        Prim::Recirculate,
        Prim::CloneIngressToIngress,
        Prim::CloneEgressToIngress,
        Prim::CloneIngressToEgress,
        Prim::CloneEgressToEgress,
        Prim::GenerateDigest,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Prim::ModifyField => "modify_field",
            Prim::AddToField => "add_to_field",
            Prim::SubtractFromField => "subtract_from_field",
            Prim::Add => "add",
            Prim::Subtract => "subtract",
            Prim::BitAnd => "bit_and",
            Prim::BitOr => "bit_or",
            Prim::BitXor => "bit_xor",
            Prim::ShiftLeft => "shift_left",
            Prim::ShiftRight => "shift_right",
            Prim::AddHeader => "add_header",
            Prim::RemoveHeader => "remove_header",
            Prim::CopyHeader => "copy_header",
            Prim::Push => "push",
            Prim::Pop => "pop",
            Prim::RegisterRead => "register_read",
            Prim::RegisterWrite => "register_write",
            Prim::Count => "count",
            Prim::ExecuteMeter => "execute_meter",
            Prim::Drop => "drop",
            Prim::NoOp => "no_op",
            Prim::Truncate => "truncate",
            Prim::ModifyFieldWithHashBasedOffset => "modify_field_with_hash_based_offset",
            Prim::Resubmit => "resubmit",
            Prim::Recirculate => "recirculate",
            Prim::CloneIngressToIngress => "clone_ingress_pkt_to_ingress",
            Prim::CloneEgressToIngress => "clone_egress_pkt_to_ingress",
            Prim::CloneIngressToEgress => "clone_ingress_pkt_to_egress",
            Prim::CloneEgressToEgress => "clone_egress_pkt_to_egress",
            Prim::GenerateDigest => "generate_digest",
        }
    }

    pub fn from_name(name: &str) -> Option<Prim> {
        Prim::ALL.into_iter().find(|p| p.name() == name)
    }

    /// Parameter roles; trailing parameters past the minimum arity are
    /// optional.
    pub fn signature(self) -> (&'static [Role], usize) {
        use Role::*;
        match self {
            Prim::ModifyField => (&[Dst, Value, Value], 2),
            Prim::AddToField | Prim::SubtractFromField => (&[Dst, Value], 2),
            Prim::Add
            | Prim::Subtract
            | Prim::BitAnd
            | Prim::BitOr
            | Prim::BitXor
            | Prim::ShiftLeft
            | Prim::ShiftRight => (&[Dst, Value, Value], 3),
            Prim::AddHeader | Prim::RemoveHeader => (&[Header], 1),
            Prim::CopyHeader => (&[Header, Header], 2),
            Prim::Push | Prim::Pop => (&[Stack, Value], 1),
            Prim::RegisterRead => (&[Dst, Register, Value], 2),
            Prim::RegisterWrite => (&[Register, Value, Value], 2),
            Prim::Count => (&[Counter, Value], 1),
            Prim::ExecuteMeter => (&[Meter, Value, Dst], 2),
            Prim::Drop | Prim::NoOp => (&[], 0),
            Prim::Truncate => (&[Value], 1),
            Prim::ModifyFieldWithHashBasedOffset => (&[Dst, Value, Calc, Value], 4),
            Prim::Resubmit | Prim::Recirculate => (&[FieldList], 0),
            Prim::CloneIngressToIngress
            | Prim::CloneEgressToIngress
            | Prim::CloneIngressToEgress
            | Prim::CloneEgressToEgress => (&[Value, FieldList], 1),
            Prim::GenerateDigest => (&[Value, FieldList], 2),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Arg {
    Value(RExpr),
    Field(FieldLoc),
    Header(HdrLoc),
    Stack(StackId),
    Stateful(usize),
    FieldList(String),
    Calc(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Callee {
    Primitive(Prim),
    Compound(usize),
    /// Not in the catalog; looked up in the target profile at run time.
    External(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Call {
    pub callee: Callee,
    pub args: Vec<Arg>,
    pub site: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Action {
    pub name: String,
    pub params: Vec<String>,
    pub body: Vec<Call>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MatchKind {
    Exact,
    Ternary,
    Lpm,
    Range,
    Valid,
}

impl MatchKind {
    pub fn name(self) -> &'static str {
        match self {
            MatchKind::Exact => "exact",
            MatchKind::Ternary => "ternary",
            MatchKind::Lpm => "lpm",
            MatchKind::Range => "range",
            MatchKind::Valid => "valid",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ReadKey {
    Field(FieldLoc),
    /// Validity bit of a header (`h : valid`, `valid(h)`, or `h.valid`).
    Valid(HdrLoc),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Read {
    /// Text used to name the read in control scripts, e.g. `h1.f1`.
    pub name: String,
    pub key: ReadKey,
    pub kind: MatchKind,
    pub width: u32,
    pub mask: Option<Bits>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Table {
    pub name: String,
    pub reads: Vec<Read>,
    pub actions: Vec<usize>,
    /// Directly bound counters and meters, in declaration order.
    pub direct: Vec<usize>,
    pub size: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CaseSel {
    Hit,
    Miss,
    Action(usize),
    Default,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CStmt {
    Apply { table: usize, cases: Vec<(CaseSel, Vec<CStmt>)> },
    If { cond: RExpr, then: Vec<CStmt>, otherwise: Vec<CStmt>, site: String },
    Call(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FlItem {
    Field(InstId, usize),
    Const(Bits),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Csum16,
    Crc16,
    Crc32,
    Identity,
}

impl Algorithm {
    pub fn from_name(name: &str) -> Option<Algorithm> {
        match name {
            "csum16" => Some(Algorithm::Csum16),
            "crc16" => Some(Algorithm::Crc16),
            "crc32" => Some(Algorithm::Crc32),
            "identity" => Some(Algorithm::Identity),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Calculation {
    pub name: String,
    pub inputs: Vec<String>,
    pub algorithm: Algorithm,
    pub output_width: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CalcBinding {
    pub calculation: String,
    pub condition: Option<RExpr>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CalculatedField {
    pub inst: InstId,
    pub field: usize,
    pub verify: Vec<CalcBinding>,
    pub update: Vec<CalcBinding>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CounterType {
    Packets,
    Bytes,
    PacketsAndBytes,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StatefulKind {
    Counter(CounterType),
    Meter,
    Register,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StatefulBinding {
    Global,
    Direct(usize),
    Static(usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Stateful {
    pub name: String,
    pub kind: StatefulKind,
    pub binding: StatefulBinding,
    pub instance_count: Option<u64>,
    pub width: u32,
}

impl Stateful {
    pub fn is_direct(&self) -> bool {
        matches!(self.binding, StatefulBinding::Direct(_))
    }
}

/// Field indices of the built-in `standard_metadata` instance.
pub mod sm {
    pub const INGRESS_PORT: usize = 0;
    pub const PACKET_LENGTH: usize = 1;
    pub const EGRESS_SPEC: usize = 2;
    pub const EGRESS_PORT: usize = 3;
    pub const EGRESS_INSTANCE: usize = 4;
    pub const INSTANCE_TYPE: usize = 5;

    pub const FIELDS: [(&str, u32); 6] = [
        ("ingress_port", 9),
        ("packet_length", 32),
        ("egress_spec", 9),
        ("egress_port", 9),
        ("egress_instance", 16),
        ("instance_type", 32),
    ];
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Program {
    pub header_types: Vec<HeaderType>,
    pub instances: Vec<Instance>,
    pub instance_index: BTreeMap<String, InstId>,
    pub stacks: Vec<Stack>,
    pub stack_index: BTreeMap<String, StackId>,
    pub parser_states: Vec<ParserState>,
    pub state_index: BTreeMap<String, usize>,
    pub exceptions: BTreeMap<String, ExceptionHandler>,
    pub actions: Vec<Action>,
    pub action_index: BTreeMap<String, usize>,
    pub tables: Vec<Table>,
    pub table_index: BTreeMap<String, usize>,
    pub controls: BTreeMap<String, Vec<CStmt>>,
    pub field_lists: BTreeMap<String, Vec<FlItem>>,
    pub calculations: BTreeMap<String, Calculation>,
    pub calculated_fields: Vec<CalculatedField>,
    pub statefuls: Vec<Stateful>,
    pub stateful_index: BTreeMap<String, usize>,
    pub egress: Option<String>,
    pub standard_metadata: InstId,
    pub deparse: DeparseOrders,
}

impl Program {
    pub const INGRESS: &'static str = "ingress";

    pub fn inst_type(&self, inst: InstId) -> &HeaderType {
        &self.header_types[self.instances[inst].header_type]
    }

    pub fn field_info(&self, inst: InstId, field: usize) -> &FieldInfo {
        &self.inst_type(inst).fields[field]
    }

    pub fn field_name(&self, inst: InstId, field: usize) -> String {
        format!("{}.{}", self.instances[inst].name, self.field_info(inst, field).name)
    }

    pub fn instance(&self, name: &str) -> Option<InstId> {
        self.instance_index.get(name).copied()
    }

    pub fn table(&self, name: &str) -> Option<usize> {
        self.table_index.get(name).copied()
    }

    pub fn stateful(&self, name: &str) -> Option<usize> {
        self.stateful_index.get(name).copied()
    }

    /// Flattened field list.
    pub fn flatten_field_list(&self, name: &str) -> Option<&[FlItem]> {
        self.field_lists.get(name).map(Vec::as_slice)
    }

    /// Header (non-metadata) instances in declaration order.
    pub fn header_instances(&self) -> impl Iterator<Item = InstId> + '_ {
        (0..self.instances.len()).filter(|&i| !self.instances[i].metadata)
    }
}

/// Flattens a field list by name (see [`Program::flatten_field_list`]).
pub fn flatten_field_list(program: &Program, name: &str) -> Option<Vec<FlItem>> {
    program.flatten_field_list(name).map(<[FlItem]>::to_vec)
}

#[cfg(test)]
mod tests;
