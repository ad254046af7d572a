//! Runtime state of one node: instances, statefuls, table contents, packet
//! streams, and the status of execution.

mod control;
mod entries;
mod packet;
mod profile;

pub use control::{is_control_line, parse_control_script, parse_int, ControlCommand, ControlError, KeyText};
pub use entries::{lpm_mask, ActionCall, MatchSpec, TableEntry, TableState};
pub use packet::{Chunk, PacketData, ReadError};
pub use profile::{Delivery, ExternFn, TargetProfile, PROFILE_NAMES};

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use serde::Serialize;

use crate::program_model::{sm, CounterType, InstId, Program, StackId, StatefulBinding, StatefulKind};
use crate::values::{truncate_to_width, AtomTable, Bits, Constraint, Value, ValueError};

/// Why execution cannot continue.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(into = "&'static str")]
pub enum StuckReason {
    ReadInvalidHeader,
    WriteInvalidHeader,
    UndefinedEgress,
    UndefInExpr,
    NegativeShift,
    UnspecifiedPrimitiveCase,
    BadStackOp,
    IndexOob,
    ParseLoopBudget,
    BadVarbitLen,
    NoBranch,
    UnknownPrimitive,
    CallDepth,
    SymbolicUnsupported,
    HashWidthMismatch,
}

impl StuckReason {
    pub const ALL: [StuckReason; 15] = [
        StuckReason::ReadInvalidHeader,
        StuckReason::WriteInvalidHeader,
        StuckReason::UndefinedEgress,
        StuckReason::UndefInExpr,
        StuckReason::NegativeShift,
        StuckReason::UnspecifiedPrimitiveCase,
        StuckReason::BadStackOp,
        StuckReason::IndexOob,
        StuckReason::ParseLoopBudget,
        StuckReason::BadVarbitLen,
        StuckReason::NoBranch,
        StuckReason::UnknownPrimitive,
        StuckReason::CallDepth,
        StuckReason::SymbolicUnsupported,
        StuckReason::HashWidthMismatch,
    ];

    pub fn code(self) -> &'static str {
        match self {
            StuckReason::ReadInvalidHeader => "READ_INVALID_HEADER",
            StuckReason::WriteInvalidHeader => "WRITE_INVALID_HEADER",
            StuckReason::UndefinedEgress => "UNDEFINED_EGRESS",
            StuckReason::UndefInExpr => "UNDEF_IN_EXPR",
            StuckReason::NegativeShift => "NEGATIVE_SHIFT",
            StuckReason::UnspecifiedPrimitiveCase => "UNSPECIFIED_PRIMITIVE_CASE",
            StuckReason::BadStackOp => "BAD_STACK_OP",
            StuckReason::IndexOob => "INDEX_OOB",
            StuckReason::ParseLoopBudget => "PARSE_LOOP_BUDGET",
            StuckReason::BadVarbitLen => "BAD_VARBIT_LEN",
            StuckReason::NoBranch => "NO_BRANCH",
            StuckReason::UnknownPrimitive => "UNKNOWN_PRIMITIVE",
            StuckReason::CallDepth => "CALL_DEPTH",
            StuckReason::SymbolicUnsupported => "SYMBOLIC_UNSUPPORTED",
            StuckReason::HashWidthMismatch => "HASH_WIDTH_MISMATCH",
        }
    }

    pub fn from_code(code: &str) -> Option<StuckReason> {
        StuckReason::ALL.into_iter().find(|r| r.code() == code)
    }
}

impl From<StuckReason> for &'static str {
    fn from(r: StuckReason) -> Self {
        r.code()
    }
}

impl fmt::Display for StuckReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl From<ValueError> for StuckReason {
    fn from(e: ValueError) -> Self {
        match e {
            ValueError::UndefInExpr => StuckReason::UndefInExpr,
            ValueError::NegativeShift => StuckReason::NegativeShift,
            ValueError::Symbolic => StuckReason::SymbolicUnsupported,
            ValueError::WidthOverflow { .. } => StuckReason::UnspecifiedPrimitiveCase,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Stuck {
    pub reason: StuckReason,
    pub site: String,
}

impl fmt::Display for Stuck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at {}", self.reason, self.site)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Status {
    Running,
    Stuck(Stuck),
    /// The input stream is empty.
    AwaitingInput,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct HeaderState {
    pub valid: bool,
    pub fields: Vec<Value>,
    /// Current width of the varbit field, if the type has one.
    pub varbit_len: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum PacketKind {
    Normal,
    Resubmit,
    Recirculate,
    CloneToIngress,
    /// Skips ingress; carries its parsed representation.
    CloneToEgress,
}

/// Parsed representation carried by a clone into egress.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Carried {
    pub instances: Vec<HeaderState>,
    pub payload: PacketData,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Packet {
    pub id: u64,
    pub port: u64,
    pub data: PacketData,
    pub kind: PacketKind,
    pub carried: Option<Arc<Carried>>,
}

impl Packet {
    pub fn new(id: u64, port: u64, data: PacketData) -> Packet {
        Packet { id, port, data, kind: PacketKind::Normal, carried: None }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct StatefulState {
    pub cells: BTreeMap<u64, Value>,
    /// Byte totals of packets-and-bytes counters.
    pub bytes: BTreeMap<u64, u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Digest {
    pub receiver: String,
    pub values: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MeterEvent {
    pub meter: usize,
    pub index: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CloneRequest {
    ToIngress,
    ToEgress,
}

/// State local to the packet being processed; reset for every packet.
#[derive(Clone, Debug, Default)]
pub struct PacketState {
    pub current: Option<Packet>,
    pub data: PacketData,
    /// Parse offset in bits.
    pub offset: u32,
    pub latest: Option<InstId>,
    pub dropped: bool,
    pub truncate: Option<u64>,
    pub resubmit: bool,
    pub recirculate: bool,
    /// Clone requests with their session ids.
    pub clones: Vec<(CloneRequest, u64)>,
    /// Argument frames of the running actions.
    pub frames: Vec<Vec<Value>>,
    /// Entry id of the entry whose action is running.
    pub entry: Option<(usize, u64)>,
    pub egress: bool,
    pub dporder: Vec<InstId>,
}

pub const PARSE_LOOP_BUDGET: u32 = 10_000;
pub const CALL_DEPTH_LIMIT: usize = 128;

#[derive(Clone, Debug)]
pub struct Config {
    pub program: Arc<Program>,
    pub profile: Arc<TargetProfile>,
    pub instances: Vec<HeaderState>,
    pub statefuls: Vec<StatefulState>,
    pub tables: Vec<TableState>,
    pub input: VecDeque<Packet>,
    pub output: Vec<Packet>,
    pub status: Status,
    pub atoms: AtomTable,
    pub constraints: Vec<Constraint>,
    /// Set when some branch was kept without a decided satisfiability.
    pub unknown_sat: bool,
    pub digests: Vec<Digest>,
    pub meter_log: Vec<MeterEvent>,
    pub next_packet_id: u64,
    pub processed: u64,
    pub dropped: u64,
    pub spawned: u64,
    pub parse_budget: u32,
    pub pkt: PacketState,
}

/// Fits a value into a field of `width` bits with the field's signedness.
/// Undefined values are stored as they are.
pub fn fit(v: &Value, width: u32, signed: bool, atoms: &mut AtomTable) -> Result<Value, ValueError> {
    match v {
        Value::Undef => Ok(Value::Undef),
        Value::Concrete(b) => Ok(Value::Concrete(Bits::new(width, b.resize(width).magnitude().clone(), signed))),
        Value::Symbolic(_) => truncate_to_width(v, width, atoms),
    }
}

impl Config {
    /// All headers invalid, metadata zeroed, counters at zero, registers
    /// per profile, no table entries.
    pub fn new(program: Arc<Program>, profile: TargetProfile) -> Config {
        let mut cfg = Config {
            instances: Vec::new(),
            statefuls: vec![StatefulState::default(); program.statefuls.len()],
            tables: vec![TableState::default(); program.tables.len()],
            input: VecDeque::new(),
            output: Vec::new(),
            status: Status::Running,
            atoms: AtomTable::default(),
            constraints: Vec::new(),
            unknown_sat: false,
            digests: Vec::new(),
            meter_log: Vec::new(),
            next_packet_id: 0,
            processed: 0,
            dropped: 0,
            spawned: 0,
            parse_budget: PARSE_LOOP_BUDGET,
            pkt: PacketState::default(),
            profile: Arc::new(profile),
            program,
        };
        cfg.reset_instances();
        cfg
    }

    /// Per-packet instance reset.
    pub fn reset_instances(&mut self) {
        let program = self.program.clone();
        self.instances = program
            .instances
            .iter()
            .enumerate()
            .map(|(i, inst)| {
                let ty = program.inst_type(i);
                if inst.metadata {
                    let mut fields: Vec<Value> =
                        ty.fields.iter().map(|f| Value::Concrete(Bits::new(f.width, 0u32, f.signed))).collect();
                    for (f, b) in &inst.initializer {
                        fields[*f] = Value::Concrete(Bits::new(ty.fields[*f].width, b.resize(ty.fields[*f].width).magnitude().clone(), ty.fields[*f].signed));
                    }
                    HeaderState { valid: true, fields, varbit_len: 0 }
                } else {
                    HeaderState { valid: false, fields: vec![Value::Undef; ty.fields.len()], varbit_len: 0 }
                }
            })
            .collect();
        self.instances[program.standard_metadata].fields[sm::EGRESS_SPEC] = Value::Undef;
    }

    pub fn fresh_packet_id(&mut self) -> u64 {
        let id = self.next_packet_id;
        self.next_packet_id += 1;
        id
    }

    /// Queues a concrete packet on the input stream.
    pub fn inject(&mut self, port: u64, data: PacketData) -> u64 {
        let id = self.fresh_packet_id();
        self.input.push_back(Packet::new(id, port, data));
        if self.status == Status::AwaitingInput {
            self.status = Status::Running;
        }
        id
    }

    pub fn is_stuck(&self) -> bool {
        matches!(self.status, Status::Stuck(_))
    }

    /// A field's value; fields of invalid headers cannot be read.
    pub fn field(&self, inst: InstId, field: usize) -> Result<&Value, StuckReason> {
        let h = &self.instances[inst];
        if !h.valid {
            return Err(StuckReason::ReadInvalidHeader);
        }
        Ok(&h.fields[field])
    }

    /// Stores a value truncated to the field's width.
    pub fn set_field(&mut self, inst: InstId, field: usize, v: Value) -> Result<(), StuckReason> {
        if !self.instances[inst].valid {
            return Err(StuckReason::WriteInvalidHeader);
        }
        let info = self.program.field_info(inst, field).clone();
        let width = if info.varbit { v.width().unwrap_or(info.width).min(info.width).max(1) } else { info.width };
        let v = fit(&v, width, info.signed, &mut self.atoms)?;
        self.instances[inst].fields[field] = v;
        Ok(())
    }

    fn zeroed(&self, inst: InstId) -> HeaderState {
        let fields = self.program.inst_type(inst).fields.iter().map(|f| Value::Concrete(Bits::new(f.width, 0u32, f.signed))).collect();
        HeaderState { valid: true, fields, varbit_len: 0 }
    }

    fn invalid(&self, inst: InstId) -> HeaderState {
        HeaderState { valid: false, fields: vec![Value::Undef; self.program.inst_type(inst).fields.len()], varbit_len: 0 }
    }

    /// Valid, all fields zero.
    pub fn add_header(&mut self, inst: InstId) {
        self.instances[inst] = self.zeroed(inst);
    }

    /// Invalid, all fields undefined.
    pub fn remove_header(&mut self, inst: InstId) {
        self.instances[inst] = self.invalid(inst);
    }

    /// Copies validity and all fields.
    pub fn copy_header(&mut self, dst: InstId, src: InstId) {
        self.instances[dst] = self.instances[src].clone();
    }

    pub fn stack_valid_count(&self, stack: StackId) -> usize {
        self.program.stacks[stack].elements.iter().filter(|&&e| self.instances[e].valid).count()
    }

    /// Shifts elements toward higher indices; the first `count` become valid
    /// and zeroed.
    pub fn stack_push(&mut self, stack: StackId, count: i64) -> Result<(), StuckReason> {
        let elems = self.program.stacks[stack].elements.clone();
        let size = elems.len();
        if count <= 0 || count as usize > size {
            return Err(StuckReason::BadStackOp);
        }
        let c = count as usize;
        for i in (c..size).rev() {
            self.instances[elems[i]] = self.instances[elems[i - c]].clone();
        }
        for &e in &elems[..c] {
            self.instances[e] = self.zeroed(e);
        }
        Ok(())
    }

    /// Shifts elements toward lower indices; the last `count` become invalid.
    pub fn stack_pop(&mut self, stack: StackId, count: i64) -> Result<(), StuckReason> {
        let elems = self.program.stacks[stack].elements.clone();
        let size = elems.len();
        if count <= 0 || count as usize > size {
            return Err(StuckReason::BadStackOp);
        }
        let c = count as usize;
        if c > self.stack_valid_count(stack) {
            return Err(StuckReason::UnspecifiedPrimitiveCase);
        }
        for i in 0..size - c {
            self.instances[elems[i]] = self.instances[elems[i + c]].clone();
        }
        for &e in &elems[size - c..] {
            self.instances[e] = self.invalid(e);
        }
        Ok(())
    }

    /// Checks a stateful index: below `instance_count`, or a live entry id
    /// of the owning table for direct bindings.
    pub fn check_index(&self, id: usize, idx: u64) -> Result<(), StuckReason> {
        let s = &self.program.statefuls[id];
        let ok = match s.binding {
            StatefulBinding::Direct(t) => self.tables[t].priority_of(idx).is_some(),
            _ => idx < s.instance_count.unwrap_or(0),
        };
        if ok {
            Ok(())
        } else {
            Err(StuckReason::IndexOob)
        }
    }

    fn register_default(&self, id: usize) -> Value {
        if self.profile.zero_registers {
            Value::zero(self.program.statefuls[id].width)
        } else {
            Value::Undef
        }
    }

    pub fn register_read(&self, id: usize, idx: u64) -> Result<Value, StuckReason> {
        self.check_index(id, idx)?;
        Ok(self.statefuls[id].cells.get(&idx).cloned().unwrap_or_else(|| self.register_default(id)))
    }

    pub fn register_write(&mut self, id: usize, idx: u64, v: &Value) -> Result<(), StuckReason> {
        self.check_index(id, idx)?;
        let width = self.program.statefuls[id].width;
        let v = fit(v, width, false, &mut self.atoms)?;
        // Cells equal to the initial value are left implicit.
        if v == self.register_default(id) {
            self.statefuls[id].cells.remove(&idx);
        } else {
            self.statefuls[id].cells.insert(idx, v);
        }
        Ok(())
    }

    /// Counter cells start at zero.
    pub fn counter_value(&self, id: usize, idx: u64) -> u64 {
        self.statefuls[id].cells.get(&idx).and_then(Value::to_u64).unwrap_or(0)
    }

    pub fn counter_bytes(&self, id: usize, idx: u64) -> u64 {
        self.statefuls[id].bytes.get(&idx).copied().unwrap_or(0)
    }

    /// Adds one packet (and its bytes) to a counter cell.
    pub fn count_increment(&mut self, id: usize, idx: u64, bytes: u64) -> Result<(), StuckReason> {
        self.check_index(id, idx)?;
        let s = &self.program.statefuls[id];
        let StatefulKind::Counter(kind) = s.kind else {
            return Err(StuckReason::UnspecifiedPrimitiveCase);
        };
        let width = s.width;
        let delta = match kind {
            CounterType::Packets | CounterType::PacketsAndBytes => 1,
            CounterType::Bytes => bytes,
        };
        let old = self.counter_value(id, idx);
        let new = Bits::new(width, u128::from(old) + u128::from(delta), false);
        self.statefuls[id].cells.insert(idx, Value::Concrete(new));
        if kind == CounterType::PacketsAndBytes {
            *self.statefuls[id].bytes.entry(idx).or_insert(0) += bytes;
        }
        Ok(())
    }

    /// Digest of the state between packets. Entry ids are replaced by
    /// priorities so installation order does not matter.
    pub fn snapshot_hash(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.instances.hash(&mut h);
        for (id, s) in self.statefuls.iter().enumerate() {
            match self.program.statefuls[id].binding {
                StatefulBinding::Direct(t) => {
                    let by_prio: BTreeMap<Option<u64>, (&Value, Option<&u64>)> = s
                        .cells
                        .iter()
                        .map(|(k, v)| (self.tables[t].priority_of(*k), (v, s.bytes.get(k))))
                        .collect();
                    by_prio.hash(&mut h);
                }
                _ => s.hash(&mut h),
            }
        }
        for t in &self.tables {
            for e in &t.entries {
                (e.priority, &e.keys, &e.call).hash(&mut h);
            }
            t.default.hash(&mut h);
        }
        self.input.hash(&mut h);
        self.output.hash(&mut h);
        self.status.hash(&mut h);
        self.atoms.hash(&mut h);
        self.constraints.hash(&mut h);
        self.unknown_sat.hash(&mut h);
        self.digests.hash(&mut h);
        self.meter_log.hash(&mut h);
        (self.next_packet_id, self.processed, self.dropped, self.spawned).hash(&mut h);
        h.finish()
    }
}

#[cfg(test)]
mod tests;
