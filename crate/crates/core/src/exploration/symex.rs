//! Symbolic packets and path-forking execution.

use std::collections::BTreeSet;

use serde::Serialize;

use super::{search, Budget, ChoiceKind, Diagnostic, Taken};
use crate::harness::Coverage;
use crate::pipeline::run_node;
use crate::program_model::{InstId, Program};
use crate::runtime_state::{Config, PacketData, Status, StuckReason};
use crate::values::{constraint_sat, AtomTable, Bits, Constraint, SatResult, SymValue, Value, Witness};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SymSegment {
    /// Every field of a header instance is an atom named `inst.field`.
    Header(InstId),
    Hex(Vec<u8>),
    /// `n` unconstrained bytes as one atom.
    Bytes(u32),
}

/// Layout of a symbolic packet, e.g. `ethernet,hex:0800,bytes:4`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SymbolicSpec {
    pub segments: Vec<SymSegment>,
}

impl SymbolicSpec {
    pub fn parse(text: &str, program: &Program) -> Result<SymbolicSpec, String> {
        let mut segments = Vec::new();
        for part in text.split([',', ' ']).map(str::trim).filter(|p| !p.is_empty()) {
            if let Some(h) = part.strip_prefix("hex:") {
                segments.push(SymSegment::Hex(hex::decode(h).map_err(|e| format!("bad hex {h}: {e}"))?));
            } else if let Some(n) = part.strip_prefix("bytes:") {
                let n: u32 = n.parse().map_err(|_| format!("bad byte count {n}"))?;
                if n > 0 {
                    segments.push(SymSegment::Bytes(n));
                }
            } else {
                let inst = program.instance(part).ok_or_else(|| format!("unknown header instance {part}"))?;
                if program.instances[inst].metadata {
                    return Err(format!("{part} is metadata"));
                }
                if program.inst_type(inst).has_varbit() {
                    return Err(format!("{part} has a variable-width field"));
                }
                segments.push(SymSegment::Header(inst));
            }
        }
        Ok(SymbolicSpec { segments })
    }

    /// Packet data with fresh atoms registered in `atoms`.
    pub fn build(&self, program: &Program, atoms: &mut AtomTable) -> PacketData {
        let mut d = PacketData::default();
        for (i, s) in self.segments.iter().enumerate() {
            match s {
                SymSegment::Hex(b) => d.append(&PacketData::from_bytes(b)),
                SymSegment::Bytes(n) => {
                    let atom = atoms.fresh(format!("bytes{i}"), n * 8);
                    d.push(Value::Symbolic(SymValue { atom, width: n * 8, signed: false }), n * 8);
                }
                SymSegment::Header(inst) => {
                    for f in &program.inst_type(*inst).fields {
                        let atom = atoms.fresh(format!("{}.{}", program.instances[*inst].name, f.name), f.width);
                        d.push(Value::Symbolic(SymValue { atom, width: f.width, signed: false }), f.width);
                    }
                }
            }
        }
        d
    }
}

/// Replaces every atom by its witness value.
pub fn concretize(data: &PacketData, witness: &Witness, atoms: &AtomTable) -> Vec<u8> {
    let mut out = PacketData::default();
    for c in data.chunks() {
        match &c.value {
            Value::Symbolic(s) => out.push(Value::Concrete(Bits::new(c.width, witness.value_of(s.atom, atoms), false)), c.width),
            v => out.push(v.clone(), c.width),
        }
    }
    out.to_bytes().expect("all concrete")
}

/// Which terminal states a symbolic run reports.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Predicate {
    Stuck(Option<StuckReason>),
    Port(u64),
    Drop,
    Any,
}

impl Predicate {
    pub fn parse(text: &str) -> Result<Predicate, String> {
        Ok(match text {
            "any" => Predicate::Any,
            "drop" => Predicate::Drop,
            "stuck" => Predicate::Stuck(None),
            _ => {
                if let Some(r) = text.strip_prefix("stuck:") {
                    Predicate::Stuck(Some(StuckReason::from_code(r).ok_or_else(|| format!("unknown stuck reason {r}"))?))
                } else if let Some(p) = text.strip_prefix("port:") {
                    Predicate::Port(p.parse().map_err(|_| format!("bad port {p}"))?)
                } else {
                    return Err(format!("unknown predicate {text}"));
                }
            }
        })
    }

    pub fn holds(&self, outcome: &Outcome) -> bool {
        match (self, outcome) {
            (Predicate::Any, _) => true,
            (Predicate::Stuck(None), Outcome::Stuck { .. }) => true,
            (Predicate::Stuck(Some(r)), Outcome::Stuck { reason, .. }) => r == reason,
            (Predicate::Port(p), Outcome::Output { ports }) => ports.contains(p),
            (Predicate::Drop, Outcome::Dropped) => true,
            _ => false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Outcome {
    Stuck { reason: StuckReason, site: String },
    Output { ports: Vec<u64> },
    Dropped,
}

impl Outcome {
    pub fn of(cfg: &Config) -> Outcome {
        match &cfg.status {
            Status::Stuck(s) => Outcome::Stuck { reason: s.reason, site: s.site.clone() },
            _ if cfg.output.is_empty() => Outcome::Dropped,
            _ => Outcome::Output { ports: cfg.output.iter().map(|p| p.port).collect() },
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PathResult {
    #[serde(skip)]
    pub constraints: Vec<Constraint>,
    /// Atoms the constraints refer to, including slices made on the path.
    #[serde(skip)]
    pub atoms: AtomTable,
    #[serde(rename = "constraints")]
    pub constraint_text: Vec<String>,
    pub outcome: Outcome,
    /// Satisfiability could not be decided for some branch on this path.
    pub unknown: bool,
    pub witness: Option<String>,
    /// Whether replaying the witness concretely reproduced the outcome.
    pub replayed: Option<bool>,
    pub valid_headers: Vec<String>,
    pub path: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SymexResult {
    pub results: Vec<PathResult>,
    pub budget_exceeded: bool,
    #[serde(skip)]
    pub coverage: Coverage,
}

impl SymexResult {
    pub fn diagnostics(&self) -> Vec<Diagnostic> {
        self.results
            .iter()
            .filter_map(|r| match &r.outcome {
                Outcome::Stuck { reason, site } => Some(Diagnostic {
                    reason: reason.code().to_string(),
                    site: site.clone(),
                    path: r.path.clone(),
                    witness_constraints: r.constraint_text.clone(),
                    witness: r.witness.clone(),
                    node: None,
                }),
                _ => None,
            })
            .collect()
    }
}

/// Most packet passes when replaying a witness.
const REPLAY_PACKETS: u64 = 10_000;

/// Runs one symbolic packet through `base` (a node with its entries
/// installed and empty input), forking at every symbolic branch.
pub fn symex_run(base: &Config, spec: &SymbolicSpec, port: u64, predicate: &Predicate, budget: Budget) -> SymexResult {
    let program = base.program.clone();
    let mut start = base.clone();
    let data = spec.build(&program, &mut start.atoms);
    start.inject(port, data.clone());
    let focus: BTreeSet<ChoiceKind> = [ChoiceKind::SymbolicBranch].into();
    let found = search(start, budget, &focus);
    let mut results = Vec::new();
    for t in &found.terminals {
        let outcome = Outcome::of(&t.state);
        if !predicate.holds(&outcome) {
            continue;
        }
        let (witness, replayed) = match constraint_sat(&t.state.constraints, &t.state.atoms) {
            SatResult::Sat(w) => {
                let bytes = concretize(&data, &w, &t.state.atoms);
                let mut replay = base.clone();
                replay.inject(port, PacketData::from_bytes(&bytes));
                run_node(&mut replay, REPLAY_PACKETS, &mut Coverage::default());
                (Some(hex::encode_upper(&bytes)), Some(Outcome::of(&replay) == outcome))
            }
            SatResult::Unsat => continue,
            SatResult::Unknown => (None, None),
        };
        results.push(PathResult {
            constraint_text: t.state.constraints.iter().map(|c| c.display(&t.state.atoms).to_string()).collect(),
            constraints: t.state.constraints.clone(),
            atoms: t.state.atoms.clone(),
            outcome,
            unknown: t.state.unknown_sat || witness.is_none(),
            witness,
            replayed,
            valid_headers: valid_headers(&t.state),
            path: t.path.iter().map(Taken::to_string).collect(),
        });
    }
    SymexResult { results, budget_exceeded: found.budget_exceeded, coverage: found.coverage }
}

/// Header instances valid at the end of the run (stuck states keep theirs).
fn valid_headers(cfg: &Config) -> Vec<String> {
    cfg.program.header_instances().filter(|&i| cfg.instances[i].valid).map(|i| cfg.program.instances[i].name.clone()).collect()
}
