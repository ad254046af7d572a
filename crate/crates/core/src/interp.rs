//! Evaluation context shared by the parser, the match-action stages and the
//! pipeline: expression evaluation, stuck reporting, choice points and
//! symbolic branching.

use std::sync::Arc;

use num_bigint::BigUint;
use num_traits::Zero;

use crate::exploration::{nth_permutation, ChoiceKind, Chooser, Halt};
use crate::harness::{Coverage, Site};
use crate::program_model::{FieldLoc, HdrLoc, InstId, Program, RExpr};
use crate::runtime_state::{Config, Stuck, StuckReason};
use crate::values::{apply_binop, apply_unop, constraint_sat, mask, negate, BinOp, Constraint, SatResult, SymValue, Value};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Interrupt {
    Stuck(Stuck),
    Halt(Halt),
}

impl From<Halt> for Interrupt {
    fn from(h: Halt) -> Self {
        Interrupt::Halt(h)
    }
}

pub type Flow<T> = Result<T, Interrupt>;

/// A branch condition: decided, or a conjunction over atoms.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Cond {
    False,
    True,
    All(Vec<Constraint>),
}

impl Cond {
    pub fn and(self, other: Cond) -> Cond {
        match (self, other) {
            (Cond::False, _) | (_, Cond::False) => Cond::False,
            (Cond::True, c) | (c, Cond::True) => c,
            (Cond::All(mut a), Cond::All(b)) => {
                a.extend(b);
                Cond::All(a)
            }
        }
    }

    pub fn from_bool(b: bool) -> Cond {
        if b {
            Cond::True
        } else {
            Cond::False
        }
    }
}

/// `s & m == v & m` for a symbolic value, zero-extended from its atom.
pub fn sym_ternary(s: &SymValue, atoms: &crate::values::AtomTable, value: &BigUint, m: &BigUint) -> Cond {
    let aw = atoms.width(s.atom);
    let v = value & m;
    if !(&v >> aw).is_zero() {
        return Cond::False;
    }
    let low = mask(aw);
    let mm = m & &low;
    if mm.is_zero() {
        Cond::True
    } else if mm == low {
        Cond::All(vec![Constraint::eq(s.atom, aw, v)])
    } else {
        Cond::All(vec![Constraint::ternary(s.atom, aw, v & &low, mm)])
    }
}

/// `lo <= s <= hi` for a symbolic value.
pub fn sym_range(s: &SymValue, atoms: &crate::values::AtomTable, lo: &BigUint, hi: &BigUint) -> Cond {
    let aw = atoms.width(s.atom);
    let max = mask(aw);
    if lo > &max || lo > hi {
        return Cond::False;
    }
    let hi = hi.min(&max).clone();
    if lo.is_zero() && hi == max {
        return Cond::True;
    }
    Cond::All(vec![Constraint::range(s.atom, aw, lo.clone(), hi)])
}

pub struct Ctx<'a> {
    pub program: Arc<Program>,
    pub cfg: &'a mut Config,
    pub chooser: &'a mut dyn Chooser,
    pub cov: &'a mut Coverage,
    /// Fields of the header being extracted, for varbit lengths.
    pub locals: Option<Vec<Value>>,
    /// Nesting of control calls.
    pub depth: usize,
}

impl<'a> Ctx<'a> {
    pub fn new(cfg: &'a mut Config, chooser: &'a mut dyn Chooser, cov: &'a mut Coverage) -> Self {
        Ctx { program: cfg.program.clone(), cfg, chooser, cov, locals: None, depth: 0 }
    }

    pub fn hit(&mut self, site: Site) {
        self.cov.hit(site);
    }

    pub fn stuck<T>(&mut self, reason: StuckReason, site: &str) -> Flow<T> {
        Err(Interrupt::Stuck(Stuck { reason, site: site.to_string() }))
    }

    /// Lifts a storage-level failure into a stuck state at `site`.
    pub fn check<T>(&mut self, r: Result<T, StuckReason>, site: &str) -> Flow<T> {
        match r {
            Ok(v) => Ok(v),
            Err(reason) => self.stuck(reason, site),
        }
    }

    pub fn choose(&mut self, kind: ChoiceKind, n: usize, site: &str) -> Flow<usize> {
        if n < 2 {
            return Ok(0);
        }
        if kind != ChoiceKind::SymbolicBranch {
            self.hit(Site::Choice(kind));
        }
        Ok(self.chooser.choose(kind, n, site)?)
    }

    /// Picks one ordering of `items`; the canonical one is the given order.
    pub fn choose_order<T: Clone>(&mut self, kind: ChoiceKind, items: &[T], site: &str) -> Flow<Vec<T>> {
        if items.len() < 2 {
            return Ok(items.to_vec());
        }
        let n: usize = (1..=items.len().min(8)).product();
        let k = self.choose(kind, n, site)?;
        Ok(nth_permutation(items, k))
    }

    pub fn resolve(&self, loc: &HdrLoc) -> Result<InstId, StuckReason> {
        match loc {
            HdrLoc::Inst(i) => Ok(*i),
            HdrLoc::Next(s) => self.program.stacks[*s]
                .elements
                .iter()
                .copied()
                .find(|&e| !self.cfg.instances[e].valid)
                .ok_or(StuckReason::IndexOob),
            HdrLoc::Last(s) => self.program.stacks[*s]
                .elements
                .iter()
                .rev()
                .copied()
                .find(|&e| self.cfg.instances[e].valid)
                .ok_or(StuckReason::IndexOob),
            HdrLoc::Latest => self.cfg.pkt.latest.ok_or(StuckReason::ReadInvalidHeader),
        }
    }

    /// A field value; fields of invalid headers read as undefined.
    pub fn read_field(&self, loc: &FieldLoc) -> Result<Value, StuckReason> {
        let inst = self.resolve(&loc.hdr)?;
        let h = &self.cfg.instances[inst];
        Ok(if h.valid { h.fields[loc.field].clone() } else { Value::Undef })
    }

    pub fn write_field(&mut self, loc: &FieldLoc, v: Value) -> Result<(), StuckReason> {
        let inst = self.resolve(&loc.hdr).map_err(|r| match r {
            StuckReason::ReadInvalidHeader => StuckReason::WriteInvalidHeader,
            other => other,
        })?;
        self.cfg.set_field(inst, loc.field, v)
    }

    fn truth(v: &Value) -> Result<bool, StuckReason> {
        match v {
            Value::Concrete(b) => Ok(!b.is_zero()),
            Value::Undef => Err(StuckReason::UndefInExpr),
            Value::Symbolic(_) => Err(StuckReason::SymbolicUnsupported),
        }
    }

    pub fn eval(&mut self, e: &RExpr) -> Result<Value, StuckReason> {
        Ok(match e {
            RExpr::Const(b) => Value::Concrete(b.clone()),
            RExpr::Param(i) => self.cfg.pkt.frames.last().and_then(|f| f.get(*i)).cloned().unwrap_or(Value::Undef),
            RExpr::Field(loc) => self.read_field(loc)?,
            RExpr::Valid(h) => Value::Concrete(crate::values::Bits::from_bool(self.cfg.instances[self.resolve(h)?].valid)),
            RExpr::Local(i) => self.locals.as_ref().and_then(|l| l.get(*i)).cloned().unwrap_or(Value::Undef),
            RExpr::Unary(op, x) => {
                let v = self.eval(x)?;
                apply_unop(*op, &v)?
            }
            RExpr::Binary(op, a, b) => {
                let x = self.eval(a)?;
                let y = self.eval(b)?;
                apply_binop(*op, &x, &y)?
            }
            RExpr::Not(x) => {
                let v = self.eval(x)?;
                Value::Concrete(crate::values::Bits::from_bool(!Self::truth(&v)?))
            }
            RExpr::And(a, b) => {
                let x = self.eval(a)?;
                let r = Self::truth(&x)? && {
                    let y = self.eval(b)?;
                    Self::truth(&y)?
                };
                Value::Concrete(crate::values::Bits::from_bool(r))
            }
            RExpr::Or(a, b) => {
                let x = self.eval(a)?;
                let r = Self::truth(&x)? || {
                    let y = self.eval(b)?;
                    Self::truth(&y)?
                };
                Value::Concrete(crate::values::Bits::from_bool(r))
            }
        })
    }

    /// Evaluates a condition into outcome regions. Comparisons between one
    /// symbolic field and a constant split on the corresponding constraint.
    pub fn eval_cond(&mut self, e: &RExpr) -> Result<Vec<(bool, Vec<Constraint>)>, StuckReason> {
        match e {
            RExpr::Not(x) => Ok(self.eval_cond(x)?.into_iter().map(|(b, c)| (!b, c)).collect()),
            RExpr::And(a, b) | RExpr::Or(a, b) => {
                let is_and = matches!(e, RExpr::And(..));
                let mut out = Vec::new();
                for (ba, ca) in self.eval_cond(a)? {
                    if ba != is_and {
                        out.push((ba, ca));
                        continue;
                    }
                    for (bb, cb) in self.eval_cond(b)? {
                        let mut c = ca.clone();
                        c.extend(cb);
                        out.push((bb, c));
                    }
                }
                Ok(out)
            }
            RExpr::Binary(op, a, b) if op.is_comparison() => {
                let x = self.eval(a)?;
                let y = self.eval(b)?;
                let cond = match (&x, &y) {
                    (Value::Symbolic(s), Value::Concrete(c)) => self.sym_compare(*op, s, c)?,
                    (Value::Concrete(c), Value::Symbolic(s)) => self.sym_compare(flip(*op), s, c)?,
                    _ => return Ok(vec![(Self::truth(&apply_binop(*op, &x, &y)?)?, Vec::new())]),
                };
                Ok(match cond {
                    Cond::True => vec![(true, Vec::new())],
                    Cond::False => vec![(false, Vec::new())],
                    Cond::All(cs) => {
                        let c = cs.into_iter().next().expect("one constraint");
                        let mut out = vec![(true, vec![c.clone()])];
                        out.extend(negate(&c).into_iter().map(|n| (false, vec![n])));
                        out
                    }
                })
            }
            other => {
                let v = self.eval(other)?;
                Ok(vec![(Self::truth(&v)?, Vec::new())])
            }
        }
    }

    fn sym_compare(&self, op: BinOp, s: &SymValue, c: &crate::values::Bits) -> Result<Cond, StuckReason> {
        if s.signed || c.signed() {
            return Err(StuckReason::SymbolicUnsupported);
        }
        let atoms = &self.cfg.atoms;
        let max = mask(atoms.width(s.atom));
        let v = c.magnitude().clone();
        let zero = BigUint::zero();
        Ok(match op {
            BinOp::Eq => sym_ternary(s, atoms, &v, &mask(s.width.max(c.width()))),
            BinOp::Ne => match sym_ternary(s, atoms, &v, &mask(s.width.max(c.width()))) {
                Cond::True => Cond::False,
                Cond::False => Cond::True,
                Cond::All(cs) => Cond::All(vec![negate(&cs[0]).remove(0)]),
            },
            BinOp::Lt if v.is_zero() => Cond::False,
            BinOp::Lt => sym_range(s, atoms, &zero, &(&v - 1u32)),
            BinOp::Le => sym_range(s, atoms, &zero, &v),
            BinOp::Gt => sym_range(s, atoms, &(&v + 1u32), &max),
            BinOp::Ge => sym_range(s, atoms, &v, &max),
            _ => Cond::from_bool(false),
        })
    }

    /// Chooses among outcome regions, keeping only those consistent with
    /// the path constraints; the chosen region's constraints are added.
    pub fn pick_region<T: Clone>(&mut self, regions: Vec<(T, Vec<Constraint>)>, site: &str) -> Flow<T> {
        if regions.iter().all(|(_, c)| c.is_empty()) {
            return Ok(regions.into_iter().next().expect("a region").0);
        }
        let mut alts = Vec::new();
        for (t, cs) in regions {
            let mut all = self.cfg.constraints.clone();
            all.extend(cs.iter().cloned());
            match constraint_sat(&all, &self.cfg.atoms) {
                SatResult::Unsat => {}
                SatResult::Sat(_) => alts.push((t, cs, false)),
                SatResult::Unknown => alts.push((t, cs, true)),
            }
        }
        if alts.is_empty() {
            return self.stuck(StuckReason::NoBranch, site);
        }
        let k = self.choose(ChoiceKind::SymbolicBranch, alts.len(), site)?;
        let (t, cs, unknown) = alts.swap_remove(k.min(alts.len() - 1));
        for c in cs {
            if !self.cfg.constraints.contains(&c) {
                self.cfg.constraints.push(c);
            }
        }
        self.cfg.unknown_sat |= unknown;
        Ok(t)
    }

    /// Index of the first true condition, forking over symbolic ones.
    pub fn first_match(&mut self, conds: Vec<Cond>, site: &str) -> Flow<Option<usize>> {
        if conds.iter().all(|c| !matches!(c, Cond::All(_))) {
            return Ok(conds.iter().position(|c| *c == Cond::True));
        }
        let mut regions: Vec<Vec<Constraint>> = vec![Vec::new()];
        let mut alts: Vec<(Option<usize>, Vec<Constraint>)> = Vec::new();
        for (i, cond) in conds.into_iter().enumerate() {
            let cs = match cond {
                Cond::False => continue,
                Cond::True => Vec::new(),
                Cond::All(cs) => cs,
            };
            let mut rest = Vec::new();
            for r in regions {
                let mut taken = r.clone();
                taken.extend(cs.iter().cloned());
                alts.push((Some(i), taken));
                for j in 0..cs.len() {
                    for piece in negate(&cs[j]) {
                        let mut n = r.clone();
                        n.extend(cs[..j].iter().cloned());
                        n.push(piece);
                        rest.push(n);
                    }
                }
            }
            regions = rest
                .into_iter()
                .filter(|r| {
                    let mut all = self.cfg.constraints.clone();
                    all.extend(r.iter().cloned());
                    !constraint_sat(&all, &self.cfg.atoms).is_unsat()
                })
                .collect();
            if regions.is_empty() {
                break;
            }
        }
        alts.extend(regions.into_iter().map(|r| (None, r)));
        self.pick_region(alts, site)
    }
}

fn flip(op: BinOp) -> BinOp {
    match op {
        BinOp::Lt => BinOp::Gt,
        BinOp::Le => BinOp::Ge,
        BinOp::Gt => BinOp::Lt,
        BinOp::Ge => BinOp::Le,
        other => other,
    }
}
