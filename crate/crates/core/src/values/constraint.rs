//! Symbolic atoms and the path-constraint language.
//!
//! Constraints relate one atom to constants: equality, disequality, a
//! ternary (value/mask) match, or an inclusive unsigned range. Atoms are
//! either roots or bit slices of a root; satisfiability is decided per root.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigUint;
use num_traits::{One, Zero};
use serde::Serialize;

use super::mask;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct AtomId(pub u32);

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum AtomOrigin {
    Root,
    /// Bits `[lsb, lsb + width)` of a root atom.
    Slice { root: AtomId, lsb: u32 },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct AtomDef {
    pub name: String,
    pub width: u32,
    pub origin: AtomOrigin,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct AtomTable {
    atoms: Vec<AtomDef>,
}

impl AtomTable {
    pub fn fresh(&mut self, name: impl Into<String>, width: u32) -> AtomId {
        let id = AtomId(self.atoms.len() as u32);
        self.atoms.push(AtomDef { name: name.into(), width, origin: AtomOrigin::Root });
        id
    }

    /// Atom for bits `[lsb, lsb + width)` of `atom`. Slices of slices are
    /// expressed against the root, and identical slices share an id.
    pub fn slice(&mut self, atom: AtomId, lsb: u32, width: u32) -> AtomId {
        let (root, base) = self.root_of(atom);
        let lsb = base + lsb;
        if lsb == 0 && width == self.width(root) {
            return root;
        }
        let origin = AtomOrigin::Slice { root, lsb };
        if let Some(i) = self.atoms.iter().position(|a| a.origin == origin && a.width == width) {
            return AtomId(i as u32);
        }
        let name = format!("{}[{}:{}]", self.get(root).name, lsb + width - 1, lsb);
        let id = AtomId(self.atoms.len() as u32);
        self.atoms.push(AtomDef { name, width, origin });
        id
    }

    pub fn get(&self, atom: AtomId) -> &AtomDef {
        &self.atoms[atom.0 as usize]
    }

    pub fn width(&self, atom: AtomId) -> u32 {
        self.get(atom).width
    }

    pub fn name(&self, atom: AtomId) -> &str {
        &self.get(atom).name
    }

    /// Root atom and bit offset within it.
    pub fn root_of(&self, atom: AtomId) -> (AtomId, u32) {
        match self.get(atom).origin {
            AtomOrigin::Root => (atom, 0),
            AtomOrigin::Slice { root, lsb } => (root, lsb),
        }
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Whether `other` extends this table (tables only ever grow).
    pub fn is_prefix_of(&self, other: &AtomTable) -> bool {
        other.atoms.starts_with(&self.atoms)
    }

    pub fn ids(&self) -> impl Iterator<Item = AtomId> {
        (0..self.atoms.len() as u32).map(AtomId)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Relation {
    Eq(BigUint),
    Neq(BigUint),
    Ternary { value: BigUint, mask: BigUint },
    Range { lo: BigUint, hi: BigUint },
}

impl Relation {
    pub fn holds(&self, x: &BigUint) -> bool {
        match self {
            Relation::Eq(v) => x == v,
            Relation::Neq(v) => x != v,
            Relation::Ternary { value, mask } => (x & mask) == (value & mask),
            Relation::Range { lo, hi } => lo <= x && x <= hi,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Constraint {
    pub atom: AtomId,
    pub relation: Relation,
    pub width: u32,
}

impl Constraint {
    pub fn new(atom: AtomId, width: u32, relation: Relation) -> Self {
        Constraint { atom, relation, width }
    }

    pub fn eq(atom: AtomId, width: u32, v: impl Into<BigUint>) -> Self {
        Constraint::new(atom, width, Relation::Eq(v.into()))
    }

    pub fn neq(atom: AtomId, width: u32, v: impl Into<BigUint>) -> Self {
        Constraint::new(atom, width, Relation::Neq(v.into()))
    }

    pub fn ternary(atom: AtomId, width: u32, value: BigUint, mask: BigUint) -> Self {
        Constraint::new(atom, width, Relation::Ternary { value, mask })
    }

    pub fn range(atom: AtomId, width: u32, lo: BigUint, hi: BigUint) -> Self {
        Constraint::new(atom, width, Relation::Range { lo, hi })
    }

    pub fn display<'a>(&'a self, atoms: &'a AtomTable) -> impl fmt::Display + 'a {
        ConstraintDisplay { c: self, atoms }
    }
}

struct ConstraintDisplay<'a> {
    c: &'a Constraint,
    atoms: &'a AtomTable,
}

impl fmt::Display for ConstraintDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = self.atoms.name(self.c.atom);
        match &self.c.relation {
            Relation::Eq(v) => write!(f, "{name} == {v:#x}"),
            Relation::Neq(v) => write!(f, "{name} != {v:#x}"),
            Relation::Ternary { value, mask } => write!(f, "{name} &&& {mask:#x} == {value:#x}"),
            Relation::Range { lo, hi } => write!(f, "{name} in [{lo:#x}, {hi:#x}]"),
        }
    }
}

/// Pairwise-disjoint constraints whose union is the complement of `c`
/// within the atom's domain. An empty result means `c` is a tautology.
pub fn negate(c: &Constraint) -> Vec<Constraint> {
    let full = mask(c.width);
    let mk = |r| Constraint::new(c.atom, c.width, r);
    match &c.relation {
        Relation::Eq(v) => vec![mk(Relation::Neq(v.clone()))],
        Relation::Neq(v) => vec![mk(Relation::Eq(v.clone()))],
        Relation::Ternary { value, mask: m } => {
            let m = m & &full;
            if m == full {
                return vec![mk(Relation::Neq(value & &full))];
            }
            // First differing masked bit, scanning from the most significant.
            let mut out = Vec::new();
            let mut prefix = BigUint::zero();
            for bit in (0..c.width).rev() {
                let b = BigUint::one() << bit;
                if (&m & &b).is_zero() {
                    continue;
                }
                let alt_mask = &prefix | &b;
                let alt_value = (value ^ &b) & &alt_mask;
                out.push(mk(Relation::Ternary { value: alt_value, mask: alt_mask }));
                prefix |= b;
            }
            out
        }
        Relation::Range { lo, hi } => {
            let mut out = Vec::new();
            if !lo.is_zero() {
                out.push(mk(Relation::Range { lo: BigUint::zero(), hi: lo - 1u32 }));
            }
            if hi < &full {
                out.push(mk(Relation::Range { lo: hi + 1u32, hi: full }));
            }
            out
        }
    }
}

/// Satisfying assignment of root atoms.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Witness {
    pub roots: BTreeMap<AtomId, BigUint>,
}

impl Witness {
    /// Value of any atom (root or slice); unconstrained roots read as zero.
    pub fn value_of(&self, atom: AtomId, atoms: &AtomTable) -> BigUint {
        let (root, lsb) = atoms.root_of(atom);
        let v = self.roots.get(&root).cloned().unwrap_or_default();
        (v >> lsb) & mask(atoms.width(atom))
    }

    pub fn satisfies(&self, constraints: &[Constraint], atoms: &AtomTable) -> bool {
        constraints.iter().all(|c| c.relation.holds(&self.value_of(c.atom, atoms)))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SatResult {
    Sat(Witness),
    Unsat,
    Unknown,
}

impl SatResult {
    pub fn is_unsat(&self) -> bool {
        matches!(self, SatResult::Unsat)
    }
}

/// Roots up to this width are decided by enumeration.
pub const ENUMERATION_LIMIT_BITS: u32 = 16;
const CANDIDATE_LIMIT: usize = 4096;

enum RootOutcome {
    Sat(BigUint),
    Unsat,
    Unknown,
}

/// Decides a conjunction of constraints.
///
/// Roots of at most 16 bits are enumerated exhaustively. Wider roots are
/// decided by mask/interval propagation followed by a bounded candidate
/// walk; when that is not conclusive the answer is `Unknown`.
pub fn constraint_sat(constraints: &[Constraint], atoms: &AtomTable) -> SatResult {
    let mut by_root: BTreeMap<AtomId, Vec<&Constraint>> = BTreeMap::new();
    for c in constraints {
        by_root.entry(atoms.root_of(c.atom).0).or_default().push(c);
    }
    let mut witness = Witness::default();
    let mut unknown = false;
    for (root, cs) in by_root {
        match solve_root(root, &cs, atoms) {
            RootOutcome::Sat(v) => {
                witness.roots.insert(root, v);
            }
            RootOutcome::Unsat => return SatResult::Unsat,
            RootOutcome::Unknown => unknown = true,
        }
    }
    if unknown {
        SatResult::Unknown
    } else {
        SatResult::Sat(witness)
    }
}

fn slice_of(x: &BigUint, lsb: u32, width: u32) -> BigUint {
    (x >> lsb) & mask(width)
}

fn solve_root(root: AtomId, cs: &[&Constraint], atoms: &AtomTable) -> RootOutcome {
    let width = atoms.width(root);
    let located: Vec<(u32, u32, &Relation)> = cs
        .iter()
        .map(|c| (atoms.root_of(c.atom).1, atoms.width(c.atom), &c.relation))
        .collect();
    let holds = |x: &BigUint| located.iter().all(|(lsb, w, r)| r.holds(&slice_of(x, *lsb, *w)));

    if width <= ENUMERATION_LIMIT_BITS {
        for x in 0u64..(1u64 << width) {
            let x = BigUint::from(x);
            if holds(&x) {
                return RootOutcome::Sat(x);
            }
        }
        return RootOutcome::Unsat;
    }

    // Propagation: fold masked equalities, intersect ranges.
    let full = mask(width);
    let mut fixed_value = BigUint::zero();
    let mut fixed_mask = BigUint::zero();
    let mut lo = BigUint::zero();
    let mut hi = full.clone();
    for (lsb, w, r) in &located {
        let whole = *lsb == 0 && *w == width;
        let (value, m) = match r {
            Relation::Eq(v) => (v.clone(), mask(*w)),
            Relation::Ternary { value, mask: m } => (value & m, m.clone()),
            Relation::Range { lo: l, hi: h } if whole => {
                lo = lo.max(l.clone());
                hi = hi.min(h.clone());
                continue;
            }
            Relation::Range { .. } => return RootOutcome::Unknown,
            Relation::Neq(_) => continue,
        };
        let value = value << *lsb;
        let m = m << *lsb;
        let overlap = &fixed_mask & &m;
        if (&fixed_value & &overlap) != (&value & &overlap) {
            return RootOutcome::Unsat;
        }
        fixed_value |= value & &m;
        fixed_mask |= m;
    }
    if lo > hi {
        return RootOutcome::Unsat;
    }
    let mut x = match next_match(&lo, &fixed_value, &fixed_mask, width) {
        Some(x) => x,
        None => return RootOutcome::Unsat,
    };
    for _ in 0..CANDIDATE_LIMIT {
        if x > hi {
            return RootOutcome::Unsat;
        }
        if holds(&x) {
            return RootOutcome::Sat(x);
        }
        match next_match(&(&x + 1u32), &fixed_value, &fixed_mask, width) {
            Some(n) => x = n,
            None => return RootOutcome::Unsat,
        }
    }
    RootOutcome::Unknown
}

/// Scatters the low bits of `k` into the positions set in `free`.
fn deposit(k: &BigUint, free: &BigUint, width: u32) -> BigUint {
    let mut out = BigUint::zero();
    let mut i = 0u64;
    for bit in 0..u64::from(width) {
        if free.bit(bit) {
            if k.bit(i) {
                out.set_bit(bit, true);
            }
            i += 1;
        }
    }
    out
}

/// Smallest `y >= from` of `width` bits with `y & mask == value`.
fn next_match(from: &BigUint, value: &BigUint, fixed: &BigUint, width: u32) -> Option<BigUint> {
    let full = mask(width);
    if from > &full {
        return None;
    }
    let free = &full ^ fixed;
    let free_count = free.count_ones() as u32;
    let candidate = |k: &BigUint| value | deposit(k, &free, width);
    // candidate(k) is strictly increasing in k; binary search the first one >= from.
    let mut lo = BigUint::zero();
    let mut hi = BigUint::one() << free_count;
    while lo < hi {
        let mid: BigUint = (&lo + &hi) >> 1u32;
        if &candidate(&mid) >= from {
            hi = mid;
        } else {
            lo = mid + 1u32;
        }
    }
    if lo == BigUint::one() << free_count {
        None
    } else {
        Some(candidate(&lo))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(v: u64) -> BigUint {
        BigUint::from(v)
    }

    #[test]
    fn disequality_is_sat_with_witness() {
        let mut atoms = AtomTable::default();
        let e = atoms.fresh("ethernet.etherType", 16);
        let cs = [Constraint::neq(e, 16, 0x0800u32)];
        let SatResult::Sat(w) = constraint_sat(&cs, &atoms) else { panic!() };
        assert!(w.satisfies(&cs, &atoms));
        assert_ne!(w.value_of(e, &atoms), b(0x0800));
    }

    #[test]
    fn contradiction_is_unsat() {
        let mut atoms = AtomTable::default();
        let x = atoms.fresh("x", 8);
        let cs = [Constraint::eq(x, 8, 3u32), Constraint::neq(x, 8, 3u32)];
        assert_eq!(constraint_sat(&cs, &atoms), SatResult::Unsat);
    }

    #[test]
    fn ternary_and_range_unsat_matches_brute_force() {
        let mut atoms = AtomTable::default();
        let x = atoms.fresh("x", 6);
        let cs = [
            Constraint::ternary(x, 6, b(0b10_0000), b(0b11_0000)),
            Constraint::range(x, 6, b(0), b(15)),
        ];
        let brute = (0u64..64).any(|v| cs.iter().all(|c| c.relation.holds(&b(v))));
        assert!(!brute);
        assert_eq!(constraint_sat(&cs, &atoms), SatResult::Unsat);
    }

    #[test]
    fn wide_atoms_decided_by_propagation() {
        let mut atoms = AtomTable::default();
        let ip = atoms.fresh("ipv4.dstAddr", 32);
        let cs = [
            Constraint::ternary(ip, 32, b(0x0A00_0000), b(0xFF00_0000)),
            Constraint::neq(ip, 32, 0x0A00_0000u32),
            Constraint::neq(ip, 32, 0x0A00_0001u32),
        ];
        let SatResult::Sat(w) = constraint_sat(&cs, &atoms) else { panic!() };
        assert_eq!(w.value_of(ip, &atoms), b(0x0A00_0002));

        let cs = [
            Constraint::range(ip, 32, b(10), b(11)),
            Constraint::neq(ip, 32, 10u32),
            Constraint::neq(ip, 32, 11u32),
        ];
        assert_eq!(constraint_sat(&cs, &atoms), SatResult::Unsat);
    }

    #[test]
    fn slices_constrain_their_root() {
        let mut atoms = AtomTable::default();
        let r = atoms.fresh("r", 16);
        let hi = atoms.slice(r, 8, 8);
        let lo = atoms.slice(r, 0, 8);
        let cs = [Constraint::eq(hi, 8, 0xABu32), Constraint::eq(lo, 8, 0xCDu32)];
        let SatResult::Sat(w) = constraint_sat(&cs, &atoms) else { panic!() };
        assert_eq!(w.value_of(r, &atoms), b(0xABCD));
        assert_eq!(atoms.slice(r, 8, 8), hi);
        assert_eq!(atoms.slice(hi, 0, 4), atoms.slice(r, 8, 4));
    }

    #[test]
    fn negation_partitions_domain() {
        let mut atoms = AtomTable::default();
        let x = atoms.fresh("x", 6);
        let cases = [
            Constraint::eq(x, 6, 5u32),
            Constraint::ternary(x, 6, b(0b10_0100), b(0b11_0110)),
            Constraint::ternary(x, 6, b(0), b(0)),
            Constraint::range(x, 6, b(3), b(40)),
            Constraint::range(x, 6, b(0), b(63)),
        ];
        for c in cases {
            let neg = negate(&c);
            for v in 0u64..64 {
                let v = b(v);
                let hits = neg.iter().filter(|n| n.relation.holds(&v)).count();
                let expected = usize::from(!c.relation.holds(&v));
                assert_eq!(hits, expected, "{c:?} at {v}");
            }
        }
    }

    #[test]
    fn next_match_walks_in_order() {
        let m = b(0b1010);
        let v = b(0b1000);
        let all: Vec<u64> = (0u64..16).filter(|x| (x & 0b1010) == 0b1000).collect();
        let mut got: Vec<u64> = Vec::new();
        let mut from = b(0);
        while let Some(n) = next_match(&from, &v, &m, 4) {
            got.push(n.clone().try_into().unwrap());
            from = n + 1u32;
        }
        assert_eq!(got, all);
    }
}
