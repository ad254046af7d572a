//! Runtime table contents.

use num_bigint::BigUint;

use crate::values::{mask, Bits};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum MatchSpec {
    Exact(Bits),
    Ternary { value: Bits, mask: Bits },
    Lpm { value: Bits, prefix: u32 },
    Range { lo: Bits, hi: Bits },
    Valid(bool),
    /// Unspecified ternary, lpm, or range key.
    Any,
}

impl MatchSpec {
    /// The (value, mask) pair equivalent to an exact, ternary or lpm spec.
    pub fn as_ternary(&self, width: u32) -> Option<(BigUint, BigUint)> {
        match self {
            MatchSpec::Exact(v) => Some((v.magnitude().clone(), mask(width))),
            MatchSpec::Ternary { value, mask: m } => Some((value.magnitude() & m.magnitude(), m.magnitude().clone())),
            MatchSpec::Lpm { value, prefix } => {
                let m = lpm_mask(width, *prefix);
                Some((value.magnitude() & &m, m))
            }
            MatchSpec::Any => Some((BigUint::default(), BigUint::default())),
            MatchSpec::Range { .. } | MatchSpec::Valid(_) => None,
        }
    }

    /// Matches a concrete key of `width` bits.
    pub fn matches_bits(&self, key: &Bits, width: u32) -> bool {
        match self {
            MatchSpec::Range { lo, hi } => lo.magnitude() <= key.magnitude() && key.magnitude() <= hi.magnitude(),
            MatchSpec::Valid(_) => false,
            other => {
                let (v, m) = other.as_ternary(width).expect("ternary form");
                (key.magnitude() & &m) == v
            }
        }
    }
}

/// The high `prefix` bits of a `width`-bit mask.
pub fn lpm_mask(width: u32, prefix: u32) -> BigUint {
    let prefix = prefix.min(width);
    mask(width) ^ mask(width - prefix)
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ActionCall {
    pub action: usize,
    pub args: Vec<Bits>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TableEntry {
    /// Index for direct statefuls; assigned at install time, never reused.
    pub id: u64,
    pub priority: u64,
    pub keys: Vec<MatchSpec>,
    pub call: ActionCall,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TableState {
    /// Strictly descending by priority.
    pub entries: Vec<TableEntry>,
    pub default: Option<ActionCall>,
    pub next_id: u64,
}

impl TableState {
    /// Installs an entry, returning its id. Priorities are unique per table.
    pub fn install(&mut self, priority: u64, keys: Vec<MatchSpec>, call: ActionCall) -> Result<u64, String> {
        let pos = match self.entries.binary_search_by(|e| priority.cmp(&e.priority)) {
            Ok(_) => return Err(format!("priority {priority} already in use")),
            Err(p) => p,
        };
        let id = self.next_id;
        self.next_id += 1;
        self.entries.insert(pos, TableEntry { id, priority, keys, call });
        Ok(id)
    }

    pub fn remove(&mut self, priority: u64) -> Option<TableEntry> {
        let pos = self.entries.iter().position(|e| e.priority == priority)?;
        Some(self.entries.remove(pos))
    }

    pub fn priority_of(&self, id: u64) -> Option<u64> {
        self.entries.iter().find(|e| e.id == id).map(|e| e.priority)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call() -> ActionCall {
        ActionCall { action: 0, args: vec![] }
    }

    #[test]
    fn lpm_masks() {
        assert_eq!(lpm_mask(32, 8), BigUint::from(0xFF00_0000u32));
        assert_eq!(lpm_mask(8, 0), BigUint::from(0u32));
        let spec = MatchSpec::Lpm { value: Bits::unsigned(32, 0x0A00_0000), prefix: 8 };
        assert!(spec.matches_bits(&Bits::unsigned(32, 0x0A63_0101), 32));
        assert!(!spec.matches_bits(&Bits::unsigned(32, 0x0B00_0000), 32));
    }

    #[test]
    fn install_keeps_descending_order() {
        let mut t = TableState::default();
        for p in [5, 9, 1, 7] {
            t.install(p, vec![], call()).unwrap();
        }
        assert!(t.install(9, vec![], call()).is_err());
        let prios: Vec<u64> = t.entries.iter().map(|e| e.priority).collect();
        assert_eq!(prios, [9, 7, 5, 1]);
        t.remove(7);
        let id = t.install(3, vec![], call()).unwrap();
        assert_eq!(id, 4);
    }

    proptest::proptest! {
        #[test]
        fn entries_stay_sorted(ops in proptest::collection::vec((proptest::bool::ANY, 0u64..20), 0..60)) {
            let mut t = TableState::default();
            for (add, p) in ops {
                if add { let _ = t.install(p, vec![], call()); } else { t.remove(p); }
                proptest::prop_assert!(t.entries.windows(2).all(|w| w[0].priority > w[1].priority));
            }
        }
    }
}
