//! Nondeterminism points and the strategies that resolve them.

use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(into = "&'static str")]
pub enum ChoiceKind {
    DeparseOrder,
    VerifyOrder,
    UpdateOrder,
    StatefulUpdateOrder,
    NetworkSchedule,
    LinkLoss,
    SymbolicBranch,
}

impl ChoiceKind {
    pub const ALL: [ChoiceKind; 7] = [
        ChoiceKind::DeparseOrder,
        ChoiceKind::VerifyOrder,
        ChoiceKind::UpdateOrder,
        ChoiceKind::StatefulUpdateOrder,
        ChoiceKind::NetworkSchedule,
        ChoiceKind::LinkLoss,
        ChoiceKind::SymbolicBranch,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ChoiceKind::DeparseOrder => "deparse-order",
            ChoiceKind::VerifyOrder => "verify-order",
            ChoiceKind::UpdateOrder => "update-order",
            ChoiceKind::StatefulUpdateOrder => "stateful-update-order",
            ChoiceKind::NetworkSchedule => "network-schedule",
            ChoiceKind::LinkLoss => "link-loss",
            ChoiceKind::SymbolicBranch => "symbolic-branch",
        }
    }

    pub fn from_name(name: &str) -> Option<ChoiceKind> {
        ChoiceKind::ALL.into_iter().find(|k| k.name() == name)
    }

    /// Parses a comma-separated list; `all` and `none` are accepted.
    pub fn parse_set(text: &str) -> Result<BTreeSet<ChoiceKind>, String> {
        let mut out = BTreeSet::new();
        for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "all" => out.extend(ChoiceKind::ALL),
                "none" => {}
                _ => {
                    out.insert(ChoiceKind::from_name(part).ok_or_else(|| format!("unknown choice kind {part}"))?);
                }
            }
        }
        Ok(out)
    }
}

impl From<ChoiceKind> for &'static str {
    fn from(k: ChoiceKind) -> Self {
        k.name()
    }
}

impl fmt::Display for ChoiceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Execution stopped at a choice the strategy cannot make yet.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Halt {
    Choice { kind: ChoiceKind, alternatives: usize },
}

/// Resolves choice points. Only called with at least two alternatives;
/// alternative 0 is always the canonical one.
pub trait Chooser {
    fn choose(&mut self, kind: ChoiceKind, alternatives: usize, site: &str) -> Result<usize, Halt>;
}

/// Always the canonical alternative.
#[derive(Clone, Copy, Debug, Default)]
pub struct Canonical;

impl Chooser for Canonical {
    fn choose(&mut self, _: ChoiceKind, _: usize, _: &str) -> Result<usize, Halt> {
        Ok(0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Taken {
    pub kind: ChoiceKind,
    pub site: String,
    pub pick: usize,
    pub of: usize,
}

impl fmt::Display for Taken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}={}/{}", self.kind, self.site, self.pick, self.of)
    }
}

/// Replays a fixed script for focused kinds and halts when it runs out.
#[derive(Clone, Debug, Default)]
pub struct ScriptChooser {
    pub focus: BTreeSet<ChoiceKind>,
    pub script: Vec<usize>,
    pos: usize,
    pub taken: Vec<Taken>,
}

impl ScriptChooser {
    pub fn new(focus: BTreeSet<ChoiceKind>, script: Vec<usize>) -> Self {
        ScriptChooser { focus, script, pos: 0, taken: Vec::new() }
    }
}

impl Chooser for ScriptChooser {
    fn choose(&mut self, kind: ChoiceKind, alternatives: usize, site: &str) -> Result<usize, Halt> {
        if !self.focus.contains(&kind) {
            return Ok(0);
        }
        let Some(&pick) = self.script.get(self.pos) else {
            return Err(Halt::Choice { kind, alternatives });
        };
        self.pos += 1;
        self.taken.push(Taken { kind, site: site.to_string(), pick, of: alternatives });
        Ok(pick.min(alternatives - 1))
    }
}

/// The `k`-th permutation of `items` in lexicographic order of positions.
pub fn nth_permutation<T: Clone>(items: &[T], mut k: usize) -> Vec<T> {
    let mut pool: Vec<T> = items.to_vec();
    let mut out = Vec::with_capacity(pool.len());
    let mut fact: usize = (1..pool.len()).product();
    while !pool.is_empty() {
        let i = k / fact.max(1);
        k %= fact.max(1);
        out.push(pool.remove(i));
        if !pool.is_empty() {
            fact /= pool.len();
        }
    }
    out
}
