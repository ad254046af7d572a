//! Parse graph and deparse-order inference.
//!
//! Precedence comes from parse paths: `a` precedes `b` when some path
//! extracts `a` before `b`. Paths are walked while simulating stack
//! `next` counters, so a state that loops over one stack terminates once the
//! stack is full. Revisiting a state with unchanged counters is a cycle we
//! cannot order.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;

use super::*;
use crate::values::Bits;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EdgeCond {
    Always,
    /// Any of the (value, mask) alternatives.
    Case(Vec<(Bits, Bits)>),
    Default,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParseEdge {
    pub from: usize,
    pub cond: EdgeCond,
    pub to: PTarget,
    /// Instances extracted in `from`, in order.
    pub extracts: Vec<HdrLoc>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParseGraph {
    pub states: Vec<String>,
    pub edges: Vec<ParseEdge>,
}

impl ParseGraph {
    pub fn edges_from(&self, state: usize) -> impl Iterator<Item = &ParseEdge> {
        self.edges.iter().filter(move |e| e.from == state)
    }
}

pub fn build_parse_graph(program: &Program) -> ParseGraph {
    let mut edges = Vec::new();
    for (from, s) in program.parser_states.iter().enumerate() {
        let extracts: Vec<HdrLoc> = s
            .body
            .iter()
            .filter_map(|st| match st {
                PStmt::Extract(h) => Some(h.clone()),
                PStmt::SetMetadata(..) => None,
            })
            .collect();
        match &s.ret {
            PReturn::Direct(t) => edges.push(ParseEdge { from, cond: EdgeCond::Always, to: t.clone(), extracts }),
            PReturn::Select { cases, .. } => {
                for c in cases {
                    let cond = if c.values.is_empty() { EdgeCond::Default } else { EdgeCond::Case(c.values.clone()) };
                    edges.push(ParseEdge { from, cond, to: c.target.clone(), extracts: extracts.clone() });
                }
            }
        }
    }
    ParseGraph { states: program.parser_states.iter().map(|s| s.name.clone()).collect(), edges }
}

/// Admissible deparse orders: the topological orders of a precedence
/// relation over header instances (kept transitively closed).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DeparseOrders {
    /// Header instances in declaration order.
    pub nodes: Vec<InstId>,
    pub before: BTreeSet<(InstId, InstId)>,
}

impl DeparseOrders {
    pub fn precedes(&self, a: InstId, b: InstId) -> bool {
        self.before.contains(&(a, b))
    }

    /// Topological orders of `subset` in lexicographic order of instance
    /// declaration position, at most `limit` of them.
    pub fn orders(&self, subset: &[InstId], limit: usize) -> Vec<Vec<InstId>> {
        let mut items: Vec<InstId> = subset.to_vec();
        items.sort_unstable();
        items.dedup();
        let mut out = Vec::new();
        let mut used = vec![false; items.len()];
        let mut cur = Vec::with_capacity(items.len());
        self.extend(&items, &mut used, &mut cur, &mut out, limit);
        out
    }

    fn extend(&self, items: &[InstId], used: &mut [bool], cur: &mut Vec<InstId>, out: &mut Vec<Vec<InstId>>, limit: usize) {
        if out.len() >= limit {
            return;
        }
        if cur.len() == items.len() {
            out.push(cur.clone());
            return;
        }
        for i in 0..items.len() {
            if used[i] {
                continue;
            }
            let ready = (0..items.len()).all(|j| used[j] || j == i || !self.precedes(items[j], items[i]));
            if ready {
                used[i] = true;
                cur.push(items[i]);
                self.extend(items, used, cur, out, limit);
                cur.pop();
                used[i] = false;
            }
        }
    }

    /// The least admissible order by declaration position.
    pub fn canonical(&self, subset: &[InstId]) -> Vec<InstId> {
        self.orders(subset, 1).pop().unwrap_or_default()
    }

    /// Precedence DAG in DOT, transitively reduced.
    pub fn to_dot(&self, program: &Program) -> String {
        let mut s = String::from("digraph deparse {\n");
        for &n in &self.nodes {
            let _ = writeln!(s, "  \"{}\";", program.instances[n].name);
        }
        for &(a, b) in &self.before {
            let implied = self.nodes.iter().any(|&c| self.precedes(a, c) && self.precedes(c, b));
            if !implied {
                let _ = writeln!(s, "  \"{}\" -> \"{}\";", program.instances[a].name, program.instances[b].name);
            }
        }
        s.push_str("}\n");
        s
    }
}

const PATH_BUDGET: usize = 100_000;

struct Walker<'a> {
    program: &'a Program,
    graph: &'a ParseGraph,
    pairs: BTreeSet<(InstId, InstId)>,
    paths: usize,
    visiting: HashSet<(usize, Vec<u32>)>,
}

impl Walker<'_> {
    fn record(&mut self, path: &[InstId]) -> Result<(), ElabError> {
        self.paths += 1;
        if self.paths > PATH_BUDGET {
            return Err(ElabError::DeparseOrderConflict("too many parse paths to infer an order".into()));
        }
        for i in 0..path.len() {
            for j in i + 1..path.len() {
                if path[i] != path[j] {
                    self.pairs.insert((path[i], path[j]));
                }
            }
        }
        Ok(())
    }

    fn walk(&mut self, state: usize, counters: &[u32], path: &[InstId]) -> Result<(), ElabError> {
        let key = (state, counters.to_vec());
        if !self.visiting.insert(key.clone()) {
            return Err(ElabError::DeparseOrderConflict(format!(
                "parser state {} is part of a cycle that does not advance a header stack",
                self.graph.states[state]
            )));
        }
        let mut path = path.to_vec();
        let mut counters = counters.to_vec();
        let mut full = false;
        let extracts = match self.graph.edges_from(state).next() {
            Some(e) => e.extracts.clone(),
            None => Vec::new(),
        };
        for x in &extracts {
            match x {
                HdrLoc::Inst(i) => path.push(*i),
                HdrLoc::Next(s) => {
                    let stack = &self.program.stacks[*s];
                    let c = counters[*s] as usize;
                    if c >= stack.elements.len() {
                        full = true;
                        break;
                    }
                    path.push(stack.elements[c]);
                    counters[*s] += 1;
                }
                HdrLoc::Last(_) | HdrLoc::Latest => {}
            }
        }
        if full {
            self.record(&path)?;
        } else {
            let targets: BTreeSet<PTarget> = self.graph.edges_from(state).map(|e| e.to.clone()).collect();
            for t in targets {
                match t {
                    PTarget::State(next) => self.walk(next, &counters, &path)?,
                    PTarget::Control(_) | PTarget::Error(_) => self.record(&path)?,
                }
            }
        }
        self.visiting.remove(&key);
        Ok(())
    }
}

/// Infers the precedence relation from all parse paths.
pub fn infer_deparse_orders(program: &Program, graph: &ParseGraph) -> Result<DeparseOrders, ElabError> {
    let nodes: Vec<InstId> = program.header_instances().collect();
    let mut w = Walker { program, graph, pairs: BTreeSet::new(), paths: 0, visiting: HashSet::new() };
    if let Some(&start) = program.state_index.get("start") {
        w.walk(start, &vec![0; program.stacks.len()], &[])?;
    }
    let pairs = w.pairs;
    let mut before = BTreeSet::new();
    for &(a, b) in &pairs {
        if !pairs.contains(&(b, a)) {
            before.insert((a, b));
            continue;
        }
        match (program.instances[a].stack, program.instances[b].stack) {
            (Some((sa, ia)), Some((sb, ib))) if sa == sb => {
                if ia < ib {
                    before.insert((a, b));
                }
            }
            _ => {
                return Err(ElabError::DeparseOrderConflict(format!(
                    "{} and {} are extracted in both orders",
                    program.instances[a].name, program.instances[b].name
                )))
            }
        }
    }
    // Transitive closure.
    let index: BTreeMap<InstId, usize> = nodes.iter().enumerate().map(|(i, &n)| (n, i)).collect();
    let n = nodes.len();
    let mut m = vec![vec![false; n]; n];
    for &(a, b) in &before {
        m[index[&a]][index[&b]] = true;
    }
    #[allow(clippy::needless_range_loop)]
    for k in 0..n {
        for i in 0..n {
            if m[i][k] {
                for j in 0..n {
                    if m[k][j] {
                        m[i][j] = true;
                    }
                }
            }
        }
    }
    let mut closed = BTreeSet::new();
    for i in 0..n {
        if m[i][i] {
            return Err(ElabError::DeparseOrderConflict(format!(
                "cyclic precedence through {}",
                program.instances[nodes[i]].name
            )));
        }
        for j in 0..n {
            if m[i][j] {
                closed.insert((nodes[i], nodes[j]));
            }
        }
    }
    Ok(DeparseOrders { nodes, before: closed })
}
