//! Networks of nodes joined by directed links.
//!
//! A network step either lets one node process a packet or moves one
//! packet across a link. Which of the ready steps happens is a
//! network-schedule choice; a lossy link adds a link-loss choice.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::hash::{DefaultHasher, Hash, Hasher};
use std::path::Path;
use std::sync::Arc;

use crate::exploration::{search, Budget, Canonical, ChoiceKind, Chooser, Diagnostic, Halt, SymbolicSpec, System};
use crate::harness::{load_program_file, read_file, Coverage};
use crate::pipeline;
use crate::runtime_state::{Config, Delivery, Packet, PacketData, PacketKind, Status, Stuck, StuckReason, TargetProfile};
use crate::values::Constraint;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Endpoint {
    pub node: usize,
    pub port: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Link {
    pub from: Endpoint,
    pub to: Endpoint,
    pub lossy: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodeDecl {
    pub name: String,
    pub program: String,
    pub profile: String,
    pub init: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Topology {
    pub nodes: Vec<NodeDecl>,
    pub links: Vec<Link>,
    /// Packets injected before the run: (node, port, bytes).
    pub packets: Vec<(usize, u64, Vec<u8>)>,
}

fn topo_err(line: usize, msg: impl std::fmt::Display) -> String {
    format!("TOPO_PARSE_ERROR: line {line}: {msg}")
}

impl Topology {
    pub fn node(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.name == name)
    }

    fn endpoint(&self, text: &str, line: usize) -> Result<Endpoint, String> {
        let (n, p) = text.rsplit_once('.').ok_or_else(|| topo_err(line, format!("expected <node>.<port>, got {text}")))?;
        let node = self.node(n).ok_or_else(|| topo_err(line, format!("unknown node {n}")))?;
        let port = p.parse().map_err(|_| topo_err(line, format!("bad port {p}")))?;
        Ok(Endpoint { node, port })
    }

    /// Parses the line-oriented topology format:
    /// `node <id> <path.p4> [profile=<name>] [init=<script>]`,
    /// `link <id>.<port> <id>.<port> [lossy]` and
    /// `packet <id>.<port> <hex>`.
    pub fn parse(text: &str) -> Result<Topology, String> {
        let mut t = Topology::default();
        let mut sources = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            let words: Vec<&str> = body.split_whitespace().collect();
            match words.as_slice() {
                [] => {}
                ["node", name, program, opts @ ..] => {
                    if t.node(name).is_some() {
                        return Err(topo_err(line, format!("duplicate node {name}")));
                    }
                    let mut decl = NodeDecl { name: name.to_string(), program: program.to_string(), profile: "default".into(), init: None };
                    for o in opts {
                        if let Some(p) = o.strip_prefix("profile=") {
                            decl.profile = p.to_string();
                        } else if let Some(s) = o.strip_prefix("init=") {
                            decl.init = Some(s.to_string());
                        } else {
                            return Err(topo_err(line, format!("unknown node option {o}")));
                        }
                    }
                    t.nodes.push(decl);
                }
                ["link", a, b, rest @ ..] => {
                    let lossy = match rest {
                        [] => false,
                        ["lossy"] => true,
                        _ => return Err(topo_err(line, format!("unexpected {}", rest.join(" ")))),
                    };
                    let from = t.endpoint(a, line)?;
                    let to = t.endpoint(b, line)?;
                    if !sources.insert(from.clone()) {
                        return Err(topo_err(line, format!("{a} is already the source of a link")));
                    }
                    t.links.push(Link { from, to, lossy });
                }
                ["packet", at, hex] => {
                    let e = t.endpoint(at, line)?;
                    let bytes = hex::decode(hex).map_err(|e| topo_err(line, format!("bad hex: {e}")))?;
                    t.packets.push((e.node, e.port, bytes));
                }
                _ => return Err(topo_err(line, format!("cannot parse `{body}`"))),
            }
        }
        Ok(t)
    }

    pub fn link_from(&self, node: usize, port: u64) -> Option<usize> {
        self.links.iter().position(|l| l.from.node == node && l.from.port == port)
    }
}

/// One packet crossing a link.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Arrival {
    pub link: usize,
    pub node: usize,
    pub port: u64,
    /// Path constraints of the sender when the packet left.
    pub constraints: Vec<Constraint>,
}

#[derive(Clone, Debug)]
pub struct Network {
    pub topology: Arc<Topology>,
    pub nodes: Vec<Config>,
    pub injected: u64,
    pub lost: u64,
    pub arrivals: Vec<Arrival>,
}

/// A ready network transition.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Action {
    Process(usize),
    Deliver(usize),
}

impl Network {
    /// Fresh node states; nodes are configured independently.
    pub fn new(topology: Topology, nodes: Vec<Config>) -> Network {
        let mut net = Network { topology: Arc::new(topology), nodes, injected: 0, lost: 0, arrivals: Vec::new() };
        for (n, port, bytes) in net.topology.packets.clone() {
            net.inject(n, port, PacketData::from_bytes(&bytes));
        }
        net
    }

    /// Reads a topology file; node programs and scripts are relative to it.
    pub fn load(path: &Path) -> Result<Network, String> {
        let topo = Topology::parse(&read_file(path)?).map_err(|e| format!("{}: {e}", path.display()))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let mut nodes = Vec::new();
        for d in &topo.nodes {
            let tag = |e: String| format!("node {}: {e}", d.name);
            let program = load_program_file(&dir.join(&d.program)).map_err(tag)?;
            let profile = TargetProfile::parse(&d.profile).map_err(tag)?;
            let mut cfg = Config::new(program, profile);
            if let Some(init) = &d.init {
                let p = dir.join(init);
                let text = read_file(&p).map_err(tag)?;
                cfg.load_control_script(&text).map_err(|e| tag(format!("{}: {e}", p.display())))?;
            }
            nodes.push(cfg);
        }
        Ok(Network::new(topo, nodes))
    }

    pub fn inject(&mut self, node: usize, port: u64, data: PacketData) {
        self.injected += 1;
        self.nodes[node].inject(port, data);
    }

    /// Ready transitions in node-id order: each node's processing step,
    /// then the links leaving it.
    pub fn actions(&self) -> Vec<Action> {
        let mut out = Vec::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if n.is_stuck() {
                continue;
            }
            if !n.input.is_empty() {
                out.push(Action::Process(i));
            }
            for (l, link) in self.topology.links.iter().enumerate() {
                if link.from.node == i && n.output.iter().any(|p| p.port == link.from.port) {
                    out.push(Action::Deliver(l));
                }
            }
        }
        out
    }

    pub fn stuck(&self) -> Option<(usize, &Stuck)> {
        self.nodes.iter().enumerate().find_map(|(i, n)| match &n.status {
            Status::Stuck(s) => Some((i, s)),
            _ => None,
        })
    }

    /// Moves one packet across link `l`. Returns false if none is waiting.
    pub fn deliver(&mut self, l: usize, chooser: &mut dyn Chooser, cov: &mut Coverage) -> Result<bool, Halt> {
        let link = self.topology.links[l].clone();
        let src = &self.nodes[link.from.node];
        let policy = src.profile.delivery;
        let pick = match policy {
            Delivery::Literal => src.output.iter().rposition(|p| p.port == link.from.port),
            Delivery::Fifo => src.output.iter().position(|p| p.port == link.from.port),
        };
        let Some(pick) = pick else { return Ok(false) };
        if link.lossy {
            let site = format!("link {l}");
            if chooser.choose(ChoiceKind::LinkLoss, 2, &site)? == 1 {
                cov.hit(crate::harness::Site::Choice(ChoiceKind::LinkLoss));
                self.nodes[link.from.node].output.remove(pick);
                self.lost += 1;
                return Ok(true);
            }
        }
        let packet = self.nodes[link.from.node].output.remove(pick);
        let (atoms, constraints) = {
            let s = &self.nodes[link.from.node];
            (s.atoms.clone(), s.constraints.clone())
        };
        let dst = &mut self.nodes[link.to.node];
        // Symbolic packets bring their atoms and path constraints along.
        if dst.atoms.is_prefix_of(&atoms) {
            dst.atoms = atoms;
        } else if !atoms.is_prefix_of(&dst.atoms) {
            dst.status = Status::Stuck(Stuck { reason: StuckReason::SymbolicUnsupported, site: format!("link {l}") });
            return Ok(true);
        }
        for c in &constraints {
            if !dst.constraints.contains(c) {
                dst.constraints.push(c.clone());
            }
        }
        let id = dst.fresh_packet_id();
        let p = Packet { id, port: link.to.port, data: packet.data, kind: PacketKind::Normal, carried: None };
        match policy {
            Delivery::Literal => dst.input.push_front(p),
            Delivery::Fifo => dst.input.push_back(p),
        }
        if dst.status == Status::AwaitingInput {
            dst.status = Status::Running;
        }
        self.arrivals.push(Arrival { link: l, node: link.to.node, port: link.to.port, constraints });
        Ok(true)
    }

    pub fn apply(&mut self, a: Action, chooser: &mut dyn Chooser, cov: &mut Coverage) -> Result<(), Halt> {
        match a {
            Action::Process(i) => pipeline::step(&mut self.nodes[i], chooser, cov),
            Action::Deliver(l) => self.deliver(l, chooser, cov).map(|_| ()),
        }
    }

    /// Runs with canonical choices for at most `max_steps` steps. Returns
    /// the number of steps taken.
    pub fn run(&mut self, max_steps: u64, cov: &mut Coverage) -> u64 {
        let mut n = 0;
        while n < max_steps && !self.is_terminal() {
            System::step(self, &mut Canonical, cov).expect("canonical choices never halt");
            n += 1;
        }
        n
    }

    /// Packets emitted on ports without a link, per (node, port).
    pub fn hosts(&self) -> BTreeMap<(String, u64), Vec<PacketData>> {
        let mut out: BTreeMap<(String, u64), Vec<PacketData>> = BTreeMap::new();
        for (i, n) in self.nodes.iter().enumerate() {
            for p in &n.output {
                if self.topology.link_from(i, p.port).is_none() {
                    out.entry((self.topology.nodes[i].name.clone(), p.port)).or_default().push(p.data.clone());
                }
            }
        }
        out
    }

    /// Packets still queued at a node or waiting on a link.
    pub fn in_flight(&self) -> u64 {
        let mut n = 0;
        for (i, c) in self.nodes.iter().enumerate() {
            n += c.input.len() as u64;
            n += c.output.iter().filter(|p| self.topology.link_from(i, p.port).is_some()).count() as u64;
        }
        n
    }

    pub fn delivered_to_hosts(&self) -> u64 {
        self.hosts().values().map(|v| v.len() as u64).sum()
    }

    /// Injected plus spawned copies, and where they all went. The two
    /// sides are equal on every reachable state.
    pub fn conservation(&self) -> (u64, u64) {
        let spawned: u64 = self.nodes.iter().map(|n| n.spawned).sum();
        let dropped: u64 = self.nodes.iter().map(|n| n.dropped).sum();
        (self.injected + spawned, self.delivered_to_hosts() + self.in_flight() + dropped + self.lost)
    }

    pub fn diagnostics(&self) -> Vec<Diagnostic> {
        self.nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| match &n.status {
                Status::Stuck(s) => Some(Diagnostic {
                    reason: s.reason.code().to_string(),
                    site: s.site.clone(),
                    path: Vec::new(),
                    witness_constraints: n.constraints.iter().map(|c| c.display(&n.atoms).to_string()).collect(),
                    witness: None,
                    node: Some(self.topology.nodes[i].name.clone()),
                }),
                _ => None,
            })
            .collect()
    }
}

impl System for Network {
    fn step(&mut self, chooser: &mut dyn Chooser, cov: &mut Coverage) -> Result<(), Halt> {
        let actions = self.actions();
        if actions.is_empty() {
            return Ok(());
        }
        let k = if actions.len() < 2 { 0 } else { chooser.choose(ChoiceKind::NetworkSchedule, actions.len(), "schedule")? };
        self.apply(actions[k], chooser, cov)
    }

    fn is_terminal(&self) -> bool {
        self.stuck().is_some() || self.actions().is_empty()
    }

    fn state_hash(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for n in &self.nodes {
            n.snapshot_hash().hash(&mut h);
        }
        (self.injected, self.lost, &self.arrivals).hash(&mut h);
        h.finish()
    }
}

#[derive(Clone, Debug)]
pub struct ReachResult {
    /// One constraint set per way of reaching the destination, as text.
    pub sets: Vec<Vec<String>>,
    pub budget_exceeded: bool,
}

/// Which packets injected at `src` (on `port`) arrive at `dst`. Symbolic
/// branches fork; the schedule is canonical.
pub fn reach_query(net: &Network, src: usize, port: u64, dst: usize, spec: &SymbolicSpec, budget: Budget) -> ReachResult {
    if src == dst {
        return ReachResult { sets: vec![Vec::new()], budget_exceeded: false };
    }
    let mut start = net.clone();
    let program = start.nodes[src].program.clone();
    let data = spec.build(&program, &mut start.nodes[src].atoms);
    start.inject(src, port, data);
    let found = search(start, budget, &BTreeSet::from([ChoiceKind::SymbolicBranch]));
    let mut sets = BTreeSet::new();
    for t in &found.terminals {
        if let Some(a) = t.state.arrivals.iter().find(|a| a.node == dst) {
            let atoms = &t.state.nodes[t.state.topology.links[a.link].from.node].atoms;
            sets.insert(a.constraints.iter().map(|c| c.display(atoms).to_string()).collect::<Vec<_>>());
        }
    }
    ReachResult { sets: sets.into_iter().collect(), budget_exceeded: found.budget_exceeded }
}

#[cfg(test)]
mod tests;
