//! Command line front end. Exit codes: 0 pass, 1 usage or parse error,
//! 2 a stuck state or failed property, 3 budget exhausted.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use super::{coverage_run, discover, load_program_file, read_file, run_stf, Coverage};
use crate::exploration::{diagnostics, distinct_outputs, search, symex_run, Budget, ChoiceKind, Diagnostic, Predicate, SymbolicSpec};
use crate::network::Network;
use crate::pipeline::run_node;
use crate::runtime_state::{Config, PacketData, Status, TargetProfile};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FINDING: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "p4exec", version, about = "Run, test and explore P4-14 programs")]
pub struct Cli {
    /// Write a JSON report here.
    #[arg(long, global = true)]
    pub report: Option<PathBuf>,
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Args, Debug, Clone)]
pub struct NodeArgs {
    /// Control script with table entries (default: <program>.ctl if present).
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Input packets, one `<port> <hex>` per line (default: <program>.pkts if present).
    #[arg(long)]
    pub packets: Option<PathBuf>,
    #[arg(long, default_value = "default")]
    pub profile: String,
}

#[derive(Subcommand, Debug)]
pub enum Cmd {
    /// Run a program on concrete packets.
    Run {
        program: PathBuf,
        #[command(flatten)]
        node: NodeArgs,
        #[arg(long, default_value_t = 10_000)]
        max_packets: u64,
    },
    /// Run one packet test.
    Stf { program: PathBuf, stf: PathBuf },
    /// Explore every choice of the focused kinds.
    Search {
        /// A program, or a `.topo` network.
        target: PathBuf,
        #[command(flatten)]
        node: NodeArgs,
        /// Comma-separated choice kinds, `all` or `none`.
        #[arg(long, default_value = "none")]
        focus: String,
        #[arg(long, default_value_t = 100_000)]
        max_states: usize,
        #[arg(long, default_value_t = 1_000)]
        max_depth: usize,
    },
    /// Run one symbolic packet.
    Symex {
        program: PathBuf,
        #[command(flatten)]
        node: NodeArgs,
        /// Packet layout, e.g. `ethernet,ipv4` or `ethernet,bytes:4`.
        #[arg(long)]
        symbolic: String,
        /// any | drop | stuck | stuck:<REASON> | port:<N>
        #[arg(long, default_value = "any")]
        predicate: String,
        #[arg(long, default_value_t = 0)]
        port: u64,
        #[arg(long, default_value_t = 100_000)]
        max_states: usize,
    },
    /// Simulate a network.
    Net {
        topology: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        steps: u64,
        /// Explore all schedules (and link losses) instead of one run.
        #[arg(long)]
        search: bool,
        #[arg(long, default_value_t = 100_000)]
        max_states: usize,
    },
    /// Semantic coverage of every test in a directory.
    Coverage {
        dir: PathBuf,
        /// Fail unless at least this fraction of rule sites is hit.
        #[arg(long)]
        min: Option<f64>,
    },
    /// Report stuck states reachable from concrete or symbolic input.
    Check {
        program: PathBuf,
        #[command(flatten)]
        node: NodeArgs,
        #[arg(long)]
        symbolic: Option<String>,
        #[arg(long, default_value_t = 0)]
        port: u64,
        #[arg(long, default_value_t = 100_000)]
        max_states: usize,
    },
}

/// What a command found; the exit code is a function of this alone.
#[derive(Debug, Default, Serialize)]
pub struct Report {
    pub command: String,
    pub diagnostics: Vec<Diagnostic>,
    pub failures: Vec<String>,
    pub budget_exceeded: bool,
    pub details: serde_json::Value,
}

impl Report {
    pub fn exit_code(&self) -> i32 {
        if !self.diagnostics.is_empty() || !self.failures.is_empty() {
            EXIT_FINDING
        } else if self.budget_exceeded {
            EXIT_BUDGET
        } else {
            EXIT_PASS
        }
    }
}

fn sibling(program: &Path, ext: &str) -> Option<PathBuf> {
    let p = program.with_extension(ext);
    p.exists().then_some(p)
}

/// `<port> <hex>` lines.
pub fn parse_packets(text: &str) -> Result<Vec<(u64, Vec<u8>)>, String> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (port, hex) = body.split_once(char::is_whitespace).ok_or_else(|| format!("packets line {}: expected <port> <hex>", i + 1))?;
        let port = port.parse().map_err(|_| format!("packets line {}: bad port {port}", i + 1))?;
        let hex: String = hex.split_whitespace().collect();
        out.push((port, hex::decode(&hex).map_err(|e| format!("packets line {}: {e}", i + 1))?));
    }
    Ok(out)
}

/// A node with entries installed and its packets queued.
pub fn load_node(program: &Path, args: &NodeArgs) -> Result<Config, String> {
    let p = load_program_file(program)?;
    let mut cfg = Config::new(p, TargetProfile::parse(&args.profile)?);
    if let Some(init) = args.init.clone().or_else(|| sibling(program, "ctl")) {
        cfg.load_control_script(&read_file(&init)?).map_err(|e| format!("{}: {e}", init.display()))?;
    }
    if let Some(pk) = args.packets.clone().or_else(|| sibling(program, "pkts")) {
        for (port, bytes) in parse_packets(&read_file(&pk)?)? {
            cfg.inject(port, PacketData::from_bytes(&bytes));
        }
    }
    Ok(cfg)
}

fn outputs_json(cfg: &Config) -> serde_json::Value {
    serde_json::json!(cfg.output.iter().map(|p| serde_json::json!({"port": p.port, "data": p.data.to_string()})).collect::<Vec<_>>())
}

fn print_diagnostics(out: &mut dyn Write, ds: &[Diagnostic]) -> std::io::Result<()> {
    for d in ds {
        let node = d.node.as_ref().map(|n| format!("[{n}] ")).unwrap_or_default();
        writeln!(out, "STUCK {node}{} at {}", d.reason, d.site)?;
        if !d.witness_constraints.is_empty() {
            writeln!(out, "  when {}", d.witness_constraints.join(" && "))?;
        }
        if let Some(w) = &d.witness {
            writeln!(out, "  witness {w}")?;
        }
        if !d.path.is_empty() {
            writeln!(out, "  path {}", d.path.join(" "))?;
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn symex_cmd(
    r: &mut Report,
    program: &Path,
    node: &NodeArgs,
    symbolic: &str,
    predicate: &Predicate,
    port: u64,
    max_states: usize,
    out: &mut dyn Write,
) -> Result<(), String> {
    let io = |e: std::io::Error| e.to_string();
    let mut base = load_node(program, node)?;
    base.input.clear();
    let spec = SymbolicSpec::parse(symbolic, &base.program)?;
    let res = symex_run(&base, &spec, port, predicate, Budget { max_states, ..Budget::default() });
    for p in &res.results {
        let outcome = serde_json::to_string(&p.outcome).map_err(|e| e.to_string())?;
        writeln!(out, "path {outcome} when [{}]", p.constraint_text.join(" && ")).map_err(io)?;
        if let Some(w) = &p.witness {
            writeln!(out, "  witness {w} replayed={}", p.replayed == Some(true)).map_err(io)?;
        }
        if p.replayed == Some(false) {
            r.failures.push(format!("witness {} did not reproduce {outcome}", p.witness.as_deref().unwrap_or("?")));
        }
    }
    writeln!(out, "{} paths", res.results.len()).map_err(io)?;
    r.diagnostics = res.diagnostics();
    r.budget_exceeded = res.budget_exceeded;
    r.details = serde_json::to_value(&res).map_err(|e| e.to_string())?;
    print_diagnostics(out, &r.diagnostics).map_err(io)
}

fn execute(cmd: &Cmd, out: &mut dyn Write) -> Result<Report, String> {
    let io = |e: std::io::Error| e.to_string();
    let mut r = Report::default();
    match cmd {
        Cmd::Run { program, node, max_packets } => {
            r.command = "run".into();
            let mut cfg = load_node(program, node)?;
            let n = run_node(&mut cfg, *max_packets, &mut Coverage::default());
            for p in &cfg.output {
                writeln!(out, "{} {}", p.port, p.data).map_err(io)?;
            }
            if let Status::Stuck(s) = &cfg.status {
                writeln!(out, "STUCK {s}").map_err(io)?;
                r.diagnostics = vec![Diagnostic { reason: s.reason.code().into(), site: s.site.clone(), path: vec![], witness_constraints: vec![], witness: None, node: None }];
            }
            r.budget_exceeded = !cfg.input.is_empty() && !cfg.is_stuck();
            writeln!(out, "processed {n}, dropped {}", cfg.dropped).map_err(io)?;
            r.details = serde_json::json!({"outputs": outputs_json(&cfg), "processed": n, "dropped": cfg.dropped});
        }
        Cmd::Stf { program, stf } => {
            r.command = "stf".into();
            let res = run_stf(program, stf)?;
            for f in &res.failures {
                writeln!(out, "FAIL {f}").map_err(io)?;
            }
            if res.pass {
                writeln!(out, "PASS").map_err(io)?;
            }
            r.failures = res.failures.clone();
            r.details = serde_json::to_value(&res).map_err(|e| e.to_string())?;
        }
        Cmd::Search { target, node, focus, max_states, max_depth } => {
            r.command = "search".into();
            let focus = ChoiceKind::parse_set(focus)?;
            let budget = Budget { max_states: *max_states, max_depth: *max_depth };
            if target.extension().and_then(|e| e.to_str()) == Some("topo") {
                let net = Network::load(target)?;
                let found = search(net, budget, &focus);
                let mut outs = BTreeSet::new();
                for t in &found.terminals {
                    r.diagnostics.extend(t.state.diagnostics());
                    outs.insert(t.state.hosts().into_iter().map(|((n, p), v)| (n, p, v.iter().map(ToString::to_string).collect::<Vec<_>>())).collect::<Vec<_>>());
                }
                writeln!(out, "{} states, {} terminals, {} distinct terminal outputs", found.states, found.terminals.len(), outs.len()).map_err(io)?;
                r.budget_exceeded = found.budget_exceeded;
                r.details = serde_json::json!({"states": found.states, "terminals": found.terminals.len(), "distinct_outputs": outs});
            } else {
                let cfg = load_node(target, node)?;
                let found = search(cfg, budget, &focus);
                let outs = distinct_outputs(&found);
                writeln!(out, "{} states, {} terminals, {} distinct terminal outputs", found.states, found.terminals.len(), outs.len()).map_err(io)?;
                for (i, o) in outs.iter().enumerate() {
                    let text: Vec<String> = o.iter().map(|(p, d)| format!("{p}:{d}")).collect();
                    writeln!(out, "  output {i}: {}", text.join(" ")).map_err(io)?;
                }
                r.diagnostics = diagnostics(&found);
                r.budget_exceeded = found.budget_exceeded;
                r.details = serde_json::json!({"states": found.states, "terminals": found.terminals.len(), "distinct_outputs": outs});
            }
            print_diagnostics(out, &r.diagnostics).map_err(io)?;
        }
        Cmd::Symex { program, node, symbolic, predicate, port, max_states } => {
            r.command = "symex".into();
            symex_cmd(&mut r, program, node, symbolic, &Predicate::parse(predicate)?, *port, *max_states, out)?;
        }
        Cmd::Check { program, node, symbolic: Some(symbolic), port, max_states } => {
            r.command = "check".into();
            symex_cmd(&mut r, program, node, symbolic, &Predicate::Stuck(None), *port, *max_states, out)?;
        }
        Cmd::Check { program, node, symbolic: None, max_states, .. } => {
            r.command = "check".into();
            let cfg = load_node(program, node)?;
            if cfg.input.is_empty() {
                return Err("check needs --symbolic or input packets".into());
            }
            let focus: BTreeSet<ChoiceKind> = ChoiceKind::ALL.into_iter().collect();
            let found = search(cfg, Budget { max_states: *max_states, ..Budget::default() }, &focus);
            r.diagnostics = diagnostics(&found);
            r.budget_exceeded = found.budget_exceeded;
            writeln!(out, "{} states, {} stuck", found.states, r.diagnostics.len()).map_err(io)?;
            print_diagnostics(out, &r.diagnostics).map_err(io)?;
        }
        Cmd::Net { topology, steps, search: explore, max_states } => {
            r.command = "net".into();
            let mut net = Network::load(topology)?;
            if *explore {
                let focus = [ChoiceKind::NetworkSchedule, ChoiceKind::LinkLoss].into();
                let found = search(net, Budget { max_states: *max_states, ..Budget::default() }, &focus);
                let mut outs = BTreeSet::new();
                for t in &found.terminals {
                    r.diagnostics.extend(t.state.diagnostics());
                    outs.insert(format!("{:?}", t.state.hosts()));
                }
                writeln!(out, "{} states, {} terminals, {} distinct host captures", found.states, found.terminals.len(), outs.len()).map_err(io)?;
                r.budget_exceeded = found.budget_exceeded;
            } else {
                let n = net.run(*steps, &mut Coverage::default());
                for ((node, port), pkts) in net.hosts() {
                    for p in pkts {
                        writeln!(out, "{node}.{port} {p}").map_err(io)?;
                    }
                }
                let (a, b) = net.conservation();
                writeln!(out, "{n} steps, {a} packets in, {b} accounted for, {} lost", net.lost).map_err(io)?;
                r.diagnostics = net.diagnostics();
                r.budget_exceeded = !net.actions().is_empty() && net.stuck().is_none();
            }
            print_diagnostics(out, &r.diagnostics).map_err(io)?;
        }
        Cmd::Coverage { dir, min } => {
            r.command = "coverage".into();
            let run = coverage_run(&discover(dir)?)?;
            for (name, t) in &run.tests {
                writeln!(out, "{} {name}", if t.pass { "PASS" } else { "FAIL" }).map_err(io)?;
                r.failures.extend(t.failures.iter().map(|f| format!("{name}: {f}")));
            }
            let rep = &run.report;
            writeln!(out, "coverage {}/{} = {:.1}%", rep.hit, rep.total, rep.fraction * 100.0).map_err(io)?;
            let missed: Vec<String> = run.coverage.missed().iter().map(ToString::to_string).collect();
            if !missed.is_empty() {
                writeln!(out, "missed: {}", missed.join(" ")).map_err(io)?;
            }
            if let Some(m) = min {
                if rep.fraction < *m {
                    r.failures.push(format!("coverage {:.3} below {m}", rep.fraction));
                }
            }
            r.details = serde_json::to_value(&run).map_err(|e| e.to_string())?;
        }
    }
    Ok(r)
}

/// Runs the command line; returns the exit code.
pub fn cli_main<I: IntoIterator<Item = String>>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{e}");
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
        }
    };
    match execute(&cli.cmd, out) {
        Ok(report) => {
            if let Some(path) = &cli.report {
                let text = serde_json::to_string_pretty(&report).expect("report serializes");
                if let Err(e) = std::fs::write(path, text) {
                    let _ = writeln!(err, "cannot write {}: {e}", path.display());
                    return EXIT_USAGE;
                }
            }
            report.exit_code()
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_USAGE
        }
    }
}
