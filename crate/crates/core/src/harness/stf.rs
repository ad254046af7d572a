//! Line-oriented packet tests.
//!
//! ```text
//! add t 1 h1.f1:0xAA => a(0x42)    # any control-script command
//! packet 9 AA00                     # inject and run to quiescence
//! expect 1 AA**                     # next packet on port 1; * is any nibble
//! no_packet                         # the last injected packet produced nothing
//! stuck UNDEFINED_EGRESS            # the node ends stuck (reason optional)
//! profile drop-undef-egress         # target profile, before anything else
//! parse_budget 20                   # parser state budget
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;

use super::{load_program_file, read_file, Coverage};
use crate::pipeline::run_node;
use crate::program_model::Program;
use crate::runtime_state::{is_control_line, parse_control_script, Config, PacketData, Status, StuckReason, TargetProfile};

/// Packets one injection may cause before the run is cut off.
const QUIESCENCE_LIMIT: u64 = 10_000;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StfStmt {
    Control(String),
    Packet { port: u64, data: Vec<u8> },
    Expect { port: u64, pattern: Vec<Option<u8>> },
    NoPacket,
    Stuck(Option<StuckReason>),
    Profile(String),
    ParseBudget(u32),
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StfScript {
    pub stmts: Vec<(usize, StfStmt)>,
}

fn stf_err(line: usize, msg: impl fmt::Display) -> String {
    format!("STF_PARSE_ERROR: line {line}: {msg}")
}

type Pattern = Vec<Option<u8>>;

/// Hex nibbles with `*` wildcards.
fn parse_pattern(text: &str, wildcards: bool) -> Result<Vec<Option<u8>>, String> {
    let mut out = Vec::new();
    for c in text.chars().filter(|c| !c.is_whitespace()) {
        if c == '*' && wildcards {
            out.push(None);
        } else {
            out.push(Some(c.to_digit(16).ok_or_else(|| format!("bad hex digit {c}"))? as u8));
        }
    }
    if out.len() % 2 != 0 {
        return Err("odd number of hex digits".into());
    }
    Ok(out)
}

impl StfScript {
    pub fn parse(text: &str) -> Result<StfScript, String> {
        let mut stmts = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() || body.starts_with("//") {
                continue;
            }
            if is_control_line(body) {
                parse_control_script(body).map_err(|e| stf_err(line, e.message))?;
                stmts.push((line, StfStmt::Control(body.to_string())));
                continue;
            }
            let mut words = body.split_whitespace();
            let head = words.next().unwrap_or("");
            let rest: Vec<&str> = words.collect();
            let port = |rest: &[&str]| -> Result<u64, String> {
                rest.first().and_then(|p| p.parse().ok()).ok_or_else(|| stf_err(line, "expected a port number"))
            };
            let stmt = match head {
                "packet" => {
                    let nibbles = parse_pattern(&rest[1.min(rest.len())..].concat(), false).map_err(|e| stf_err(line, e))?;
                    let data = nibbles.chunks(2).map(|p| (p[0].unwrap() << 4) | p[1].unwrap()).collect();
                    StfStmt::Packet { port: port(&rest)?, data }
                }
                "expect" => {
                    let pattern = parse_pattern(&rest[1.min(rest.len())..].concat(), true).map_err(|e| stf_err(line, e))?;
                    StfStmt::Expect { port: port(&rest)?, pattern }
                }
                "no_packet" if rest.is_empty() => StfStmt::NoPacket,
                "stuck" => match rest.as_slice() {
                    [] => StfStmt::Stuck(None),
                    [r] => StfStmt::Stuck(Some(StuckReason::from_code(r).ok_or_else(|| stf_err(line, format!("unknown stuck reason {r}")))?)),
                    _ => return Err(stf_err(line, "stuck takes at most one reason")),
                },
                "profile" if rest.len() == 1 => StfStmt::Profile(rest[0].to_string()),
                "parse_budget" if rest.len() == 1 => {
                    StfStmt::ParseBudget(rest[0].parse().map_err(|_| stf_err(line, format!("bad budget {}", rest[0])))?)
                }
                _ => return Err(stf_err(line, format!("cannot parse `{body}`"))),
            };
            stmts.push((line, stmt));
        }
        Ok(StfScript { stmts })
    }

    pub fn profile(&self) -> Result<TargetProfile, String> {
        let mut p = TargetProfile::default();
        for (line, s) in &self.stmts {
            if let StfStmt::Profile(name) = s {
                p = TargetProfile::parse(name).map_err(|e| stf_err(*line, e))?;
            }
        }
        Ok(p)
    }
}

fn pattern_text(p: &[Option<u8>]) -> String {
    p.iter().map(|n| n.map_or('*', |d| char::from_digit(u32::from(d), 16).unwrap().to_ascii_uppercase())).collect()
}

fn matches(pattern: &[Option<u8>], data: &[u8]) -> bool {
    pattern.len() == data.len() * 2
        && pattern.iter().enumerate().all(|(i, n)| match n {
            None => true,
            Some(d) => {
                let b = data[i / 2];
                *d == if i % 2 == 0 { b >> 4 } else { b & 0xF }
            }
        })
}

#[derive(Clone, Debug, Serialize)]
pub struct StfResult {
    pub pass: bool,
    pub failures: Vec<String>,
    /// Emitted packets as (port, hex), in emission order.
    pub outputs: Vec<(u64, String)>,
    pub stuck: Option<String>,
    #[serde(skip)]
    pub coverage: Coverage,
}

/// Runs a parsed script against a program.
pub fn run_stf_script(program: Arc<Program>, script: &StfScript) -> Result<StfResult, String> {
    let mut cfg = Config::new(program, script.profile()?);
    let mut cov = Coverage::default();
    let mut failures = Vec::new();
    let mut expects: BTreeMap<u64, Vec<(usize, Pattern)>> = BTreeMap::new();
    let mut expect_stuck = None;
    let mut last_emitted = 0;
    for (line, s) in &script.stmts {
        match s {
            StfStmt::Control(text) => cfg.load_control_script(text).map_err(|e| stf_err(*line, e.message))?,
            StfStmt::Packet { port, data } => {
                if cfg.is_stuck() {
                    failures.push(format!("line {line}: packet not processed, node is stuck"));
                    continue;
                }
                let before = cfg.output.len();
                cfg.inject(*port, PacketData::from_bytes(data));
                run_node(&mut cfg, QUIESCENCE_LIMIT, &mut cov);
                if !cfg.input.is_empty() && !cfg.is_stuck() {
                    failures.push(format!("line {line}: no quiescence after {QUIESCENCE_LIMIT} packets"));
                    cfg.input.clear();
                }
                last_emitted = cfg.output.len() - before;
            }
            StfStmt::Expect { port, pattern } => expects.entry(*port).or_default().push((*line, pattern.clone())),
            StfStmt::NoPacket if last_emitted > 0 => failures.push(format!("line {line}: expected no packet, {last_emitted} emitted")),
            StfStmt::NoPacket => {}
            StfStmt::Stuck(r) => expect_stuck = Some((*line, *r)),
            StfStmt::Profile(_) => {}
            StfStmt::ParseBudget(n) => cfg.parse_budget = *n,
        }
    }
    let mut by_port: BTreeMap<u64, Vec<Vec<u8>>> = BTreeMap::new();
    let mut outputs = Vec::new();
    for p in &cfg.output {
        let bytes = p.data.to_bytes().ok_or("symbolic output in a concrete test")?;
        outputs.push((p.port, hex::encode_upper(&bytes)));
        by_port.entry(p.port).or_default().push(bytes);
    }
    let ports: std::collections::BTreeSet<u64> = expects.keys().chain(by_port.keys()).copied().collect();
    for port in ports {
        let want = expects.get(&port).map(Vec::as_slice).unwrap_or(&[]);
        let got = by_port.get(&port).map(Vec::as_slice).unwrap_or(&[]);
        for i in 0..want.len().max(got.len()) {
            match (want.get(i), got.get(i)) {
                (Some((line, p)), Some(g)) if !matches(p, g) => failures.push(format!(
                    "line {line}: port {port} packet {i}: expected {} got {}",
                    pattern_text(p),
                    hex::encode_upper(g)
                )),
                (Some((line, p)), None) => failures.push(format!("line {line}: port {port} packet {i}: expected {} got nothing", pattern_text(p))),
                (None, Some(g)) => failures.push(format!("port {port} packet {i}: unexpected {}", hex::encode_upper(g))),
                _ => {}
            }
        }
    }
    let stuck = match &cfg.status {
        Status::Stuck(s) => Some(s.to_string()),
        _ => None,
    };
    match (&cfg.status, expect_stuck) {
        (Status::Stuck(s), Some((line, Some(r)))) if s.reason != r => {
            failures.push(format!("line {line}: expected stuck {} got {s}", r.code()))
        }
        (Status::Stuck(_), Some(_)) => {}
        (Status::Stuck(s), None) => failures.push(format!("stuck: {s}")),
        (_, Some((line, _))) => failures.push(format!("line {line}: expected a stuck state, node is not stuck")),
        _ => {}
    }
    Ok(StfResult { pass: failures.is_empty(), failures, outputs, stuck, coverage: cov })
}

pub fn run_stf(program: &Path, stf: &Path) -> Result<StfResult, String> {
    let p = load_program_file(program)?;
    let script = StfScript::parse(&read_file(stf)?).map_err(|e| format!("{}: {e}", stf.display()))?;
    run_stf_script(p, &script).map_err(|e| format!("{}: {e}", stf.display()))
}

/// Program for an STF file: `x.stf` and `x.case.stf` both use `x.p4`.
pub fn program_for(stf: &Path) -> Option<PathBuf> {
    let name = stf.file_name()?.to_str()?.strip_suffix(".stf")?;
    let dir = stf.parent()?;
    let mut stem = name;
    loop {
        let p = dir.join(format!("{stem}.p4"));
        if p.exists() {
            return Some(p);
        }
        stem = &stem[..stem.rfind('.')?];
    }
}

/// Every STF test in `dir` with its program, sorted by path.
pub fn discover(dir: &Path) -> Result<Vec<(PathBuf, PathBuf)>, String> {
    let mut out = Vec::new();
    let entries = std::fs::read_dir(dir).map_err(|e| format!("FILE_NOT_FOUND: {}: {e}", dir.display()))?;
    for e in entries {
        let path = e.map_err(|e| e.to_string())?.path();
        if path.extension().and_then(|x| x.to_str()) == Some("stf") {
            let p = program_for(&path).ok_or_else(|| format!("FILE_NOT_FOUND: no program for {}", path.display()))?;
            out.push((p, path));
        }
    }
    out.sort();
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct CoverageRun {
    pub tests: Vec<(String, StfResult)>,
    pub report: super::CoverageReport,
    #[serde(skip)]
    pub coverage: Coverage,
}

/// Runs every test and merges their coverage. Tests that fail still count.
pub fn coverage_run(tests: &[(PathBuf, PathBuf)]) -> Result<CoverageRun, String> {
    let mut cov = Coverage::default();
    let mut results = Vec::new();
    for (p, s) in tests {
        let r = run_stf(p, s)?;
        cov.merge(&r.coverage);
        results.push((s.display().to_string(), r));
    }
    Ok(CoverageRun { tests: results, report: cov.report(), coverage: cov })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::load_program;

    const SIMPLE: &str = include_str!("../../corpus/simple.p4");

    fn run(script: &str) -> StfResult {
        run_stf_script(load_program(SIMPLE).unwrap(), &StfScript::parse(script).unwrap()).unwrap()
    }

    #[test]
    fn passes_hand_traced_test() {
        let r = run("add t 1 h1.f1:0xAA => a(0x42)\npacket 9 AA00\nexpect 1 AA42\n");
        assert!(r.pass, "{:?}", r.failures);
        assert_eq!(r.outputs, [(1, "AA42".to_string())]);
    }

    #[test]
    fn wildcard_nibbles_match_anything() {
        assert!(run("add t 1 h1.f1:0xAA => a(0x42)\npacket 9 AA00\nexpect 1 AA**\n").pass);
        assert!(run("add t 1 h1.f1:0xAA => a(0x42)\npacket 9 AA00\nexpect 1 A*4*\n").pass);
        assert!(!run("add t 1 h1.f1:0xAA => a(0x42)\npacket 9 AA00\nexpect 1 AA4*00\n").pass);
    }

    #[test]
    fn wrong_port_fails_with_report() {
        let r = run("add t 1 h1.f1:0xAA => a(0x42)\npacket 9 AA00\nexpect 2 AA42\n");
        assert!(!r.pass);
        assert_eq!(r.failures, ["port 1 packet 0: unexpected AA42", "line 3: port 2 packet 0: expected AA42 got nothing"]);
        let r = run("add t 1 h1.f1:0xAA => a(0x42)\npacket 9 AA00\nexpect 1 AA43\n");
        assert_eq!(r.failures, ["line 3: port 1 packet 0: expected AA43 got AA42"]);
    }

    #[test]
    fn no_packet_and_stuck_expectations() {
        assert!(run("packet 9 AA\nno_packet\n").pass);
        let r = run("add t 1 h1.f1:0xAA => a(0x42)\npacket 9 AA00\nno_packet\nexpect 1 AA42\n");
        assert_eq!(r.failures, ["line 3: expected no packet, 1 emitted"]);
        assert!(run("packet 9 AA00\nstuck UNDEFINED_EGRESS\n").pass);
        assert!(!run("packet 9 AA00\nstuck NO_BRANCH\n").pass);
        let r = run("packet 9 AA00\n");
        assert_eq!(r.stuck.as_deref(), Some("UNDEFINED_EGRESS at end of ingress"));
        assert!(!r.pass);
        assert!(!run("add t 1 h1.f1:0xAA => a(0x42)\npacket 9 AA00\nexpect 1 AA42\nstuck\n").pass);
    }

    #[test]
    fn profile_line_selects_target() {
        assert!(run("profile drop-undef-egress\npacket 9 BB00\nno_packet\n").pass);
    }

    #[test]
    fn malformed_scripts_are_rejected() {
        for bad in ["packet 9 ABC", "expect x AA", "packet 9 A*", "stuck BOGUS", "frobnicate", "add t 1 => a(1"] {
            let e = StfScript::parse(bad).unwrap_err();
            assert!(e.starts_with("STF_PARSE_ERROR: line 1"), "{bad}: {e}");
        }
    }

    #[test]
    fn coverage_examples() {
        assert_eq!(coverage_run(&[]).unwrap().report.fraction, 0.0);
        let r = run("add t 1 h1.f1:0xAA => a(0x42)\npacket 9 AA00\nexpect 1 AA42\n");
        let f = r.coverage.report().fraction;
        assert!(f > 0.0 && f < 1.0, "{f}");
    }

    #[test]
    fn finds_program_for_variant() {
        let dir = Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/corpus"));
        assert_eq!(program_for(&dir.join("simple.miss.stf")), Some(dir.join("simple.p4")));
        assert_eq!(program_for(&dir.join("router.p4c.stf")), Some(dir.join("router.p4")));
        assert_eq!(program_for(&dir.join("nothing.stf")), None);
    }
}
