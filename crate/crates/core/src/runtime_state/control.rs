//! Control scripts: table entries, default actions, register overrides.
//!
//! ```text
//! add <table> <prio> <key>:<spec> ... => <action>(<arg>, ...)
//! default <table> => <action>(<arg>, ...)
//! register <name>[<idx>] = <value>
//! ```
//! A spec is `v` (exact), `v&&&m` (ternary), `v/len` (lpm), `[lo,hi]`
//! (range) or `valid:0|1`. Integers are decimal, `0x` hex, `0b` binary or
//! dotted-quad IPv4.

use std::fmt;

use num_bigint::BigUint;
use num_traits::Num;

use super::{ActionCall, Config, MatchSpec};
use crate::program_model::{MatchKind, ReadKey, StatefulKind};
use crate::values::{bit_length, Bits, Value};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ControlError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ControlError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CONTROL_ERROR line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for ControlError {}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum KeyText {
    Exact(String),
    Ternary(String, String),
    Lpm(String, u32),
    Range(String, String),
    Valid(bool),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ControlCommand {
    Add { table: String, priority: u64, keys: Vec<(String, KeyText)>, action: String, args: Vec<String> },
    Default { table: String, action: String, args: Vec<String> },
    Register { name: String, index: u64, value: String },
}

/// Parses an integer literal; the width is the literal's bit length (one
/// bit for zero), or 32 for dotted quads.
pub fn parse_int(s: &str) -> Option<Bits> {
    let s = s.trim();
    let parts: Vec<&str> = s.split('.').collect();
    if parts.len() == 4 {
        let mut v: u64 = 0;
        for p in parts {
            v = (v << 8) | u64::from(p.parse::<u8>().ok()?);
        }
        return Some(Bits::unsigned(32, v));
    }
    let n = if let Some(h) = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        BigUint::from_str_radix(h, 16).ok()?
    } else if let Some(b) = s.strip_prefix("0b").or_else(|| s.strip_prefix("0B")) {
        BigUint::from_str_radix(b, 2).ok()?
    } else {
        if s.is_empty() || !s.bytes().all(|c| c.is_ascii_digit()) {
            return None;
        }
        BigUint::from_str_radix(s, 10).ok()?
    };
    let w = bit_length(&n).max(1);
    Some(Bits::new(w, n, false))
}

fn parse_call(text: &str) -> Result<(String, Vec<String>), String> {
    let text = text.trim();
    let open = text.find('(').ok_or("expected action(args)")?;
    if !text.ends_with(')') {
        return Err("expected ')' after action arguments".into());
    }
    let name = text[..open].trim().to_string();
    let inner = text[open + 1..text.len() - 1].trim();
    let args = if inner.is_empty() { Vec::new() } else { inner.split(',').map(|a| a.trim().to_string()).collect() };
    if name.is_empty() {
        return Err("missing action name".into());
    }
    Ok((name, args))
}

fn parse_key(tok: &str) -> Result<(String, KeyText), String> {
    let (name, spec) = tok.split_once(':').ok_or_else(|| format!("key {tok} has no ':'"))?;
    let spec = spec.trim();
    let text = if let Some(v) = spec.strip_prefix("valid:") {
        match v {
            "0" => KeyText::Valid(false),
            "1" => KeyText::Valid(true),
            _ => return Err(format!("bad validity {v}")),
        }
    } else if let Some(r) = spec.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
        let (lo, hi) = r.split_once(',').ok_or("range needs [lo,hi]")?;
        KeyText::Range(lo.trim().into(), hi.trim().into())
    } else if let Some((v, m)) = spec.split_once("&&&") {
        KeyText::Ternary(v.into(), m.into())
    } else if let Some((v, l)) = spec.split_once('/') {
        KeyText::Lpm(v.into(), l.parse().map_err(|_| format!("bad prefix length {l}"))?)
    } else {
        KeyText::Exact(spec.into())
    };
    Ok((name.trim().to_string(), text))
}

fn parse_line(line: &str) -> Result<Option<ControlCommand>, String> {
    let line = line.split('#').next().unwrap_or("").trim();
    if line.is_empty() {
        return Ok(None);
    }
    let (head, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
    match head {
        "add" => {
            let (lhs, rhs) = rest.split_once("=>").ok_or("add needs '=>'")?;
            let mut toks = lhs.split_whitespace();
            let table = toks.next().ok_or("missing table")?.to_string();
            let priority = toks.next().ok_or("missing priority")?;
            let priority = parse_int(priority).and_then(|b| b.to_u64()).ok_or_else(|| format!("bad priority {priority}"))?;
            let keys = toks.map(parse_key).collect::<Result<Vec<_>, _>>()?;
            let (action, args) = parse_call(rhs)?;
            Ok(Some(ControlCommand::Add { table, priority, keys, action, args }))
        }
        "default" => {
            let (lhs, rhs) = rest.split_once("=>").ok_or("default needs '=>'")?;
            let table = lhs.trim().to_string();
            let (action, args) = parse_call(rhs)?;
            Ok(Some(ControlCommand::Default { table, action, args }))
        }
        "register" => {
            let (lhs, value) = rest.split_once('=').ok_or("register needs '='")?;
            let lhs = lhs.trim();
            let open = lhs.find('[').ok_or("register needs an index")?;
            let name = lhs[..open].trim().to_string();
            let idx = lhs[open + 1..].trim_end_matches(']');
            let index = parse_int(idx).and_then(|b| b.to_u64()).ok_or_else(|| format!("bad index {idx}"))?;
            Ok(Some(ControlCommand::Register { name, index, value: value.trim().to_string() }))
        }
        other => Err(format!("unknown command {other}")),
    }
}

/// Parses a whole script; commands are returned with their line numbers.
pub fn parse_control_script(text: &str) -> Result<Vec<(usize, ControlCommand)>, ControlError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        match parse_line(line) {
            Ok(Some(c)) => out.push((i + 1, c)),
            Ok(None) => {}
            Err(message) => return Err(ControlError { line: i + 1, message }),
        }
    }
    Ok(out)
}

/// Whether `line` is a control-script command.
pub fn is_control_line(line: &str) -> bool {
    matches!(line.split_whitespace().next(), Some("add" | "default" | "register"))
}

fn int(s: &str) -> Result<Bits, String> {
    parse_int(s).ok_or_else(|| format!("bad integer {s}"))
}

fn fitting(s: &str, width: u32) -> Result<Bits, String> {
    let b = int(s)?;
    if bit_length(b.magnitude()) > width {
        return Err(format!("{s} does not fit in {width} bits"));
    }
    Ok(b.resize(width))
}

impl Config {
    fn action_call(&self, table: usize, action: &str, args: &[String]) -> Result<ActionCall, String> {
        let program = &self.program;
        let t = &program.tables[table];
        let id = *program.action_index.get(action).ok_or_else(|| format!("unknown action {action}"))?;
        if !t.actions.contains(&id) {
            return Err(format!("action {action} is not an action of table {}", t.name));
        }
        let want = program.actions[id].params.len();
        if args.len() != want {
            return Err(format!("action {action} takes {want} arguments, got {}", args.len()));
        }
        let args = args.iter().map(|a| int(a)).collect::<Result<Vec<_>, _>>()?;
        Ok(ActionCall { action: id, args })
    }

    pub fn apply_control(&mut self, cmd: &ControlCommand) -> Result<(), String> {
        let program = self.program.clone();
        match cmd {
            ControlCommand::Add { table, priority, keys, action, args } => {
                let tid = program.table(table).ok_or_else(|| format!("unknown table {table}"))?;
                let t = &program.tables[tid];
                let mut specs: Vec<Option<MatchSpec>> = vec![None; t.reads.len()];
                for (name, text) in keys {
                    let pos = t
                        .reads
                        .iter()
                        .position(|r| r.name == *name)
                        .or_else(|| {
                            t.reads.iter().position(|r| {
                                matches!(r.key, ReadKey::Valid(_)) && (r.name == format!("{name}.valid") || r.name.strip_suffix(".valid") == Some(name))
                            })
                        })
                        .ok_or_else(|| format!("table {table} does not read {name}"))?;
                    let r = &t.reads[pos];
                    let w = r.width;
                    let spec = match (&r.key, r.kind, text) {
                        (ReadKey::Valid(_), _, KeyText::Valid(b)) => MatchSpec::Valid(*b),
                        (ReadKey::Valid(_), _, KeyText::Exact(v)) => match int(v)?.to_u64() {
                            Some(0) => MatchSpec::Valid(false),
                            Some(1) => MatchSpec::Valid(true),
                            _ => return Err(format!("validity key {name} must be 0 or 1")),
                        },
                        (ReadKey::Valid(_), ..) => return Err(format!("key {name} matches validity")),
                        (_, _, KeyText::Valid(_)) => return Err(format!("key {name} is a field, not a validity bit")),
                        (_, MatchKind::Exact, KeyText::Exact(v)) => MatchSpec::Exact(fitting(v, w)?),
                        (_, MatchKind::Ternary, KeyText::Exact(v)) => {
                            MatchSpec::Ternary { value: fitting(v, w)?, mask: Bits::new(w, crate::values::mask(w), false) }
                        }
                        (_, MatchKind::Ternary, KeyText::Ternary(v, m)) => MatchSpec::Ternary { value: fitting(v, w)?, mask: fitting(m, w)? },
                        (_, MatchKind::Lpm, KeyText::Exact(v)) => MatchSpec::Lpm { value: fitting(v, w)?, prefix: w },
                        (_, MatchKind::Lpm, KeyText::Lpm(v, l)) if *l <= w => MatchSpec::Lpm { value: fitting(v, w)?, prefix: *l },
                        (_, MatchKind::Range, KeyText::Exact(v)) => {
                            let b = fitting(v, w)?;
                            MatchSpec::Range { lo: b.clone(), hi: b }
                        }
                        (_, MatchKind::Range, KeyText::Range(lo, hi)) => MatchSpec::Range { lo: fitting(lo, w)?, hi: fitting(hi, w)? },
                        (_, kind, _) => return Err(format!("key {name}: spec does not fit a {} read", kind.name())),
                    };
                    if specs[pos].replace(spec).is_some() {
                        return Err(format!("key {name} given twice"));
                    }
                }
                let mut full = Vec::new();
                for (r, s) in t.reads.iter().zip(specs) {
                    full.push(match s {
                        Some(s) => s,
                        None if matches!(r.kind, MatchKind::Ternary | MatchKind::Lpm | MatchKind::Range | MatchKind::Valid) => MatchSpec::Any,
                        None => return Err(format!("missing exact key {}", r.name)),
                    });
                }
                let call = self.action_call(tid, action, args)?;
                self.tables[tid].install(*priority, full, call)?;
                Ok(())
            }
            ControlCommand::Default { table, action, args } => {
                let tid = program.table(table).ok_or_else(|| format!("unknown table {table}"))?;
                let call = self.action_call(tid, action, args)?;
                self.tables[tid].default = Some(call);
                Ok(())
            }
            ControlCommand::Register { name, index, value } => {
                let id = program.stateful(name).ok_or_else(|| format!("unknown register {name}"))?;
                if program.statefuls[id].kind != StatefulKind::Register {
                    return Err(format!("{name} is not a register"));
                }
                let v = Value::Concrete(int(value)?);
                self.register_write(id, *index, &v).map_err(|r| format!("register {name}[{index}]: {r}"))
            }
        }
    }

    /// Parses and applies a control script.
    pub fn load_control_script(&mut self, text: &str) -> Result<(), ControlError> {
        for (line, cmd) in parse_control_script(text)? {
            self.apply_control(&cmd).map_err(|message| ControlError { line, message })?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integers() {
        assert_eq!(parse_int("10.1.0.0").unwrap(), Bits::unsigned(32, 0x0A01_0000));
        assert_eq!(parse_int("0x0800").unwrap().width(), 12);
        assert_eq!(parse_int("0").unwrap().width(), 1);
        assert_eq!(parse_int("255").unwrap().to_u64(), Some(255));
        assert!(parse_int("ab").is_none());
    }

    #[test]
    fn add_lines() {
        let cmds = parse_control_script("add t 5 h.f:0xAA&&&0xF0 ipv4:valid:1 x:[1,4] => a(1, 0x2)\n# c\n").unwrap();
        let ControlCommand::Add { keys, args, priority, .. } = &cmds[0].1 else { panic!() };
        assert_eq!(*priority, 5);
        assert_eq!(keys[0], ("h.f".into(), KeyText::Ternary("0xAA".into(), "0xF0".into())));
        assert_eq!(keys[1], ("ipv4".into(), KeyText::Valid(true)));
        assert_eq!(keys[2], ("x".into(), KeyText::Range("1".into(), "4".into())));
        assert_eq!(args, &["1", "0x2"]);
        assert!(parse_control_script("frob t").is_err());
    }
}
