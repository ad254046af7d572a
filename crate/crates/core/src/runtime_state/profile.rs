//! Target-specific policies.

use std::collections::BTreeMap;

use super::{Config, StuckReason};
use crate::values::Value;

/// A primitive supplied by the target rather than the language.
pub type ExternFn = fn(&mut Config, &[Value]) -> Result<(), StuckReason>;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Delivery {
    /// Last matching packet of the sender's output to the head of the
    /// receiver's input.
    #[default]
    Literal,
    /// First matching packet to the tail.
    Fifo,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TargetProfile {
    pub name: String,
    pub zero_registers: bool,
    pub drop_undef_egress: bool,
    pub delivery: Delivery,
    pub externs: BTreeMap<String, ExternFn>,
}

impl Default for TargetProfile {
    fn default() -> Self {
        TargetProfile {
            name: "default".into(),
            zero_registers: false,
            drop_undef_egress: false,
            delivery: Delivery::Literal,
            externs: BTreeMap::new(),
        }
    }
}

fn mark_to_drop(cfg: &mut Config, _: &[Value]) -> Result<(), StuckReason> {
    cfg.pkt.dropped = true;
    Ok(())
}

pub const PROFILE_NAMES: [&str; 5] = ["default", "zero-registers", "drop-undef-egress", "fifo", "extras"];

impl TargetProfile {
    /// Parses `name[+name...]`.
    pub fn parse(spec: &str) -> Result<TargetProfile, String> {
        let mut p = TargetProfile { name: spec.to_string(), ..TargetProfile::default() };
        for part in spec.split('+').map(str::trim) {
            match part {
                "default" | "" => {}
                "zero-registers" => p.zero_registers = true,
                "drop-undef-egress" | "p4c-test" => p.drop_undef_egress = true,
                "fifo" => p.delivery = Delivery::Fifo,
                "extras" => {
                    p.externs.insert("mark_to_drop".into(), mark_to_drop as ExternFn);
                }
                other => return Err(format!("unknown profile {other}; known: {}", PROFILE_NAMES.join(", "))),
            }
        }
        Ok(p)
    }
}
