//! Registry of semantic rule sites and hit counting.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::exploration::ChoiceKind;
use crate::program_model::Prim;
use crate::runtime_state::StuckReason;

/// One semantic rule of the interpreter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Site {
    ParserStart,
    Extract,
    ExtractStackNext,
    ExtractVarbit,
    ParserSetMetadata,
    ReturnDirect,
    SelectCase,
    SelectDefault,
    SelectCurrent,
    ParserToControl,
    ParseErrorReturn,
    ExceptionOutOfPacket,
    ExceptionStackFull,
    ExceptionChecksum,
    HandlerExplicit,
    HandlerDefault,
    HandlerImplicitDrop,
    HandlerSetMetadata,
    HandlerToControl,
    VerifyPass,
    CalcConditionFalse,
    SkipIngressRestore,
    ControlApply,
    TableHit,
    TableMiss,
    TableDefaultAction,
    MatchExact,
    MatchTernary,
    MatchLpm,
    MatchRange,
    MatchValid,
    MatchWildcard,
    ReadMask,
    DirectStateful,
    CaseHit,
    CaseMiss,
    CaseAction,
    CaseDefault,
    IfTrue,
    IfFalse,
    ControlCall,
    CompoundAction,
    Prim(Prim),
    Extern,
    Ingress,
    Egress,
    Emit,
    Drop,
    Resubmit,
    Recirculate,
    CloneToIngress,
    CloneToEgress,
    UpdateCalculated,
    Deparse,
    Truncate,
    UndefinedEgressDrop,
    Choice(ChoiceKind),
    Stuck(StuckReason),
}

const PLAIN: [Site; 56] = [
    Site::ParserStart,
    Site::Extract,
    Site::ExtractStackNext,
    Site::ExtractVarbit,
    Site::ParserSetMetadata,
    Site::ReturnDirect,
    Site::SelectCase,
    Site::SelectDefault,
    Site::SelectCurrent,
    Site::ParserToControl,
    Site::ParseErrorReturn,
    Site::ExceptionOutOfPacket,
    Site::ExceptionStackFull,
    Site::ExceptionChecksum,
    Site::HandlerExplicit,
    Site::HandlerDefault,
    Site::HandlerImplicitDrop,
    Site::HandlerSetMetadata,
    Site::HandlerToControl,
    Site::VerifyPass,
    Site::CalcConditionFalse,
    Site::SkipIngressRestore,
    Site::ControlApply,
    Site::TableHit,
    Site::TableMiss,
    Site::TableDefaultAction,
    Site::MatchExact,
    Site::MatchTernary,
    Site::MatchLpm,
    Site::MatchRange,
    Site::MatchValid,
    Site::MatchWildcard,
    Site::ReadMask,
    Site::DirectStateful,
    Site::CaseHit,
    Site::CaseMiss,
    Site::CaseAction,
    Site::CaseDefault,
    Site::IfTrue,
    Site::IfFalse,
    Site::ControlCall,
    Site::CompoundAction,
    Site::Extern,
    Site::Ingress,
    Site::Egress,
    Site::Emit,
    Site::Drop,
    Site::Resubmit,
    Site::Recirculate,
    Site::CloneToIngress,
    Site::CloneToEgress,
    Site::UpdateCalculated,
    Site::Deparse,
    Site::Truncate,
    Site::UndefinedEgressDrop,
    Site::Choice(ChoiceKind::DeparseOrder),
];

impl Site {
    /// Every registered site. Node-local choice kinds are included; network
    /// choices and symbolic-only rules are not, since concrete single-node
    /// runs cannot reach them.
    pub fn all() -> Vec<Site> {
        let mut v: Vec<Site> = PLAIN.to_vec();
        v.extend([ChoiceKind::VerifyOrder, ChoiceKind::UpdateOrder, ChoiceKind::StatefulUpdateOrder].map(Site::Choice));
        v.extend(Prim::ALL.map(Site::Prim));
        v.extend(StuckReason::ALL.into_iter().filter(|r| *r != StuckReason::SymbolicUnsupported).map(Site::Stuck));
        v
    }

    pub fn name(self) -> String {
        match self {
            Site::Prim(p) => format!("primitive/{}", p.name()),
            Site::Choice(k) => format!("choice/{}", k.name()),
            Site::Stuck(r) => format!("stuck/{}", r.code()),
            other => {
                let dbg = format!("{other:?}");
                let mut out = String::new();
                for (i, ch) in dbg.chars().enumerate() {
                    if ch.is_uppercase() && i > 0 {
                        out.push('_');
                    }
                    out.push(ch.to_ascii_lowercase());
                }
                out
            }
        }
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Coverage {
    hits: BTreeMap<Site, u64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CoverageReport {
    pub total: usize,
    pub hit: usize,
    pub fraction: f64,
    pub sites: BTreeMap<String, u64>,
}

impl Coverage {
    pub fn hit(&mut self, site: Site) {
        *self.hits.entry(site).or_insert(0) += 1;
    }

    pub fn count(&self, site: Site) -> u64 {
        self.hits.get(&site).copied().unwrap_or(0)
    }

    pub fn merge(&mut self, other: &Coverage) {
        for (s, n) in &other.hits {
            *self.hits.entry(*s).or_insert(0) += n;
        }
    }

    pub fn report(&self) -> CoverageReport {
        let all = Site::all();
        let hit = all.iter().filter(|s| self.count(**s) > 0).count();
        CoverageReport {
            total: all.len(),
            hit,
            fraction: hit as f64 / all.len() as f64,
            sites: all.iter().map(|s| (s.name(), self.count(*s))).collect(),
        }
    }

    pub fn missed(&self) -> Vec<Site> {
        Site::all().into_iter().filter(|s| self.count(*s) == 0).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_is_duplicate_free() {
        let all = Site::all();
        let set: std::collections::BTreeSet<Site> = all.iter().copied().collect();
        assert_eq!(set.len(), all.len());
        assert!(all.len() >= 80);
        assert_eq!(Site::TableDefaultAction.name(), "table_default_action");
    }

    #[test]
    fn empty_coverage_is_zero() {
        assert_eq!(Coverage::default().report().fraction, 0.0);
    }
}
