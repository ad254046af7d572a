use super::*;
use crate::harness::load_program;
use crate::runtime_state::{PacketData, StuckReason, TargetProfile};
use crate::values::Relation;

const SIMPLE: &str = include_str!("../../corpus/simple.p4");
const ROUTER: &str = include_str!("../../corpus/router.p4");
const ROUTER_CTL: &str = include_str!("../../corpus/router.ctl");
const TWO: &str = include_str!("../../corpus/twodeparse.p4");
const TWO_CTL: &str = include_str!("../../corpus/twodeparse.ctl");

fn node(src: &str, ctl: &str) -> Config {
    let mut cfg = Config::new(load_program(src).unwrap(), TargetProfile::default());
    cfg.load_control_script(ctl).unwrap();
    cfg
}

#[test]
fn deterministic_run_has_one_terminal() {
    let mut cfg = node(SIMPLE, "add t 1 h1.f1:0xAA => a(0x42)");
    cfg.inject(9, PacketData::from_bytes(&[0xAA, 0x00]));
    let r = search(cfg.clone(), Budget::default(), &ChoiceKind::ALL.into_iter().collect());
    assert_eq!(r.terminals.len(), 1);
    crate::pipeline::run_node(&mut cfg, 100, &mut Coverage::default());
    assert_eq!(r.terminals[0].state.output, cfg.output);
}

#[test]
fn two_deparse_orders_give_two_outputs() {
    let mut cfg = node(TWO, TWO_CTL);
    cfg.inject(0, PacketData::from_bytes(&[0x01, 0x05]));
    let focused = search(cfg.clone(), Budget::default(), &[ChoiceKind::DeparseOrder].into());
    let outs = distinct_outputs(&focused);
    assert_eq!(outs.len(), 2, "{outs:?}");
    assert!(outs.contains(&vec![(1, "0105BB02".to_string())]));
    assert!(outs.contains(&vec![(1, "BB020105".to_string())]));
    let plain = search(cfg, Budget::default(), &BTreeSet::new());
    assert_eq!(distinct_outputs(&plain).len(), 1);
}

#[test]
fn router_symbolic_ethernet_finds_undefined_egress() {
    let base = node(ROUTER, ROUTER_CTL);
    let spec = SymbolicSpec::parse("ethernet", &base.program).unwrap();
    let r = symex_run(&base, &spec, 0, &Predicate::Stuck(Some(StuckReason::UndefinedEgress)), Budget::default());
    assert!(!r.results.is_empty());
    let found = r.results.iter().find(|p| p.constraint_text == ["ethernet.etherType != 0x800"]).expect("finding");
    assert_eq!(found.replayed, Some(true));
    assert_eq!(found.valid_headers, ["ethernet"]);
    let diags = r.diagnostics();
    assert!(diags.iter().all(|d| d.reason == "UNDEFINED_EGRESS"));
}

#[test]
fn symbolic_port_predicate_constrains_key() {
    let base = node(SIMPLE, "add t 1 h1.f1:0xAA => a(1)");
    let spec = SymbolicSpec::parse("h1", &base.program).unwrap();
    let r = symex_run(&base, &spec, 0, &Predicate::Port(1), Budget::default());
    assert_eq!(r.results.len(), 1);
    let c = &r.results[0].constraints;
    assert_eq!(c.len(), 1);
    assert_eq!(c[0].relation, Relation::Eq(0xAAu32.into()));
    assert_eq!(r.results[0].replayed, Some(true));

    let none = symex_run(&base, &spec, 0, &Predicate::Port(7), Budget::default());
    assert!(none.results.is_empty());
}
