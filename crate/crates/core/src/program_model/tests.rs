use std::collections::BTreeSet;

use proptest::prelude::*;

use super::*;
use crate::frontend::{parse_source, print_program};

const SIMPLE: &str = include_str!("../../corpus/simple.p4");
const ROUTER: &str = include_str!("../../corpus/router.p4");
const BALANCER: &str = include_str!("../../corpus/balancer.p4");

fn build(src: &str) -> Result<Program, ElabError> {
    elaborate(&parse_source(src).expect("parses"))
}

const HDR: &str = "header_type h_t { fields { f1 : 8; f2 : 8; } }\n";

#[test]
fn simple_program_table() {
    let p = build(SIMPLE).unwrap();
    let t = &p.tables[p.table("t").unwrap()];
    assert_eq!(t.reads.len(), 1);
    assert_eq!(t.reads[0].name, "h1.f1");
    assert_eq!(t.reads[0].kind, MatchKind::Exact);
    let names: Vec<_> = t.actions.iter().map(|&a| p.actions[a].name.as_str()).collect();
    assert_eq!(names, ["a", "b"]);
}

#[test]
fn validity_read_in_load_balancer() {
    let p = build(BALANCER).unwrap();
    let t = &p.tables[p.table("read_reg_table").unwrap()];
    assert!(matches!(t.reads[0].key, ReadKey::Valid(HdrLoc::Inst(_))));
    assert_eq!(t.reads[0].width, 1);
}

#[test]
fn payload_is_rejected() {
    let src = format!(
        "{HDR} header h_t h; parser start {{ return ingress; }} control ingress {{ }}
         field_list fl1 {{ h.f1; }} field_list fl2 {{ h.f2; fl1; payload; }}"
    );
    assert!(matches!(build(&src), Err(ElabError::PayloadUnsupported { .. })));
}

#[test]
fn missing_ingress() {
    let src = format!("{HDR} header h_t h; parser start {{ return egress; }} control egress {{ }}");
    assert_eq!(build(&src).unwrap_err(), ElabError::NoIngress);
}

#[test]
fn unresolved_and_duplicate_names() {
    let src = format!("{HDR} parser start {{ extract(nope); return ingress; }} control ingress {{ }}");
    assert!(matches!(build(&src), Err(ElabError::UnresolvedName { name, .. }) if name == "nope"));
    let src = format!("{HDR} header h_t h; header h_t h; parser start {{ return ingress; }} control ingress {{ }}");
    assert!(matches!(build(&src), Err(ElabError::DuplicateName { .. })));
}

#[test]
fn varbit_must_be_last() {
    let src = "header_type v_t { fields { a : *; b : 8; } length : 4; max_length : 8; }
               parser start { return ingress; } control ingress { }";
    assert!(matches!(build(src), Err(ElabError::VarbitMisplaced(_))));
    let ok = "header_type v_t { fields { len : 8; opts : *; } length : len; max_length : 8; }
              header v_t v; parser start { extract(v); return ingress; } control ingress { }";
    let p = build(ok).unwrap();
    assert_eq!(p.inst_type(p.instance("v").unwrap()).fields[1].width, 56);
    let later = "header_type v_t { fields { a : 8; opts : *; } length : b; max_length : 8; }
                 parser start { return ingress; } control ingress { }";
    assert!(matches!(build(later), Err(ElabError::VarbitMisplaced(_))));
}

fn lists(body: &str) -> Result<Program, ElabError> {
    build(&format!("{HDR} header h_t h; parser start {{ extract(h); return ingress; }} control ingress {{ }} {body}"))
}

#[test]
fn nested_field_list_flattens_depth_first() {
    let p = lists("field_list fl1 { h.f1; } field_list fl2 { h.f2; fl1; }").unwrap();
    let h = p.instance("h").unwrap();
    assert_eq!(flatten_field_list(&p, "fl2").unwrap(), [FlItem::Field(h, 1), FlItem::Field(h, 0)]);
}

#[test]
fn whole_instance_expands_in_declaration_order() {
    let p = lists("field_list all { h; 8'0x7; }").unwrap();
    let h = p.instance("h").unwrap();
    assert_eq!(
        flatten_field_list(&p, "all").unwrap(),
        [FlItem::Field(h, 0), FlItem::Field(h, 1), FlItem::Const(Bits::unsigned(8, 7))]
    );
}

#[test]
fn field_list_cycle() {
    assert!(matches!(lists("field_list fl_a { fl_b; } field_list fl_b { fl_a; }"), Err(ElabError::FieldListCycle(_))));
}

#[test]
fn router_parse_graph() {
    let p = build(ROUTER).unwrap();
    let g = build_parse_graph(&p);
    let st = |n: &str| p.state_index[n];
    let eth = p.instance("ethernet").unwrap();
    assert_eq!(g.edges.len(), 4);
    assert_eq!(g.edges[0], ParseEdge { from: st("start"), cond: EdgeCond::Always, to: PTarget::State(st("parse_ethernet")), extracts: vec![] });
    let case = &g.edges[1];
    assert_eq!(case.to, PTarget::State(st("parse_ipv4")));
    assert_eq!(case.extracts, [HdrLoc::Inst(eth)]);
    let EdgeCond::Case(v) = &case.cond else { panic!() };
    assert_eq!(v[0].0.to_u64(), Some(0x0800));
    assert_eq!(g.edges[2].cond, EdgeCond::Default);
    assert_eq!(g.edges[2].to, PTarget::Control("ingress".into()));
}

#[test]
fn simple_parse_graph() {
    let p = build(SIMPLE).unwrap();
    let g = build_parse_graph(&p);
    assert_eq!(
        g.edges,
        [ParseEdge {
            from: 0,
            cond: EdgeCond::Always,
            to: PTarget::Control("ingress".into()),
            extracts: vec![HdrLoc::Inst(p.instance("h1").unwrap())]
        }]
    );
}

const MPLS: &str = "header_type m_t { fields { label : 20; exp : 3; bos : 1; ttl : 8; } }
header_type e_t { fields { t : 16; } }
header e_t eth;
header m_t mpls[3];
parser start { extract(eth); return select(latest.t) { 0x8847 : parse_mpls; default : ingress; } }
parser parse_mpls { extract(mpls[next]); return select(latest.bos) { 0 : parse_mpls; default : ingress; } }
control ingress { }";

#[test]
fn stack_loop_in_graph_and_orders() {
    let p = build(MPLS).unwrap();
    let g = build_parse_graph(&p);
    let s = p.state_index["parse_mpls"];
    let self_edge = g.edges.iter().find(|e| e.from == s && e.to == PTarget::State(s)).unwrap();
    assert_eq!(self_edge.extracts, [HdrLoc::Next(p.stack_index["mpls"])]);
    let all: Vec<_> = p.header_instances().collect();
    let orders = p.deparse.orders(&all, 10);
    let names: Vec<_> = orders[0].iter().map(|&i| p.instances[i].name.as_str()).collect();
    assert_eq!(names, ["eth", "mpls[0]", "mpls[1]", "mpls[2]"]);
    assert_eq!(orders.len(), 1);
    assert!(p.deparse.to_dot(&p).contains("\"mpls[0]\" -> \"mpls[1]\""));
}

#[test]
fn router_order_is_unique() {
    let p = build(ROUTER).unwrap();
    let all: Vec<_> = p.header_instances().collect();
    let orders = p.deparse.orders(&all, 10);
    assert_eq!(orders, [vec![p.instance("ethernet").unwrap(), p.instance("ipv4").unwrap()]]);
}

#[test]
fn disjoint_branches_admit_both_orders() {
    let src = format!(
        "{HDR} header h_t x; header h_t y;
         parser start {{ return select(current(0, 8)) {{ 1 : px; default : py; }} }}
         parser px {{ extract(x); return ingress; }}
         parser py {{ extract(y); return ingress; }}
         control ingress {{ }}"
    );
    let p = build(&src).unwrap();
    let (x, y) = (p.instance("x").unwrap(), p.instance("y").unwrap());
    assert_eq!(p.deparse.orders(&[x, y], 10), [vec![x, y], vec![y, x]]);
    assert_eq!(p.deparse.canonical(&[y, x]), [x, y]);
}

#[test]
fn opposite_orders_conflict() {
    let src = format!(
        "{HDR} header h_t a; header h_t b;
         parser start {{ return select(current(0, 8)) {{ 1 : ab; default : ba; }} }}
         parser ab {{ extract(a); extract(b); return ingress; }}
         parser ba {{ extract(b); extract(a); return ingress; }}
         control ingress {{ }}"
    );
    assert!(matches!(build(&src), Err(ElabError::DeparseOrderConflict(_))));
}

#[test]
fn non_stack_cycle_is_rejected() {
    let src = format!(
        "{HDR} header h_t a;
         parser start {{ extract(a); return select(a.f1) {{ 1 : start; default : ingress; }} }}
         control ingress {{ }}"
    );
    assert!(matches!(build(&src), Err(ElabError::DeparseOrderConflict(_))));
}

#[test]
fn elaboration_is_stable_under_printing() {
    for src in [SIMPLE, ROUTER, BALANCER, MPLS] {
        let tree = parse_source(src).unwrap();
        let again = parse_source(&print_program(&tree)).unwrap();
        assert_eq!(elaborate(&tree).unwrap(), elaborate(&again).unwrap());
    }
}

// Random acyclic parsers over five instances; the oracle enumerates paths
// and filters all permutations.

#[derive(Clone, Debug)]
struct RandomParser {
    /// Per state: extracted instance indices and successor states (a
    /// successor index past the last state means `ingress`).
    states: Vec<(Vec<usize>, Vec<usize>)>,
}

const N_INST: usize = 5;

fn random_parser() -> impl Strategy<Value = RandomParser> {
    (1usize..=6).prop_flat_map(|n| {
        let state = |i: usize| {
            (
                proptest::collection::vec(0..N_INST, 0..3),
                proptest::collection::vec(i + 1..=n, 1..3),
            )
        };
        (0..n).map(state).collect::<Vec<_>>().prop_map(|states| RandomParser { states })
    })
}

impl RandomParser {
    fn source(&self) -> String {
        let mut s = String::from(HDR);
        for i in 0..N_INST {
            s += &format!("header h_t i{i};\n");
        }
        let name = |j: usize| if j == 0 { "start".to_string() } else { format!("s{j}") };
        let n = self.states.len();
        for (i, (ex, next)) in self.states.iter().enumerate() {
            s += &format!("parser {} {{ ", name(i));
            for e in ex {
                s += &format!("extract(i{e}); ");
            }
            let target = |j: usize| if j == n { "ingress".to_string() } else { name(j) };
            let mut cases = String::new();
            for (k, j) in next.iter().enumerate() {
                if k + 1 == next.len() {
                    cases += &format!("default : {}; ", target(*j));
                } else {
                    cases += &format!("{k} : {}; ", target(*j));
                }
            }
            s += &format!("return select(current(0, 8)) {{ {cases}}} }}\n");
        }
        s + "control ingress { }\n"
    }

    fn paths(&self, i: usize, prefix: Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if i == self.states.len() {
            out.push(prefix);
            return;
        }
        let mut p = prefix;
        p.extend(&self.states[i].0);
        for &j in &self.states[i].1 {
            self.paths(j, p.clone(), out);
        }
    }
}

fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.is_empty() {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for (k, &x) in items.iter().enumerate() {
        let mut rest = items.to_vec();
        rest.remove(k);
        for mut tail in permutations(&rest) {
            tail.insert(0, x);
            out.push(tail);
        }
    }
    out
}

proptest! {
    #[test]
    fn orders_match_path_oracle(rp in random_parser()) {
        let mut paths = Vec::new();
        rp.paths(0, Vec::new(), &mut paths);
        let mut pairs = BTreeSet::new();
        for p in &paths {
            for i in 0..p.len() {
                for j in i + 1..p.len() {
                    if p[i] != p[j] {
                        pairs.insert((p[i], p[j]));
                    }
                }
            }
        }
        let conflict = pairs.iter().any(|&(a, b)| pairs.contains(&(b, a)));
        let result = build(&rp.source());
        if conflict {
            prop_assert!(matches!(result, Err(ElabError::DeparseOrderConflict(_))));
        } else {
            let p = result.unwrap();
            let ids: Vec<usize> = (0..N_INST).map(|i| p.instance(&format!("i{i}")).unwrap()).collect();
            let expected: Vec<Vec<usize>> = permutations(&(0..N_INST).collect::<Vec<_>>())
                .into_iter()
                .filter(|perm| {
                    let pos = |x: usize| perm.iter().position(|&y| y == x).unwrap();
                    pairs.iter().all(|&(a, b)| pos(a) < pos(b))
                })
                .map(|perm| perm.into_iter().map(|k| ids[k]).collect())
                .collect();
            prop_assert_eq!(p.deparse.orders(&ids, 1000), expected);
        }
    }
}
