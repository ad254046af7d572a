use super::*;
use crate::harness::load_program;
use crate::runtime_state::PacketData;

const ETH: &str = include_str!("../../corpus/eth_fwd.p4");
const ETH_CTL: &str = include_str!("../../corpus/eth_fwd.ctl");
const RELAY: &str = include_str!("../../corpus/relay.p4");
const RELAY_CTL: &str = include_str!("../../corpus/relay.ctl");
const SIMPLE: &str = include_str!("../../corpus/simple.p4");

fn node(src: &str, ctl: &str, profile: &str) -> Config {
    let mut c = Config::new(load_program(src).unwrap(), TargetProfile::parse(profile).unwrap());
    c.load_control_script(ctl).unwrap();
    c
}

fn net(topo: &str, nodes: Vec<Config>) -> Network {
    Network::new(Topology::parse(topo).unwrap(), nodes)
}

fn relays(n: usize, links: &str, profile: &str) -> Network {
    let mut topo = String::new();
    for i in 0..n {
        topo += &format!("node n{i} relay.p4\n");
    }
    topo += links;
    net(&topo, (0..n).map(|_| node(RELAY, RELAY_CTL, profile)).collect())
}

#[test]
fn parses_topology() {
    let t = Topology::parse("node a x.p4 profile=fifo init=a.ctl\nnode b y.p4 # comment\nlink a.1 b.2 lossy\n").unwrap();
    assert_eq!(t.nodes.len(), 2);
    assert_eq!(t.nodes[0].profile, "fifo");
    assert_eq!(t.links, vec![Link { from: Endpoint { node: 0, port: 1 }, to: Endpoint { node: 1, port: 2 }, lossy: true }]);
    let dup = Topology::parse("node a x.p4\nnode b y.p4\nlink a.1 b.2\nlink a.1 b.3\n").unwrap_err();
    assert!(dup.starts_with("TOPO_PARSE_ERROR: line 4"), "{dup}");
    assert!(Topology::parse("node a x.p4\nlink a.1 c.2\n").unwrap_err().contains("unknown node c"));
    assert!(Topology::parse("wire a b\n").unwrap_err().starts_with("TOPO_PARSE_ERROR"));
}

#[test]
fn missing_program_is_tagged() {
    let dir = std::env::temp_dir().join(format!("p4exec-topo-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let f = dir.join("t.topo");
    std::fs::write(&f, "node a nowhere.p4\n").unwrap();
    let e = Network::load(&f).unwrap_err();
    assert!(e.starts_with("node a: FILE_NOT_FOUND"), "{e}");
}

#[test]
fn loads_bundled_chain() {
    let mut n = Network::load(Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/corpus/chain.topo"))).unwrap();
    assert_eq!((n.nodes.len(), n.topology.links.len()), (2, 1));
    n.run(100, &mut Coverage::default());
    let hosts = n.hosts();
    assert_eq!(hosts.len(), 1);
    assert_eq!(hosts[&("b".to_string(), 2)].iter().map(|d| d.to_string()).collect::<Vec<_>>(), ["FFFFFFFFFFFF0000000000010800AB"]);
    assert_eq!(n.conservation(), (2, 2));
}

#[test]
fn literal_delivery_goes_to_head_of_input() {
    let mut n = relays(2, "link n0.1 n1.2\n", "default");
    n.nodes[1].inject(0, PacketData::from_bytes(&[0x11]));
    n.nodes[0].output.push(Packet::new(7, 1, PacketData::from_bytes(&[0x22])));
    assert!(n.deliver(0, &mut Canonical, &mut Coverage::default()).unwrap());
    assert_eq!(n.nodes[1].input[0].data.to_string(), "22");
    assert_eq!(n.nodes[1].input[0].port, 2);
    assert!(n.nodes[0].output.is_empty());
    assert!(!n.deliver(0, &mut Canonical, &mut Coverage::default()).unwrap());
}

#[test]
fn fifo_delivery_keeps_order() {
    let mut n = relays(2, "link n0.1 n1.2\n", "fifo");
    n.nodes[1].inject(0, PacketData::from_bytes(&[0x11]));
    for b in [0x22, 0x33] {
        n.nodes[0].output.push(Packet::new(b, 1, PacketData::from_bytes(&[b as u8])));
    }
    n.deliver(0, &mut Canonical, &mut Coverage::default()).unwrap();
    n.deliver(0, &mut Canonical, &mut Coverage::default()).unwrap();
    let got: Vec<String> = n.nodes[1].input.iter().map(|p| p.data.to_string()).collect();
    assert_eq!(got, ["11", "22", "33"]);
}

#[test]
fn lossy_link_forks() {
    let mut n = relays(2, "link n0.1 n1.0 lossy\n", "default");
    n.nodes[0].output.push(Packet::new(0, 1, PacketData::from_bytes(&[0x22])));
    let succ = crate::exploration::successors(&n, &[ChoiceKind::LinkLoss].into(), &mut Coverage::default());
    assert_eq!(succ.len(), 2);
    assert_eq!(succ[0].0.nodes[1].input.len(), 1);
    assert_eq!(succ[1].0.lost, 1);
    assert!(succ[1].0.nodes[1].input.is_empty());
}

#[test]
fn schedule_interleaves_pending_nodes() {
    let mut n = relays(2, "", "default");
    n.inject(0, 0, PacketData::from_bytes(&[1]));
    n.inject(1, 0, PacketData::from_bytes(&[2]));
    let succ = crate::exploration::successors(&n, &[ChoiceKind::NetworkSchedule].into(), &mut Coverage::default());
    assert_eq!(succ.len(), 2);
    let quiet = relays(2, "", "default");
    assert!(quiet.actions().is_empty());
    assert!(quiet.is_terminal());
}

#[test]
fn single_node_network_matches_run_node() {
    let mut cfg = node(SIMPLE, "add t 1 h1.f1:0xAA => a(0x42)\nadd t 2 h1.f1:0xBB => b()", "default");
    for b in [[0xAA, 0], [0xBB, 1], [0xCC, 2]] {
        cfg.inject(3, PacketData::from_bytes(&b));
    }
    let mut n = net("node only simple.p4\n", vec![cfg.clone()]);
    n.injected = 3;
    n.run(100, &mut Coverage::default());
    pipeline::run_node(&mut cfg, 100, &mut Coverage::default());
    assert_eq!(n.nodes[0].output, cfg.output);
    assert_eq!(n.nodes[0].status, cfg.status);
}

fn chain(fwd_ctl: &str) -> Network {
    net("node a eth_fwd.p4\nnode b relay.p4\nlink a.1 b.1\n", vec![node(ETH, fwd_ctl, "default"), node(RELAY, RELAY_CTL, "default")])
}

#[test]
fn reach_query_matches_sweep() {
    let n = chain(ETH_CTL);
    let spec = SymbolicSpec::parse("ethernet", &n.nodes[0].program).unwrap();
    let r = reach_query(&n, 0, 0, 1, &spec, Budget::default());
    assert_eq!(r.sets, vec![vec!["ethernet.etherType == 0x800".to_string()]]);

    // Concrete sweep over every EtherType.
    let mut arriving = Vec::new();
    for t in 0..=0xFFFFu32 {
        let mut m = n.clone();
        let mut bytes = vec![0u8; 12];
        bytes.extend_from_slice(&(t as u16).to_be_bytes());
        m.inject(0, 0, PacketData::from_bytes(&bytes));
        m.run(10, &mut Coverage::default());
        if m.arrivals.iter().any(|a| a.node == 1) {
            arriving.push(t);
        }
    }
    assert_eq!(arriving, [0x0800]);
}

#[test]
fn reach_query_edge_cases() {
    let n = chain(ETH_CTL);
    let spec = SymbolicSpec::parse("ethernet", &n.nodes[0].program).unwrap();
    assert_eq!(reach_query(&n, 0, 0, 0, &spec, Budget::default()).sets, vec![Vec::<String>::new()]);
    let blackhole = chain("default by_type => _drop()");
    assert!(reach_query(&blackhole, 0, 0, 1, &spec, Budget::default()).sets.is_empty());
}

#[test]
fn stuck_node_is_reported_with_its_name() {
    let mut n = net("node a simple.p4\n", vec![node(SIMPLE, "", "default")]);
    n.inject(0, 0, PacketData::from_bytes(&[1, 2]));
    n.run(10, &mut Coverage::default());
    let d = n.diagnostics();
    assert_eq!(d.len(), 1);
    assert_eq!(d[0].reason, "UNDEFINED_EGRESS");
    assert_eq!(d[0].node.as_deref(), Some("a"));
}
