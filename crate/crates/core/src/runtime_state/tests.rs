use std::sync::Arc;

use super::*;
use crate::frontend::parse_source;
use crate::program_model::elaborate;

const SIMPLE: &str = include_str!("../../corpus/simple.p4");
const BALANCER: &str = include_str!("../../corpus/balancer.p4");

const STACKS: &str = "
header_type e_t { fields { a : 8; b : 8; } }
header e_t s[3];
header e_t one;
header e_t two;
parser start { return ingress; }
register r { width : 8; instance_count : 2; }
counter c { type : packets_and_bytes; instance_count : 2; }
action nop() { no_op(); }
table t { reads { one.a : exact; } actions { nop; } }
control ingress { }
";

fn config(src: &str, profile: &str) -> Config {
    let program = elaborate(&parse_source(src).unwrap()).unwrap();
    Config::new(Arc::new(program), TargetProfile::parse(profile).unwrap())
}

#[test]
fn new_config_initial_values() {
    let cfg = config(SIMPLE, "default");
    let h1 = cfg.program.instance("h1").unwrap();
    assert!(!cfg.instances[h1].valid);
    assert_eq!(cfg.instances[h1].fields[0], Value::Undef);

    let cfg = config(BALANCER, "default");
    let reg = cfg.program.stateful("reg").unwrap();
    assert_eq!(cfg.register_read(reg, 0).unwrap(), Value::Undef);
    let meta = cfg.program.instance("meta").unwrap();
    assert!(cfg.instances[meta].valid);
    assert_eq!(cfg.instances[meta].fields[0], Value::zero(8));

    let cfg = config(BALANCER, "zero-registers");
    assert_eq!(cfg.register_read(reg, 0).unwrap(), Value::zero(8));
}

#[test]
fn set_field_rules() {
    let mut cfg = config(SIMPLE, "default");
    let h1 = cfg.program.instance("h1").unwrap();
    assert_eq!(cfg.set_field(h1, 1, Value::unsigned(8, 0x42)), Err(StuckReason::WriteInvalidHeader));
    cfg.add_header(h1);
    cfg.set_field(h1, 1, Value::unsigned(12, 0x142)).unwrap();
    assert_eq!(cfg.field(h1, 1).unwrap().to_u64(), Some(0x42));
    assert_eq!(cfg.field(h1, 1).unwrap().width(), Some(8));
    cfg.remove_header(h1);
    assert_eq!(cfg.field(h1, 0), Err(StuckReason::ReadInvalidHeader));

    let mut cfg = config(BALANCER, "default");
    let meta = cfg.program.instance("meta").unwrap();
    cfg.set_field(meta, 0, Value::zero(1)).unwrap();
}

#[test]
fn header_ops_against_model() {
    let mut cfg = config(STACKS, "default");
    let one = cfg.program.instance("one").unwrap();
    let two = cfg.program.instance("two").unwrap();
    cfg.add_header(one);
    assert_eq!(cfg.instances[one].fields, vec![Value::zero(8), Value::zero(8)]);
    cfg.set_field(one, 0, Value::unsigned(8, 7)).unwrap();
    cfg.copy_header(two, one);
    assert_eq!(cfg.instances[two], cfg.instances[one]);
    cfg.remove_header(one);
    assert!(!cfg.instances[one].valid);
    assert_eq!(cfg.instances[one].fields, vec![Value::Undef, Value::Undef]);
    cfg.copy_header(two, one);
    assert!(!cfg.instances[two].valid);
}

// Array model: Some(tag) is a valid element, None an invalid one.
fn model_push(m: &mut Vec<Option<u64>>, c: usize) {
    for _ in 0..c {
        m.insert(0, Some(0));
        m.pop();
    }
}

fn model_pop(m: &mut Vec<Option<u64>>, c: usize) {
    for _ in 0..c {
        m.remove(0);
        m.push(None);
    }
}

fn observe(cfg: &Config) -> Vec<Option<u64>> {
    let s = cfg.program.stack_index["s"];
    cfg.program.stacks[s].elements.iter().map(|&e| cfg.instances[e].valid.then(|| cfg.instances[e].fields[0].to_u64().unwrap())).collect()
}

#[test]
fn stack_examples() {
    let mut cfg = config(STACKS, "default");
    let s = cfg.program.stack_index["s"];
    let e = cfg.program.stacks[s].elements.clone();
    cfg.add_header(e[0]);
    cfg.set_field(e[0], 0, Value::unsigned(8, 9)).unwrap();
    cfg.stack_push(s, 1).unwrap();
    assert_eq!(observe(&cfg), vec![Some(0), Some(9), None]);
    cfg.stack_pop(s, 1).unwrap();
    assert_eq!(observe(&cfg), vec![Some(9), None, None]);
    assert_eq!(cfg.stack_pop(s, 0), Err(StuckReason::BadStackOp));
    assert_eq!(cfg.stack_push(s, 4), Err(StuckReason::BadStackOp));
    assert_eq!(cfg.stack_pop(s, 2), Err(StuckReason::UnspecifiedPrimitiveCase));
}

proptest::proptest! {
    #[test]
    fn stack_ops_match_array_model(ops in proptest::collection::vec((proptest::bool::ANY, 1usize..4, 0u64..255), 0..20)) {
        let mut cfg = config(STACKS, "default");
        let s = cfg.program.stack_index["s"];
        let elems = cfg.program.stacks[s].elements.clone();
        let mut model = vec![None; 3];
        for (push, c, tag) in ops {
            if push {
                cfg.stack_push(s, c as i64).unwrap();
                model_push(&mut model, c);
                cfg.set_field(elems[0], 0, Value::unsigned(8, tag)).unwrap();
                model[0] = Some(tag);
            } else {
                let valid = model.iter().filter(|x| x.is_some()).count();
                let r = cfg.stack_pop(s, c as i64);
                if c > valid {
                    proptest::prop_assert_eq!(r, Err(StuckReason::UnspecifiedPrimitiveCase));
                } else {
                    r.unwrap();
                    model_pop(&mut model, c);
                }
            }
            proptest::prop_assert_eq!(observe(&cfg), model.clone());
        }
    }

    #[test]
    fn field_values_fit_width(vals in proptest::collection::vec((0usize..2, proptest::num::u64::ANY, 1u32..64), 1..30)) {
        let mut cfg = config(STACKS, "default");
        let one = cfg.program.instance("one").unwrap();
        cfg.add_header(one);
        for (f, v, w) in vals {
            cfg.set_field(one, f, Value::Concrete(crate::values::Bits::new(w, v, false))).unwrap();
            let b = cfg.field(one, f).unwrap().as_bits().unwrap().clone();
            proptest::prop_assert_eq!(b.width(), 8);
            proptest::prop_assert!(b.to_u64().unwrap() < 256);
        }
    }
}

#[test]
fn registers_and_counters() {
    let mut cfg = config(BALANCER, "default");
    let reg = cfg.program.stateful("reg").unwrap();
    cfg.register_write(reg, 0, &Value::unsigned(1, 1)).unwrap();
    assert_eq!(cfg.register_read(reg, 0).unwrap().to_u64(), Some(1));
    assert_eq!(cfg.register_read(reg, 7), Err(StuckReason::IndexOob));

    let mut cfg = config(STACKS, "default");
    let c = cfg.program.stateful("c").unwrap();
    cfg.count_increment(c, 1, 60).unwrap();
    cfg.count_increment(c, 1, 40).unwrap();
    assert_eq!(cfg.counter_value(c, 1), 2);
    assert_eq!(cfg.counter_bytes(c, 1), 100);
    assert_eq!(cfg.count_increment(c, 2, 1), Err(StuckReason::IndexOob));
}

#[test]
fn snapshot_hash_canonical() {
    let mut a = config(STACKS, "default");
    let b = a.clone();
    assert_eq!(a.snapshot_hash(), b.snapshot_hash());
    let one = a.program.instance("one").unwrap();
    a.add_header(one);
    assert_ne!(a.snapshot_hash(), b.snapshot_hash());

    let lines = ["add t 1 one.a:1 => nop()", "add t 2 one.a:2 => nop()", "add t 3 one.a:3 => nop()"];
    let mut x = config(STACKS, "default");
    let mut y = config(STACKS, "default");
    for l in lines {
        x.load_control_script(l).unwrap();
    }
    for l in lines.iter().rev() {
        y.load_control_script(l).unwrap();
    }
    assert_eq!(x.snapshot_hash(), y.snapshot_hash());

    // Writing back the initial value leaves no trace.
    let mut z = config(BALANCER, "zero-registers");
    let before = z.snapshot_hash();
    let reg = z.program.stateful("reg").unwrap();
    z.register_write(reg, 0, &Value::unsigned(8, 1)).unwrap();
    z.register_write(reg, 0, &Value::unsigned(8, 0)).unwrap();
    assert_eq!(z.snapshot_hash(), before);
}

#[test]
fn control_script_errors() {
    let mut cfg = config(SIMPLE, "default");
    assert!(cfg.load_control_script("add t 1 h1.f1:0xAA => a(0x42)").is_ok());
    let e = cfg.load_control_script("add t 1 h1.f1:0xAB => b()").unwrap_err();
    assert!(e.message.contains("priority"));
    assert!(cfg.load_control_script("add t 2 h1.f1:0x1FF => b()").is_err());
    assert!(cfg.load_control_script("add t 2 => b()").is_err());
    assert!(cfg.load_control_script("add t 2 h1.f1:1 => a()").is_err());
    assert!(cfg.load_control_script("add nope 2 h1.f1:1 => b()").is_err());
}
