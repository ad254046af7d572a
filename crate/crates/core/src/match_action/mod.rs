//! Controls, table application and the primitive action catalog.

use num_bigint::{BigUint, Sign};
use num_traits::ToPrimitive;

use crate::checksum_hash;
use crate::exploration::ChoiceKind;
use crate::harness::Site;
use crate::interp::{sym_range, sym_ternary, Cond, Ctx, Flow};
use crate::program_model::{
    Arg, CStmt, Call, Callee, CaseSel, FieldLoc, FlItem, HdrLoc, Prim, ReadKey, StatefulBinding,
    StatefulKind,
};
use crate::runtime_state::{CloneRequest, Digest, MatchSpec, MeterEvent, StuckReason, CALL_DEPTH_LIMIT};
use crate::values::{apply_binop, mask, BinOp, Bits, Value};

/// Runs a control block. Execution stops once the packet is dropped.
pub fn exec_control(ctx: &mut Ctx, name: &str) -> Flow<()> {
    let program = ctx.program.clone();
    let site = format!("control {name}");
    let Some(body) = program.controls.get(name) else {
        return ctx.stuck(StuckReason::NoBranch, &site);
    };
    if ctx.depth >= CALL_DEPTH_LIMIT {
        return ctx.stuck(StuckReason::CallDepth, &site);
    }
    ctx.depth += 1;
    let r = exec_block(ctx, body);
    ctx.depth -= 1;
    r
}

fn exec_block(ctx: &mut Ctx, body: &[CStmt]) -> Flow<()> {
    for stmt in body {
        if ctx.cfg.pkt.dropped {
            return Ok(());
        }
        match stmt {
            CStmt::Apply { table, cases } => {
                ctx.hit(Site::ControlApply);
                let (hit, action) = apply_table(ctx, *table)?;
                let chosen = if cases.iter().any(|(c, _)| matches!(c, CaseSel::Hit | CaseSel::Miss)) {
                    let want = if hit { CaseSel::Hit } else { CaseSel::Miss };
                    cases.iter().find(|(c, _)| *c == want)
                } else {
                    cases
                        .iter()
                        .find(|(c, _)| matches!(c, CaseSel::Action(a) if Some(*a) == action))
                        .or_else(|| cases.iter().find(|(c, _)| *c == CaseSel::Default))
                };
                if let Some((sel, body)) = chosen {
                    ctx.hit(match sel {
                        CaseSel::Hit => Site::CaseHit,
                        CaseSel::Miss => Site::CaseMiss,
                        CaseSel::Action(_) => Site::CaseAction,
                        CaseSel::Default => Site::CaseDefault,
                    });
                    exec_block(ctx, body)?;
                }
            }
            CStmt::If { cond, then, otherwise, site } => {
                let regions = ctx.eval_cond(cond);
                let regions = ctx.check(regions, site)?;
                let taken = ctx.pick_region(regions, site)?;
                ctx.hit(if taken { Site::IfTrue } else { Site::IfFalse });
                exec_block(ctx, if taken { then } else { otherwise })?;
            }
            CStmt::Call(name) => {
                ctx.hit(Site::ControlCall);
                exec_control(ctx, name)?;
            }
        }
    }
    Ok(())
}

/// A table key: the value read and the read mask to apply.
struct Key {
    value: Value,
    width: u32,
    mask: Option<BigUint>,
}

fn spec_cond(ctx: &Ctx, key: &Key, spec: &MatchSpec) -> Result<Cond, StuckReason> {
    let rm = key.mask.clone().unwrap_or_else(|| mask(key.width));
    Ok(match (spec, &key.value) {
        (MatchSpec::Any, _) => Cond::True,
        (MatchSpec::Valid(b), Value::Concrete(v)) => Cond::from_bool(v.is_zero() != *b),
        (MatchSpec::Range { lo, hi }, Value::Concrete(v)) => {
            let x = v.magnitude() & &rm;
            Cond::from_bool(lo.magnitude() <= &x && &x <= hi.magnitude())
        }
        (MatchSpec::Range { lo, hi }, Value::Symbolic(s)) if key.mask.is_none() => {
            sym_range(s, &ctx.cfg.atoms, lo.magnitude(), hi.magnitude())
        }
        (MatchSpec::Range { .. } | MatchSpec::Valid(_), _) => {
            return Err(StuckReason::SymbolicUnsupported)
        }
        (other, value) => {
            let (v, m) = other.as_ternary(key.width).expect("ternary form");
            let m = m & &rm;
            let v = v & &m;
            match value {
                Value::Concrete(b) => Cond::from_bool((b.magnitude() & &m) == v),
                Value::Symbolic(s) => sym_ternary(s, &ctx.cfg.atoms, &v, &m),
                Value::Undef => Cond::False,
            }
        }
    })
}

fn spec_site(spec: &MatchSpec) -> Site {
    match spec {
        MatchSpec::Exact(_) => Site::MatchExact,
        MatchSpec::Ternary { .. } => Site::MatchTernary,
        MatchSpec::Lpm { .. } => Site::MatchLpm,
        MatchSpec::Range { .. } => Site::MatchRange,
        MatchSpec::Valid(_) => Site::MatchValid,
        MatchSpec::Any => Site::MatchWildcard,
    }
}

/// Applies a table: the highest-priority matching entry's action runs,
/// else the default action if one is installed. Returns whether an entry
/// matched and the action that ran.
pub fn apply_table(ctx: &mut Ctx, table: usize) -> Flow<(bool, Option<usize>)> {
    let program = ctx.program.clone();
    let t = &program.tables[table];
    let site = format!("table {}", t.name);
    let mut keys = Vec::with_capacity(t.reads.len());
    for r in &t.reads {
        let value = match &r.key {
            ReadKey::Valid(h) => Value::Concrete(Bits::from_bool(ctx.resolve(h).map(|i| ctx.cfg.instances[i].valid).unwrap_or(false))),
            ReadKey::Field(loc) => {
                let inst = ctx.resolve(&loc.hdr);
                let inst = ctx.check(inst, &site)?;
                let h = &ctx.cfg.instances[inst];
                if !h.valid {
                    return ctx.stuck(StuckReason::ReadInvalidHeader, &site);
                }
                let v = h.fields[loc.field].clone();
                if v.is_undef() {
                    return ctx.stuck(StuckReason::UndefInExpr, &site);
                }
                v
            }
        };
        if r.mask.is_some() {
            ctx.hit(Site::ReadMask);
        }
        keys.push(Key { value, width: r.width, mask: r.mask.as_ref().map(|m| m.magnitude() & mask(r.width)) });
    }
    let entries = ctx.cfg.tables[table].entries.clone();
    let mut conds = Vec::with_capacity(entries.len());
    for e in &entries {
        let mut c = Cond::True;
        for (k, spec) in keys.iter().zip(&e.keys) {
            if c == Cond::False {
                break;
            }
            let kc = spec_cond(ctx, k, spec);
            let kc = ctx.check(kc, &site)?;
            c = c.and(kc);
        }
        conds.push(c);
    }
    match ctx.first_match(conds, &site)? {
        Some(i) => {
            let e = &entries[i];
            ctx.hit(Site::TableHit);
            for spec in &e.keys {
                ctx.hit(spec_site(spec));
            }
            ctx.cfg.pkt.entry = Some((table, e.id));
            let args = e.call.args.iter().cloned().map(Value::Concrete).collect();
            exec_action(ctx, e.call.action, args)?;
            let direct: Vec<usize> = t
                .direct
                .iter()
                .copied()
                .filter(|&s| !matches!(program.statefuls[s].kind, StatefulKind::Register))
                .collect();
            let order = ctx.choose_order(ChoiceKind::StatefulUpdateOrder, &direct, &site)?;
            for s in order {
                ctx.hit(Site::DirectStateful);
                match program.statefuls[s].kind {
                    StatefulKind::Counter(_) => {
                        let bytes = ctx.cfg.pkt.data.byte_len();
                        let r = ctx.cfg.count_increment(s, e.id, bytes);
                        ctx.check(r, &site)?;
                    }
                    _ => ctx.cfg.meter_log.push(MeterEvent { meter: s, index: e.id }),
                }
            }
            Ok((true, Some(e.call.action)))
        }
        None => {
            ctx.hit(Site::TableMiss);
            ctx.cfg.pkt.entry = None;
            match ctx.cfg.tables[table].default.clone() {
                Some(call) => {
                    ctx.hit(Site::TableDefaultAction);
                    let args = call.args.into_iter().map(Value::Concrete).collect();
                    exec_action(ctx, call.action, args)?;
                    Ok((false, Some(call.action)))
                }
                None => Ok((false, None)),
            }
        }
    }
}

/// Runs a compound action with its arguments bound in a new frame.
pub fn exec_action(ctx: &mut Ctx, action: usize, args: Vec<Value>) -> Flow<()> {
    let program = ctx.program.clone();
    let a = &program.actions[action];
    if ctx.cfg.pkt.frames.len() >= CALL_DEPTH_LIMIT {
        return ctx.stuck(StuckReason::CallDepth, &format!("action {}", a.name));
    }
    ctx.cfg.pkt.frames.push(args);
    for call in &a.body {
        if let Err(e) = exec_call(ctx, call) {
            ctx.cfg.pkt.frames.pop();
            return Err(e);
        }
    }
    ctx.cfg.pkt.frames.pop();
    Ok(())
}

fn exec_call(ctx: &mut Ctx, call: &Call) -> Flow<()> {
    let site = call.site.as_str();
    match &call.callee {
        Callee::Compound(id) => {
            ctx.hit(Site::CompoundAction);
            let mut vals = Vec::with_capacity(call.args.len());
            for a in &call.args {
                let v = value_arg(ctx, a);
                vals.push(ctx.check(v, site)?);
            }
            exec_action(ctx, *id, vals)
        }
        Callee::External(name) => {
            let Some(f) = ctx.cfg.profile.externs.get(name).copied() else {
                return ctx.stuck(StuckReason::UnknownPrimitive, site);
            };
            ctx.hit(Site::Extern);
            let mut vals = Vec::with_capacity(call.args.len());
            for a in &call.args {
                let v = value_arg(ctx, a);
                vals.push(ctx.check(v, site)?);
            }
            let r = f(ctx.cfg, &vals);
            ctx.check(r, site)
        }
        Callee::Primitive(p) => {
            ctx.hit(Site::Prim(*p));
            let r = exec_primitive(ctx, *p, &call.args);
            ctx.check(r, site)
        }
    }
}

fn value_arg(ctx: &mut Ctx, a: &Arg) -> Result<Value, StuckReason> {
    match a {
        Arg::Value(e) => ctx.eval(e),
        Arg::Field(f) => ctx.read_field(f),
        _ => Err(StuckReason::UnspecifiedPrimitiveCase),
    }
}

fn dst(a: &Arg) -> &FieldLoc {
    match a {
        Arg::Field(f) => f,
        _ => unreachable!("elaboration checks destination arguments"),
    }
}

fn header(a: &Arg) -> &HdrLoc {
    match a {
        Arg::Header(h) => h,
        _ => unreachable!("elaboration checks header arguments"),
    }
}

fn stateful(a: &Arg) -> usize {
    match a {
        Arg::Stateful(s) => *s,
        _ => unreachable!("elaboration checks stateful arguments"),
    }
}

/// A concrete non-negative integer argument.
fn uint(ctx: &mut Ctx, a: &Arg) -> Result<u64, StuckReason> {
    match value_arg(ctx, a)? {
        Value::Concrete(b) => {
            let i = b.as_int();
            if i.sign() == Sign::Minus {
                return Err(StuckReason::UnspecifiedPrimitiveCase);
            }
            i.to_u64().ok_or(StuckReason::IndexOob)
        }
        Value::Undef => Err(StuckReason::UndefInExpr),
        Value::Symbolic(_) => Err(StuckReason::SymbolicUnsupported),
    }
}

/// Destination field that must belong to a valid header.
fn writable(ctx: &Ctx, loc: &FieldLoc) -> Result<usize, StuckReason> {
    let inst = ctx.resolve(&loc.hdr).map_err(|r| match r {
        StuckReason::ReadInvalidHeader => StuckReason::WriteInvalidHeader,
        other => other,
    })?;
    if !ctx.cfg.instances[inst].valid {
        return Err(StuckReason::WriteInvalidHeader);
    }
    Ok(inst)
}

/// Index of a stateful cell: explicit, or the matched entry for direct
/// bindings.
fn cell_index(ctx: &mut Ctx, id: usize, arg: Option<&Arg>) -> Result<u64, StuckReason> {
    match arg {
        Some(a) => uint(ctx, a),
        None => match ctx.program.statefuls[id].binding {
            StatefulBinding::Direct(t) => match ctx.cfg.pkt.entry {
                Some((tt, e)) if tt == t => Ok(e),
                _ => Err(StuckReason::UnspecifiedPrimitiveCase),
            },
            _ => Err(StuckReason::UnspecifiedPrimitiveCase),
        },
    }
}

fn field_list_values(ctx: &Ctx, name: &str) -> Vec<String> {
    let items = ctx.program.flatten_field_list(name).unwrap_or(&[]);
    items
        .iter()
        .map(|it| match it {
            FlItem::Field(i, f) => {
                let h = &ctx.cfg.instances[*i];
                if h.valid {
                    h.fields[*f].to_string()
                } else {
                    Value::Undef.to_string()
                }
            }
            FlItem::Const(b) => b.to_string(),
        })
        .collect()
}

fn exec_primitive(ctx: &mut Ctx, p: Prim, args: &[Arg]) -> Result<(), StuckReason> {
    let egress = ctx.cfg.pkt.egress;
    match p {
        Prim::ModifyField => {
            let loc = dst(&args[0]);
            let inst = writable(ctx, loc)?;
            let v = value_arg(ctx, &args[1])?;
            let v = match args.get(2) {
                None => v,
                Some(m) => {
                    let m = value_arg(ctx, m)?;
                    let old = ctx.cfg.instances[inst].fields[loc.field].clone();
                    let width = ctx.program.field_info(inst, loc.field).width;
                    let keep = apply_binop(BinOp::Xor, &m, &Value::Concrete(Bits::new(width.max(m.width().unwrap_or(1)), mask(width.max(m.width().unwrap_or(1))), false)))?;
                    let a = apply_binop(BinOp::And, &old, &keep)?;
                    let b = apply_binop(BinOp::And, &v, &m)?;
                    apply_binop(BinOp::Or, &a, &b)?
                }
            };
            ctx.cfg.set_field(inst, loc.field, v)?;
        }
        Prim::AddToField | Prim::SubtractFromField => {
            let loc = dst(&args[0]);
            let inst = writable(ctx, loc)?;
            let old = ctx.cfg.instances[inst].fields[loc.field].clone();
            let v = value_arg(ctx, &args[1])?;
            let op = if p == Prim::AddToField { BinOp::Add } else { BinOp::Sub };
            let r = apply_binop(op, &old, &v)?;
            ctx.cfg.set_field(inst, loc.field, r)?;
        }
        Prim::Add | Prim::Subtract | Prim::BitAnd | Prim::BitOr | Prim::BitXor | Prim::ShiftLeft | Prim::ShiftRight => {
            let loc = dst(&args[0]);
            let inst = writable(ctx, loc)?;
            let a = value_arg(ctx, &args[1])?;
            let b = value_arg(ctx, &args[2])?;
            let op = match p {
                Prim::Add => BinOp::Add,
                Prim::Subtract => BinOp::Sub,
                Prim::BitAnd => BinOp::And,
                Prim::BitOr => BinOp::Or,
                Prim::BitXor => BinOp::Xor,
                Prim::ShiftLeft => BinOp::Shl,
                _ => BinOp::Shr,
            };
            let r = match apply_binop(op, &a, &b) {
                Err(crate::values::ValueError::NegativeShift) => return Err(StuckReason::UnspecifiedPrimitiveCase),
                other => other?,
            };
            ctx.cfg.set_field(inst, loc.field, r)?;
        }
        Prim::AddHeader => {
            let inst = ctx.resolve(header(&args[0]))?;
            if !ctx.cfg.instances[inst].valid {
                ctx.cfg.add_header(inst);
            }
        }
        Prim::RemoveHeader => {
            let inst = ctx.resolve(header(&args[0]))?;
            ctx.cfg.remove_header(inst);
        }
        Prim::CopyHeader => {
            let d = ctx.resolve(header(&args[0]))?;
            let s = ctx.resolve(header(&args[1]))?;
            if ctx.program.instances[d].header_type != ctx.program.instances[s].header_type {
                return Err(StuckReason::UnspecifiedPrimitiveCase);
            }
            ctx.cfg.copy_header(d, s);
        }
        Prim::Push | Prim::Pop => {
            let Arg::Stack(s) = &args[0] else { unreachable!() };
            let count = match args.get(1) {
                Some(a) => match value_arg(ctx, a)? {
                    Value::Concrete(b) => b.as_int().to_i64().unwrap_or(i64::MAX),
                    Value::Undef => return Err(StuckReason::UndefInExpr),
                    Value::Symbolic(_) => return Err(StuckReason::SymbolicUnsupported),
                },
                None => 1,
            };
            if p == Prim::Push {
                ctx.cfg.stack_push(*s, count)?;
            } else {
                ctx.cfg.stack_pop(*s, count)?;
            }
        }
        Prim::RegisterRead => {
            let loc = dst(&args[0]);
            let inst = writable(ctx, loc)?;
            let r = stateful(&args[1]);
            let idx = cell_index(ctx, r, args.get(2))?;
            let v = ctx.cfg.register_read(r, idx)?;
            ctx.cfg.set_field(inst, loc.field, v)?;
        }
        Prim::RegisterWrite => {
            let r = stateful(&args[0]);
            let (idx, value) = if args.len() == 3 { (Some(&args[1]), &args[2]) } else { (None, &args[1]) };
            let idx = cell_index(ctx, r, idx)?;
            let v = value_arg(ctx, value)?;
            ctx.cfg.register_write(r, idx, &v)?;
        }
        Prim::Count => {
            let c = stateful(&args[0]);
            let idx = cell_index(ctx, c, args.get(1))?;
            let bytes = ctx.cfg.pkt.data.byte_len();
            ctx.cfg.count_increment(c, idx, bytes)?;
        }
        Prim::ExecuteMeter => {
            let m = stateful(&args[0]);
            let idx = cell_index(ctx, m, args.get(1))?;
            ctx.cfg.check_index(m, idx)?;
            ctx.cfg.meter_log.push(MeterEvent { meter: m, index: idx });
            if let Some(d) = args.get(2) {
                let loc = dst(d);
                let inst = writable(ctx, loc)?;
                ctx.cfg.set_field(inst, loc.field, Value::zero(2))?;
            }
        }
        Prim::Drop => ctx.cfg.pkt.dropped = true,
        Prim::NoOp => {}
        Prim::Truncate => {
            let n = uint(ctx, &args[0])?;
            ctx.cfg.pkt.truncate = Some(n);
        }
        Prim::ModifyFieldWithHashBasedOffset => {
            let loc = dst(&args[0]);
            let inst = writable(ctx, loc)?;
            let base = value_arg(ctx, &args[1])?;
            let Arg::Calc(calc) = &args[2] else { unreachable!() };
            let size = uint(ctx, &args[3])?;
            if size == 0 {
                return Err(StuckReason::UnspecifiedPrimitiveCase);
            }
            let program = ctx.program.clone();
            let h = checksum_hash::calculate(ctx.cfg, &program, calc)?;
            let off = h.magnitude() % BigUint::from(size);
            let width = program.field_info(inst, loc.field).width.max(crate::values::bit_length(&off)).max(1);
            let r = apply_binop(BinOp::Add, &base, &Value::Concrete(Bits::new(width, off, false)))?;
            ctx.cfg.set_field(inst, loc.field, r)?;
        }
        Prim::Resubmit => {
            if egress {
                return Err(StuckReason::UnspecifiedPrimitiveCase);
            }
            ctx.cfg.pkt.resubmit = true;
        }
        Prim::Recirculate => {
            if !egress {
                return Err(StuckReason::UnspecifiedPrimitiveCase);
            }
            ctx.cfg.pkt.recirculate = true;
        }
        Prim::CloneIngressToIngress | Prim::CloneIngressToEgress | Prim::CloneEgressToIngress | Prim::CloneEgressToEgress => {
            let from_egress = matches!(p, Prim::CloneEgressToIngress | Prim::CloneEgressToEgress);
            if from_egress != egress {
                return Err(StuckReason::UnspecifiedPrimitiveCase);
            }
            let session = uint(ctx, &args[0])?;
            let req = if matches!(p, Prim::CloneIngressToIngress | Prim::CloneEgressToIngress) {
                CloneRequest::ToIngress
            } else {
                CloneRequest::ToEgress
            };
            ctx.cfg.pkt.clones.push((req, session));
        }
        Prim::GenerateDigest => {
            let receiver = value_arg(ctx, &args[0])?;
            let Arg::FieldList(fl) = &args[1] else { unreachable!() };
            let values = field_list_values(ctx, fl);
            ctx.cfg.digests.push(Digest { receiver: receiver.to_string(), values });
        }
    }
    Ok(())
}
