//! The per-packet forwarding model and the node loop.
//!
//! One step takes the head of the input stream through parse, verify,
//! ingress, the single egress slot, egress, checksum update and deparse.

use std::sync::Arc;

use crate::checksum_hash;
use crate::exploration::{Canonical, ChoiceKind, Chooser, Halt};
use crate::harness::{Coverage, Site};
use crate::interp::{Ctx, Flow, Interrupt};
use crate::match_action::exec_control;
use crate::parser_engine::{run_parser, select_binding, ParseOutcome};
use crate::program_model::{sm, InstId, Program};
use crate::runtime_state::{
    Carried, CloneRequest, Config, Packet, PacketData, PacketKind, PacketState, Status, StuckReason,
};
use crate::values::{AtomTable, SymValue, Value};

/// Most deparse orders enumerated at one choice point.
pub const DEPARSE_ORDER_LIMIT: usize = 5040;

pub fn instance_type(kind: PacketKind) -> u64 {
    match kind {
        PacketKind::Normal => 0,
        PacketKind::CloneToIngress => 1,
        PacketKind::CloneToEgress => 2,
        PacketKind::Recirculate => 4,
        PacketKind::Resubmit => 6,
    }
}

/// Processes the next input packet, if any. A stuck node stays stuck.
pub fn step(cfg: &mut Config, chooser: &mut dyn Chooser, cov: &mut Coverage) -> Result<(), Halt> {
    if cfg.is_stuck() {
        return Ok(());
    }
    if cfg.input.is_empty() {
        cfg.status = Status::AwaitingInput;
        return Ok(());
    }
    cfg.status = Status::Running;
    let r = {
        let mut ctx = Ctx::new(cfg, chooser, cov);
        process(&mut ctx)
    };
    cfg.pkt = PacketState::default();
    match r {
        Ok(()) => {}
        Err(Interrupt::Stuck(s)) => {
            cov.hit(Site::Stuck(s.reason));
            cfg.status = Status::Stuck(s);
        }
        Err(Interrupt::Halt(h)) => return Err(h),
    }
    if cfg.input.is_empty() && !cfg.is_stuck() {
        cfg.status = Status::AwaitingInput;
    }
    Ok(())
}

/// Runs the node with canonical choices until its input is empty, it gets
/// stuck, or `max_packets` packets were processed. Returns the number of
/// packets processed.
pub fn run_node(cfg: &mut Config, max_packets: u64, cov: &mut Coverage) -> u64 {
    let mut n = 0;
    while n < max_packets && !cfg.is_stuck() && !cfg.input.is_empty() {
        step(cfg, &mut Canonical, cov).expect("canonical choices never halt");
        n += 1;
    }
    if cfg.input.is_empty() && !cfg.is_stuck() {
        cfg.status = Status::AwaitingInput;
    }
    n
}

fn sm_set(ctx: &mut Ctx, field: usize, v: u64) {
    let smi = ctx.program.standard_metadata;
    let w = sm::FIELDS[field].1;
    ctx.cfg.instances[smi].fields[field] = Value::Concrete(crate::values::Bits::new(w, v, false));
}

fn process(ctx: &mut Ctx) -> Flow<()> {
    let pkt = ctx.cfg.input.pop_front().expect("checked non-empty");
    ctx.cfg.processed += 1;
    ctx.cfg.reset_instances();
    ctx.cfg.pkt = PacketState { current: Some(pkt.clone()), data: pkt.data.clone(), ..PacketState::default() };
    let program = ctx.program.clone();

    if let Some(carried) = &pkt.carried {
        ctx.hit(Site::SkipIngressRestore);
        ctx.cfg.instances = carried.instances.clone();
        ctx.cfg.pkt.data = carried.payload.clone();
        sm_set(ctx, sm::EGRESS_PORT, pkt.port);
        sm_set(ctx, sm::INSTANCE_TYPE, instance_type(pkt.kind));
        return egress(ctx, &pkt);
    }

    sm_set(ctx, sm::INGRESS_PORT, pkt.port);
    sm_set(ctx, sm::PACKET_LENGTH, pkt.data.byte_len());
    sm_set(ctx, sm::INSTANCE_TYPE, instance_type(pkt.kind));
    ctx.hit(Site::Ingress);
    let control = match run_parser(ctx)? {
        ParseOutcome::Control(c) => c,
        ParseOutcome::Drop => {
            ctx.hit(Site::Drop);
            ctx.cfg.dropped += 1;
            return Ok(());
        }
    };
    exec_control(ctx, &control)?;

    for (req, session) in std::mem::take(&mut ctx.cfg.pkt.clones) {
        let id = ctx.cfg.fresh_packet_id();
        let clone = match req {
            CloneRequest::ToEgress => {
                ctx.hit(Site::CloneToEgress);
                snapshot(ctx, id, session)
            }
            CloneRequest::ToIngress => {
                ctx.hit(Site::CloneToIngress);
                Packet { id, port: pkt.port, data: pkt.data.clone(), kind: PacketKind::CloneToIngress, carried: None }
            }
        };
        ctx.cfg.spawned += 1;
        ctx.cfg.input.push_back(clone);
    }
    if ctx.cfg.pkt.dropped {
        ctx.hit(Site::Drop);
        ctx.cfg.dropped += 1;
        return Ok(());
    }
    if ctx.cfg.pkt.resubmit {
        ctx.hit(Site::Resubmit);
        ctx.cfg.input.push_back(Packet { kind: PacketKind::Resubmit, carried: None, ..pkt });
        return Ok(());
    }
    let smi = program.standard_metadata;
    let port = match ctx.cfg.instances[smi].fields[sm::EGRESS_SPEC].clone() {
        Value::Concrete(b) => b.to_u64().expect("9-bit port"),
        Value::Undef if ctx.cfg.profile.drop_undef_egress => {
            ctx.hit(Site::UndefinedEgressDrop);
            ctx.cfg.dropped += 1;
            return Ok(());
        }
        Value::Undef => return ctx.stuck(StuckReason::UndefinedEgress, "end of ingress"),
        Value::Symbolic(_) => return ctx.stuck(StuckReason::SymbolicUnsupported, "end of ingress"),
    };
    sm_set(ctx, sm::EGRESS_PORT, port);
    egress(ctx, &pkt)
}

/// A skip-ingress copy of the current packet state for egress cloning.
fn snapshot(ctx: &mut Ctx, id: u64, session: u64) -> Packet {
    let payload = ctx.cfg.pkt.data.suffix(ctx.cfg.pkt.offset, &mut ctx.cfg.atoms);
    let carried = Carried { instances: ctx.cfg.instances.clone(), payload };
    Packet { id, port: session, data: PacketData::default(), kind: PacketKind::CloneToEgress, carried: Some(Arc::new(carried)) }
}

fn egress(ctx: &mut Ctx, pkt: &Packet) -> Flow<()> {
    let program = ctx.program.clone();
    ctx.hit(Site::Egress);
    ctx.cfg.pkt.egress = true;
    if let Some(e) = &program.egress {
        exec_control(ctx, e)?;
    }
    let clones = std::mem::take(&mut ctx.cfg.pkt.clones);
    let mut to_ingress = Vec::new();
    for (req, session) in clones {
        match req {
            CloneRequest::ToEgress => {
                ctx.hit(Site::CloneToEgress);
                let id = ctx.cfg.fresh_packet_id();
                let c = snapshot(ctx, id, session);
                ctx.cfg.spawned += 1;
                ctx.cfg.input.push_back(c);
            }
            CloneRequest::ToIngress => to_ingress.push(session),
        }
    }
    if ctx.cfg.pkt.dropped && to_ingress.is_empty() {
        ctx.hit(Site::Drop);
        ctx.cfg.dropped += 1;
        return Ok(());
    }
    update_calculated_fields(ctx)?;
    let data = deparse(ctx)?;
    let smi = program.standard_metadata;
    let ingress_port = ctx.cfg.instances[smi].fields[sm::INGRESS_PORT].to_u64().unwrap_or(pkt.port);
    for _ in to_ingress {
        ctx.hit(Site::CloneToIngress);
        let id = ctx.cfg.fresh_packet_id();
        ctx.cfg.spawned += 1;
        ctx.cfg.input.push_back(Packet { id, port: ingress_port, data: data.clone(), kind: PacketKind::CloneToIngress, carried: None });
    }
    if ctx.cfg.pkt.dropped {
        ctx.hit(Site::Drop);
        ctx.cfg.dropped += 1;
        return Ok(());
    }
    if ctx.cfg.pkt.recirculate {
        ctx.hit(Site::Recirculate);
        ctx.cfg.input.push_back(Packet { id: pkt.id, port: ingress_port, data, kind: PacketKind::Recirculate, carried: None });
        return Ok(());
    }
    let port = ctx.cfg.instances[smi].fields[sm::EGRESS_PORT].to_u64().unwrap_or(0);
    ctx.hit(Site::Emit);
    ctx.cfg.output.push(Packet { id: pkt.id, port, data, kind: PacketKind::Normal, carried: None });
    Ok(())
}

/// Recomputes every valid calculated field with an update clause, in an
/// order that is a choice point.
pub fn update_calculated_fields(ctx: &mut Ctx) -> Flow<()> {
    let program = ctx.program.clone();
    let todo: Vec<usize> = (0..program.calculated_fields.len())
        .filter(|&i| {
            let cf = &program.calculated_fields[i];
            !cf.update.is_empty() && ctx.cfg.instances[cf.inst].valid
        })
        .collect();
    let order = ctx.choose_order(ChoiceKind::UpdateOrder, &todo, "update")?;
    for i in order {
        let cf = &program.calculated_fields[i];
        let site = format!("update {}", program.field_name(cf.inst, cf.field));
        let Some(calc) = select_binding(ctx, &cf.update, &site)? else {
            continue;
        };
        let r = checksum_hash::calculate(ctx.cfg, &program, &calc);
        let v = ctx.check(r, &site)?;
        let r = ctx.cfg.set_field(cf.inst, cf.field, Value::Concrete(v));
        ctx.check(r, &site)?;
        ctx.hit(Site::UpdateCalculated);
    }
    Ok(())
}

/// Serializes one header instance's fields.
pub fn serialize_instance(
    program: &Program,
    cfg_instances: &[crate::runtime_state::HeaderState],
    atoms: &AtomTable,
    inst: InstId,
    out: &mut PacketData,
) -> Result<(), StuckReason> {
    let h = &cfg_instances[inst];
    for (f, info) in program.inst_type(inst).fields.iter().enumerate() {
        let width = if info.varbit { h.varbit_len } else { info.width };
        if width == 0 {
            continue;
        }
        match &h.fields[f] {
            Value::Undef => return Err(StuckReason::UndefInExpr),
            Value::Concrete(b) => out.push(Value::Concrete(b.clone()), width),
            Value::Symbolic(s) => {
                let aw = atoms.width(s.atom).min(width);
                if width > aw {
                    out.push(Value::zero(width - aw), width - aw);
                }
                out.push(Value::Symbolic(SymValue { width: aw, ..s.clone() }), aw);
            }
        }
    }
    Ok(())
}

/// Valid header instances, serialized in an admissible order followed by
/// the unparsed payload, then truncated if requested.
pub fn deparse(ctx: &mut Ctx) -> Flow<PacketData> {
    let program = ctx.program.clone();
    let valid: Vec<InstId> = program.header_instances().filter(|&i| ctx.cfg.instances[i].valid).collect();
    let orders = program.deparse.orders(&valid, DEPARSE_ORDER_LIMIT);
    let k = ctx.choose(ChoiceKind::DeparseOrder, orders.len(), "deparse")?;
    let order = orders.into_iter().nth(k).unwrap_or_default();
    ctx.hit(Site::Deparse);
    let mut out = PacketData::default();
    for &inst in &order {
        let r = serialize_instance(&program, &ctx.cfg.instances, &ctx.cfg.atoms, inst, &mut out);
        let site = format!("deparse {}", program.instances[inst].name);
        ctx.check(r, &site)?;
    }
    ctx.cfg.pkt.dporder = order;
    let payload = ctx.cfg.pkt.data.suffix(ctx.cfg.pkt.offset, &mut ctx.cfg.atoms);
    out.append(&payload);
    if let Some(n) = ctx.cfg.pkt.truncate {
        ctx.hit(Site::Truncate);
        let bits = u32::try_from(n.saturating_mul(8)).unwrap_or(u32::MAX);
        if bits < out.len_bits() {
            out = out.prefix(bits, &mut ctx.cfg.atoms);
        }
    }
    Ok(out)
}
