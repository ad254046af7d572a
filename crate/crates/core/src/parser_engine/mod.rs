//! The parser state machine: extraction, select, exceptions and checksum
//! verification at the end of parsing.

use num_bigint::BigUint;

use crate::checksum_hash;
use crate::exploration::ChoiceKind;
use crate::harness::Site;
use crate::interp::{sym_ternary, Cond, Ctx, Flow};
use crate::program_model::{
    HandlerReturn, HdrLoc, PReturn, PStmt, PTarget, SelKey, PE_CHECKSUM, PE_DEFAULT, PE_INDEX_OUT_OF_BOUNDS,
    PE_OUT_OF_PACKET,
};
use crate::runtime_state::{fit, HeaderState, ReadError, StuckReason};
use crate::values::{mask, Bits, Value};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ParseOutcome {
    /// Parsing finished; processing continues in this control.
    Control(String),
    Drop,
}

/// Runs the parser from `start` over `cfg.pkt.data`.
pub fn run_parser(ctx: &mut Ctx) -> Flow<ParseOutcome> {
    ctx.hit(Site::ParserStart);
    let program = ctx.program.clone();
    let Some(&start) = program.state_index.get("start") else {
        return Ok(ParseOutcome::Control(crate::program_model::Program::INGRESS.to_string()));
    };
    let mut state = start;
    let mut steps: u32 = 0;
    loop {
        let st = &program.parser_states[state];
        let site = format!("parser state {}", st.name);
        steps += 1;
        if steps > ctx.cfg.parse_budget {
            return ctx.stuck(StuckReason::ParseLoopBudget, &site);
        }
        for stmt in &st.body {
            match stmt {
                PStmt::Extract(loc) => {
                    if let Some(exc) = extract(ctx, loc, &site)? {
                        return handle_exception(ctx, exc);
                    }
                }
                PStmt::SetMetadata(f, e) => {
                    ctx.hit(Site::ParserSetMetadata);
                    let v = ctx.eval(e);
                    let v = ctx.check(v, &site)?;
                    let r = ctx.write_field(f, v);
                    ctx.check(r, &site)?;
                }
            }
        }
        let target = match &st.ret {
            PReturn::Direct(t) => {
                ctx.hit(Site::ReturnDirect);
                t.clone()
            }
            PReturn::Select { keys, cases, .. } => {
                let mut parts = Vec::new();
                for k in keys {
                    match k {
                        SelKey::Field(loc) => {
                            let inst = ctx.resolve(&loc.hdr);
                            let inst = ctx.check(inst, &site)?;
                            let h = &ctx.cfg.instances[inst];
                            if !h.valid {
                                return ctx.stuck(StuckReason::ReadInvalidHeader, &site);
                            }
                            let v = h.fields[loc.field].clone();
                            let w = program.field_info(inst, loc.field).width;
                            parts.push((v, w));
                        }
                        SelKey::Current { offset, width } => {
                            ctx.hit(Site::SelectCurrent);
                            let at = ctx.cfg.pkt.offset + offset;
                            match ctx.cfg.pkt.data.read(at, *width, &mut ctx.cfg.atoms) {
                                Ok(v) => parts.push((v, *width)),
                                Err(ReadError::TooShort) => return handle_exception(ctx, PE_OUT_OF_PACKET),
                                Err(ReadError::Symbolic) => return ctx.stuck(StuckReason::SymbolicUnsupported, &site),
                            }
                        }
                    }
                }
                if parts.iter().any(|(v, _)| v.is_undef()) {
                    return ctx.stuck(StuckReason::UndefInExpr, &site);
                }
                let mut conds = Vec::new();
                let mut owner = Vec::new();
                for (ci, case) in cases.iter().enumerate() {
                    if case.values.is_empty() {
                        conds.push(Cond::True);
                        owner.push(ci);
                    }
                    for (value, m) in &case.values {
                        conds.push(key_cond(ctx, &parts, value, m));
                        owner.push(ci);
                    }
                }
                match ctx.first_match(conds, &site)? {
                    Some(i) => {
                        let case = &cases[owner[i]];
                        ctx.hit(if case.values.is_empty() { Site::SelectDefault } else { Site::SelectCase });
                        case.target.clone()
                    }
                    None => return ctx.stuck(StuckReason::NoBranch, &site),
                }
            }
        };
        match target {
            PTarget::State(s) => state = s,
            PTarget::Control(c) => {
                ctx.hit(Site::ParserToControl);
                if let Some(exc) = verify_calculated_fields(ctx)? {
                    return handle_exception(ctx, exc);
                }
                return Ok(ParseOutcome::Control(c));
            }
            PTarget::Error(name) => {
                ctx.hit(Site::ParseErrorReturn);
                return handle_exception(ctx, &name);
            }
        }
    }
}

/// Whether the concatenated select key matches `value` under `m`.
fn key_cond(ctx: &Ctx, parts: &[(Value, u32)], value: &Bits, m: &Bits) -> Cond {
    let total: u32 = parts.iter().map(|(_, w)| w).sum();
    let mut lsb = total;
    let mut cond = Cond::True;
    for (v, w) in parts {
        lsb -= w;
        let pv = (value.magnitude() >> lsb) & mask(*w);
        let pm = (m.magnitude() >> lsb) & mask(*w);
        let c = match v {
            Value::Concrete(b) => {
                if (b.magnitude() & &pm) == (&pv & &pm) {
                    Cond::True
                } else {
                    Cond::False
                }
            }
            Value::Symbolic(s) => sym_ternary(s, &ctx.cfg.atoms, &pv, &pm),
            Value::Undef => Cond::False,
        };
        cond = cond.and(c);
    }
    cond
}

/// Extracts one header. Returns the parser exception raised, if any.
fn extract(ctx: &mut Ctx, loc: &HdrLoc, site: &str) -> Flow<Option<&'static str>> {
    let inst = match ctx.resolve(loc) {
        Ok(i) => i,
        Err(_) => return Ok(Some(PE_INDEX_OUT_OF_BOUNDS)),
    };
    ctx.hit(Site::Extract);
    if matches!(loc, HdrLoc::Next(_)) {
        ctx.hit(Site::ExtractStackNext);
    }
    let program = ctx.program.clone();
    let ty = program.inst_type(inst);
    let mut offset = ctx.cfg.pkt.offset;
    let mut fields: Vec<Value> = Vec::with_capacity(ty.fields.len());
    let mut varbit_len = 0;
    for f in &ty.fields {
        let width = if f.varbit {
            ctx.hit(Site::ExtractVarbit);
            ctx.locals = Some(fields.clone());
            let len = ctx.eval(ty.length.as_ref().expect("varbit headers have a length"));
            ctx.locals = None;
            let bytes = match len {
                Ok(Value::Concrete(b)) if b.as_int().sign() != num_bigint::Sign::Minus => b.magnitude().clone(),
                Ok(Value::Symbolic(_)) => return ctx.stuck(StuckReason::SymbolicUnsupported, site),
                Ok(_) | Err(StuckReason::UndefInExpr) => return ctx.stuck(StuckReason::BadVarbitLen, site),
                Err(r) => return ctx.stuck(r, site),
            };
            let bits = bytes * 8u32;
            let fixed = BigUint::from(ty.fixed_bits());
            let max = BigUint::from(ty.max_length.unwrap_or(0)) * 8u32;
            if bits < fixed || bits > max {
                return ctx.stuck(StuckReason::BadVarbitLen, site);
            }
            let vb: BigUint = bits - fixed;
            varbit_len = u32::try_from(vb).expect("bounded by max_length");
            if varbit_len == 0 {
                fields.push(Value::zero(1));
                continue;
            }
            varbit_len
        } else {
            f.width
        };
        match ctx.cfg.pkt.data.read(offset, width, &mut ctx.cfg.atoms) {
            Ok(v) => {
                let v = fit(&v, width, f.signed, &mut ctx.cfg.atoms).expect("defined");
                fields.push(v);
            }
            Err(ReadError::TooShort) => return Ok(Some(PE_OUT_OF_PACKET)),
            Err(ReadError::Symbolic) => return ctx.stuck(StuckReason::SymbolicUnsupported, site),
        }
        offset += width;
    }
    ctx.cfg.instances[inst] = HeaderState { valid: true, fields, varbit_len };
    ctx.cfg.pkt.offset = offset;
    ctx.cfg.pkt.latest = Some(inst);
    Ok(None)
}

/// Dispatches a parser exception: the named handler, else the default
/// handler, else an implicit drop.
pub fn handle_exception(ctx: &mut Ctx, name: &str) -> Flow<ParseOutcome> {
    match name {
        PE_OUT_OF_PACKET => ctx.hit(Site::ExceptionOutOfPacket),
        PE_INDEX_OUT_OF_BOUNDS => ctx.hit(Site::ExceptionStackFull),
        PE_CHECKSUM => ctx.hit(Site::ExceptionChecksum),
        _ => {}
    }
    let program = ctx.program.clone();
    let handler = match program.exceptions.get(name) {
        Some(h) => {
            ctx.hit(Site::HandlerExplicit);
            h
        }
        None => match program.exceptions.get(PE_DEFAULT) {
            Some(h) => {
                ctx.hit(Site::HandlerDefault);
                h
            }
            None => {
                ctx.hit(Site::HandlerImplicitDrop);
                return Ok(ParseOutcome::Drop);
            }
        },
    };
    let site = format!("parser_exception {}", handler.name);
    for (f, e) in &handler.body {
        ctx.hit(Site::HandlerSetMetadata);
        let v = ctx.eval(e);
        let v = ctx.check(v, &site)?;
        let r = ctx.write_field(f, v);
        ctx.check(r, &site)?;
    }
    Ok(match &handler.ret {
        HandlerReturn::Control(c) => {
            ctx.hit(Site::HandlerToControl);
            ParseOutcome::Control(c.clone())
        }
        HandlerReturn::Drop => ParseOutcome::Drop,
    })
}

/// Picks the first binding of `bindings` whose condition holds.
pub(crate) fn select_binding(
    ctx: &mut Ctx,
    bindings: &[crate::program_model::CalcBinding],
    site: &str,
) -> Flow<Option<String>> {
    for b in bindings {
        let holds = match &b.condition {
            None => true,
            Some(c) => {
                let regions = ctx.eval_cond(c);
                let regions = ctx.check(regions, site)?;
                ctx.pick_region(regions, site)?
            }
        };
        if holds {
            return Ok(Some(b.calculation.clone()));
        }
        ctx.hit(Site::CalcConditionFalse);
    }
    Ok(None)
}

/// Checks every valid calculated field with a verify clause, in an order
/// that is a choice point. Returns the checksum exception on mismatch.
pub fn verify_calculated_fields(ctx: &mut Ctx) -> Flow<Option<&'static str>> {
    let program = ctx.program.clone();
    let todo: Vec<usize> = (0..program.calculated_fields.len())
        .filter(|&i| {
            let cf = &program.calculated_fields[i];
            !cf.verify.is_empty() && ctx.cfg.instances[cf.inst].valid
        })
        .collect();
    let order = ctx.choose_order(ChoiceKind::VerifyOrder, &todo, "verify")?;
    for i in order {
        let cf = &program.calculated_fields[i];
        let name = program.field_name(cf.inst, cf.field);
        let site = format!("verify {name}");
        let Some(calc) = select_binding(ctx, &cf.verify, &site)? else {
            continue;
        };
        let r = checksum_hash::calculate(ctx.cfg, &program, &calc);
        let computed = ctx.check(r, &site)?;
        let width = program.field_info(cf.inst, cf.field).width;
        let expect = computed.resize(width).magnitude().clone();
        let stored = ctx.cfg.instances[cf.inst].fields[cf.field].clone();
        let ok = match &stored {
            Value::Concrete(b) => Cond::from_bool(*b.magnitude() == expect),
            Value::Symbolic(s) => sym_ternary(s, &ctx.cfg.atoms, &expect, &mask(width)),
            Value::Undef => return ctx.stuck(StuckReason::UndefInExpr, &site),
        };
        let pass = ctx.first_match(vec![ok], &site)?.is_some();
        if !pass {
            return Ok(Some(PE_CHECKSUM));
        }
        ctx.hit(Site::VerifyPass);
    }
    Ok(None)
}
