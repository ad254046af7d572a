use std::collections::{BTreeMap, BTreeSet};

use super::*;
use crate::frontend::{
    self, Binding, CaseLabel, ControlStmt, DeclKind, Expr, ExprKind, FieldListEntry, FieldRef, FieldWidth,
    HeaderRef, ParserReturn, ParserStmt, ReadTarget, ReturnTarget, SelectKey, StackIndex, SyntaxTree,
};
use crate::values::{infer_const_width, Bits};

type EResult<T> = Result<T, ElabError>;

fn unresolved<T>(name: impl Into<String>, span: Span) -> EResult<T> {
    Err(ElabError::UnresolvedName { name: name.into(), span })
}

fn invalid<T>(message: impl Into<String>, span: Span) -> EResult<T> {
    Err(ElabError::Invalid { message: message.into(), span })
}

fn insert_unique(map: &mut BTreeMap<String, usize>, name: &frontend::Ident, id: usize) -> EResult<()> {
    if map.insert(name.name.clone(), id).is_some() {
        return Err(ElabError::DuplicateName { name: name.name.clone(), span: name.span });
    }
    Ok(())
}

fn const_bits(c: &frontend::ConstExpr, span: Span) -> EResult<Bits> {
    infer_const_width(c).or_else(|e| invalid(e.to_string(), span))
}

/// Name-resolution context for expressions.
#[derive(Default, Clone, Copy)]
struct Scope<'a> {
    params: &'a [String],
    /// Header type bound to `latest`.
    latest: Option<usize>,
    /// Fields usable by bare name (varbit length expressions).
    locals: Option<&'a [FieldInfo]>,
}

struct Elab {
    header_types: Vec<HeaderType>,
    type_index: BTreeMap<String, usize>,
    instances: Vec<Instance>,
    instance_index: BTreeMap<String, InstId>,
    stacks: Vec<Stack>,
    stack_index: BTreeMap<String, StackId>,
    statefuls: Vec<Stateful>,
    stateful_index: BTreeMap<String, usize>,
    action_index: BTreeMap<String, usize>,
    table_index: BTreeMap<String, usize>,
    state_index: BTreeMap<String, usize>,
    control_names: BTreeSet<String>,
    field_lists: BTreeMap<String, Vec<FlItem>>,
    calculations: BTreeMap<String, Calculation>,
}

/// Resolves a syntax tree into a [`Program`].
pub fn elaborate(tree: &SyntaxTree) -> Result<Program, ElabError> {
    let mut e = Elab {
        header_types: Vec::new(),
        type_index: BTreeMap::new(),
        instances: Vec::new(),
        instance_index: BTreeMap::new(),
        stacks: Vec::new(),
        stack_index: BTreeMap::new(),
        statefuls: Vec::new(),
        stateful_index: BTreeMap::new(),
        action_index: BTreeMap::new(),
        table_index: BTreeMap::new(),
        state_index: BTreeMap::new(),
        control_names: BTreeSet::new(),
        field_lists: BTreeMap::new(),
        calculations: BTreeMap::new(),
    };
    let decls: Vec<&DeclKind> = tree.declarations.iter().map(|d| &d.kind).collect();

    for d in &decls {
        if let DeclKind::HeaderType(h) = d {
            e.header_type(h)?;
        }
    }
    for d in &decls {
        match d {
            DeclKind::Header(i) => e.instance(i, false)?,
            DeclKind::Metadata(i) => e.instance(i, true)?,
            _ => {}
        }
    }
    e.standard_metadata();

    // Index every named entity before resolving bodies, so declarations may
    // refer forward.
    let mut n_actions = 0;
    let mut n_tables = 0;
    let mut n_states = 0;
    for d in &decls {
        match d {
            DeclKind::Action(a) => {
                insert_unique(&mut e.action_index, &a.name, n_actions)?;
                n_actions += 1;
            }
            DeclKind::Table(t) => {
                insert_unique(&mut e.table_index, &t.name, n_tables)?;
                n_tables += 1;
            }
            DeclKind::ParserState(s) => {
                insert_unique(&mut e.state_index, &s.name, n_states)?;
                n_states += 1;
            }
            DeclKind::Control(c)
                if !e.control_names.insert(c.name.name.clone()) => {
                    return Err(ElabError::DuplicateName { name: c.name.name.clone(), span: c.name.span });
                }
            _ => {}
        }
    }

    for d in &decls {
        match d {
            DeclKind::Counter(c) => e.counter(c)?,
            DeclKind::Meter(m) => e.meter(m)?,
            DeclKind::Register(r) => e.register(r)?,
            _ => {}
        }
    }

    let raw_lists: Vec<&frontend::FieldListDecl> = decls
        .iter()
        .filter_map(|d| if let DeclKind::FieldList(f) = d { Some(f) } else { None })
        .collect();
    e.field_lists(&raw_lists)?;

    for d in &decls {
        if let DeclKind::FieldListCalculation(c) = d {
            e.calculation(c)?;
        }
    }

    let mut actions = Vec::new();
    for d in &decls {
        if let DeclKind::Action(a) = d {
            actions.push(e.action(a)?);
        }
    }
    let mut tables = Vec::new();
    for d in &decls {
        if let DeclKind::Table(t) = d {
            tables.push(e.table(t)?);
        }
    }
    for (id, s) in e.statefuls.iter().enumerate() {
        if let (StatefulBinding::Direct(t), StatefulKind::Counter(_) | StatefulKind::Meter) = (&s.binding, &s.kind) {
            tables[*t].direct.push(id);
        }
    }
    let mut controls = BTreeMap::new();
    for d in &decls {
        if let DeclKind::Control(c) = d {
            let body = e.control_block(&c.body, &tables, &c.name.name)?;
            controls.insert(c.name.name.clone(), body);
        }
    }
    let mut parser_states = Vec::new();
    for d in &decls {
        if let DeclKind::ParserState(s) = d {
            parser_states.push(e.parser_state(s)?);
        }
    }
    if !e.state_index.contains_key("start") {
        return unresolved("start", Span::default());
    }
    let mut exceptions = BTreeMap::new();
    for d in &decls {
        if let DeclKind::ParserException(x) = d {
            let h = e.exception(x)?;
            if exceptions.insert(h.name.clone(), h).is_some() {
                return Err(ElabError::DuplicateName { name: x.name.name.clone(), span: x.name.span });
            }
        }
    }
    let mut calculated_fields = Vec::new();
    for d in &decls {
        if let DeclKind::CalculatedField(c) = d {
            calculated_fields.push(e.calculated_field(c)?);
        }
    }

    if !controls.contains_key(Program::INGRESS) {
        return Err(ElabError::NoIngress);
    }
    let egress = controls.contains_key("egress").then(|| "egress".to_string());
    let standard_metadata = e.instance_index["standard_metadata"];

    let mut program = Program {
        header_types: e.header_types,
        instances: e.instances,
        instance_index: e.instance_index,
        stacks: e.stacks,
        stack_index: e.stack_index,
        parser_states,
        state_index: e.state_index,
        exceptions,
        actions,
        action_index: e.action_index,
        tables,
        table_index: e.table_index,
        controls,
        field_lists: e.field_lists,
        calculations: e.calculations,
        calculated_fields,
        statefuls: e.statefuls,
        stateful_index: e.stateful_index,
        egress,
        standard_metadata,
        deparse: DeparseOrders::default(),
    };
    let graph = build_parse_graph(&program);
    program.deparse = infer_deparse_orders(&program, &graph)?;
    Ok(program)
}

impl Elab {
    fn header_type(&mut self, h: &frontend::HeaderTypeDecl) -> EResult<()> {
        insert_unique(&mut self.type_index, &h.name, self.header_types.len())?;
        let mut fields: Vec<FieldInfo> = Vec::new();
        let mut varbit = None;
        for (i, f) in h.fields.iter().enumerate() {
            if fields.iter().any(|g| g.name == f.name.name) {
                return Err(ElabError::DuplicateName { name: f.name.name.clone(), span: f.name.span });
            }
            let (width, is_var) = match f.width {
                FieldWidth::Fixed(0) => return invalid(format!("field {} has width 0", f.name), f.name.span),
                FieldWidth::Fixed(w) => (w, false),
                FieldWidth::Varbit => {
                    if varbit.is_some() || i + 1 != h.fields.len() {
                        return Err(ElabError::VarbitMisplaced(format!(
                            "{}.{}: a variable-width field must be the only one and last",
                            h.name, f.name
                        )));
                    }
                    varbit = Some(i);
                    (0, true)
                }
            };
            fields.push(FieldInfo { name: f.name.name.clone(), width, signed: f.signed, saturating: f.saturating, varbit: is_var });
        }
        let mut length = None;
        if let Some(vi) = varbit {
            let fixed: u32 = fields.iter().map(|f| f.width).sum();
            let (Some(len), Some(max)) = (&h.length, h.max_length) else {
                return Err(ElabError::VarbitMisplaced(format!("{}: variable-width header needs length and max_length", h.name)));
            };
            if max * 8 < fixed {
                return Err(ElabError::VarbitMisplaced(format!("{}: max_length below fixed size", h.name)));
            }
            fields[vi].width = max * 8 - fixed;
            let scope = Scope { locals: Some(&fields[..vi]), ..Scope::default() };
            length = Some(self.expr(len, scope).map_err(|err| match err {
                ElabError::UnresolvedName { name, .. } => ElabError::VarbitMisplaced(format!(
                    "{}: length refers to {name}, which is not a field preceding the variable-width field",
                    h.name
                )),
                other => other,
            })?);
        }
        self.header_types.push(HeaderType { name: h.name.name.clone(), fields, length, max_length: h.max_length });
        Ok(())
    }

    fn push_instance(&mut self, inst: Instance, name: &frontend::Ident) -> EResult<InstId> {
        let id = self.instances.len();
        if self.instance_index.insert(inst.name.clone(), id).is_some() || self.stack_index.contains_key(&inst.name) {
            return Err(ElabError::DuplicateName { name: name.name.clone(), span: name.span });
        }
        self.instances.push(inst);
        Ok(id)
    }

    fn instance(&mut self, d: &frontend::InstanceDecl, metadata: bool) -> EResult<()> {
        let Some(&ty) = self.type_index.get(&d.type_name.name) else {
            return unresolved(&d.type_name.name, d.type_name.span);
        };
        if metadata && self.header_types[ty].has_varbit() {
            return Err(ElabError::VarbitMisplaced(format!("metadata {} has a variable-width field", d.name)));
        }
        let mut initializer = Vec::new();
        for (f, e) in &d.initializer {
            let Some(fi) = self.header_types[ty].field_index(&f.name) else {
                return unresolved(format!("{}.{}", d.name, f.name), f.span);
            };
            let ExprKind::Const(c) = &e.kind else {
                return invalid("metadata initializer must be a constant", e.span);
            };
            let width = self.header_types[ty].fields[fi].width;
            initializer.push((fi, const_bits(c, e.span)?.resize(width)));
        }
        match d.stack_size {
            Some(0) => invalid("header stack of size 0", d.name.span),
            Some(n) => {
                if self.stack_index.contains_key(&d.name.name) || self.instance_index.contains_key(&d.name.name) {
                    return Err(ElabError::DuplicateName { name: d.name.name.clone(), span: d.name.span });
                }
                let sid = self.stacks.len();
                let mut elements = Vec::new();
                for i in 0..n {
                    let inst = Instance {
                        name: format!("{}[{i}]", d.name),
                        header_type: ty,
                        metadata: false,
                        stack: Some((sid, i)),
                        initializer: Vec::new(),
                    };
                    elements.push(self.push_instance(inst, &d.name)?);
                }
                self.stack_index.insert(d.name.name.clone(), sid);
                self.stacks.push(Stack { name: d.name.name.clone(), header_type: ty, elements });
                Ok(())
            }
            None => {
                let inst = Instance { name: d.name.name.clone(), header_type: ty, metadata, stack: None, initializer };
                self.push_instance(inst, &d.name).map(|_| ())
            }
        }
    }

    fn standard_metadata(&mut self) {
        let ty = self.header_types.len();
        self.header_types.push(HeaderType {
            name: "standard_metadata_t".into(),
            fields: sm::FIELDS
                .iter()
                .map(|(n, w)| FieldInfo { name: n.to_string(), width: *w, signed: false, saturating: false, varbit: false })
                .collect(),
            length: None,
            max_length: None,
        });
        let id = self.instances.len();
        self.instances.push(Instance {
            name: "standard_metadata".into(),
            header_type: ty,
            metadata: true,
            stack: None,
            initializer: Vec::new(),
        });
        self.instance_index.insert("standard_metadata".into(), id);
    }

    fn binding(&self, b: &Option<Binding>) -> EResult<StatefulBinding> {
        let table = |t: &frontend::Ident| match self.table_index.get(&t.name) {
            Some(&id) => Ok(id),
            None => unresolved(&t.name, t.span),
        };
        Ok(match b {
            None => StatefulBinding::Global,
            Some(Binding::Direct(t)) => StatefulBinding::Direct(table(t)?),
            Some(Binding::Static(t)) => StatefulBinding::Static(table(t)?),
        })
    }

    fn push_stateful(&mut self, s: Stateful, name: &frontend::Ident) -> EResult<()> {
        if s.is_direct() && s.instance_count.is_some() {
            return invalid(format!("{}: direct binding excludes instance_count", s.name), name.span);
        }
        if !s.is_direct() && s.instance_count.is_none() {
            return invalid(format!("{}: instance_count required", s.name), name.span);
        }
        insert_unique(&mut self.stateful_index, name, self.statefuls.len())?;
        self.statefuls.push(s);
        Ok(())
    }

    fn counter(&mut self, c: &frontend::CounterDecl) -> EResult<()> {
        let kind = match c.kind.name.as_str() {
            "packets" => CounterType::Packets,
            "bytes" => CounterType::Bytes,
            "packets_and_bytes" => CounterType::PacketsAndBytes,
            other => return invalid(format!("unknown counter type {other}"), c.kind.span),
        };
        let s = Stateful {
            name: c.name.name.clone(),
            kind: StatefulKind::Counter(kind),
            binding: self.binding(&c.binding)?,
            instance_count: c.instance_count.map(u64::from),
            width: c.min_width.unwrap_or(64),
        };
        self.push_stateful(s, &c.name)
    }

    fn meter(&mut self, m: &frontend::MeterDecl) -> EResult<()> {
        if !matches!(m.kind.name.as_str(), "packets" | "bytes") {
            return invalid(format!("unknown meter type {}", m.kind), m.kind.span);
        }
        let s = Stateful {
            name: m.name.name.clone(),
            kind: StatefulKind::Meter,
            binding: self.binding(&m.binding)?,
            instance_count: m.instance_count.map(u64::from),
            width: 2,
        };
        self.push_stateful(s, &m.name)
    }

    fn register(&mut self, r: &frontend::RegisterDecl) -> EResult<()> {
        let width = match (r.width, &r.layout) {
            (Some(w), None) if w > 0 => w,
            (None, Some(l)) => match self.type_index.get(&l.name) {
                Some(&t) => self.header_types[t].fixed_bits(),
                None => return unresolved(&l.name, l.span),
            },
            _ => return invalid(format!("register {} needs exactly one of width or layout", r.name), r.name.span),
        };
        let s = Stateful {
            name: r.name.name.clone(),
            kind: StatefulKind::Register,
            binding: self.binding(&r.binding)?,
            instance_count: r.instance_count.map(u64::from),
            width,
        };
        self.push_stateful(s, &r.name)
    }

    fn field_lists(&mut self, lists: &[&frontend::FieldListDecl]) -> EResult<()> {
        let mut by_name: BTreeMap<&str, &frontend::FieldListDecl> = BTreeMap::new();
        for l in lists {
            if by_name.insert(&l.name.name, l).is_some() {
                return Err(ElabError::DuplicateName { name: l.name.name.clone(), span: l.name.span });
            }
            if let Some(FieldListEntry::Payload(span)) = l.entries.iter().find(|e| matches!(e, FieldListEntry::Payload(_))) {
                return Err(ElabError::PayloadUnsupported { list: l.name.name.clone(), span: *span });
            }
        }
        for l in lists {
            let mut stack = Vec::new();
            let flat = self.flatten(l, &by_name, &mut stack)?;
            self.field_lists.insert(l.name.name.clone(), flat);
        }
        Ok(())
    }

    fn flatten<'a>(
        &self,
        l: &'a frontend::FieldListDecl,
        by_name: &BTreeMap<&str, &'a frontend::FieldListDecl>,
        active: &mut Vec<&'a str>,
    ) -> EResult<Vec<FlItem>> {
        if active.contains(&l.name.name.as_str()) {
            active.push(&l.name.name);
            return Err(ElabError::FieldListCycle(active.join(" -> ")));
        }
        active.push(&l.name.name);
        let mut out = Vec::new();
        for entry in &l.entries {
            match entry {
                FieldListEntry::Payload(span) => {
                    return Err(ElabError::PayloadUnsupported { list: l.name.name.clone(), span: *span })
                }
                FieldListEntry::Const(c) => out.push(FlItem::Const(const_bits(c, l.name.span)?)),
                FieldListEntry::Field(f) => {
                    let loc = self.field(f, Scope::default())?;
                    let HdrLoc::Inst(inst) = loc.hdr else {
                        return invalid("field lists name fixed instances", f.span);
                    };
                    out.push(FlItem::Field(inst, loc.field));
                }
                FieldListEntry::Header(h) => {
                    let name = h.instance.name.as_str();
                    let all_fields = |inst: InstId, out: &mut Vec<FlItem>| {
                        let n = self.header_types[self.instances[inst].header_type].fields.len();
                        out.extend((0..n).map(|f| FlItem::Field(inst, f)));
                    };
                    if h.index.is_none() {
                        if let Some(sub) = by_name.get(name) {
                            out.extend(self.flatten(sub, by_name, active)?);
                        } else if let Some(&inst) = self.instance_index.get(name) {
                            all_fields(inst, &mut out);
                        } else if let Some(&s) = self.stack_index.get(name) {
                            for &inst in &self.stacks[s].elements {
                                all_fields(inst, &mut out);
                            }
                        } else {
                            return unresolved(name, h.span);
                        }
                    } else {
                        match self.header(h, Scope::default())? {
                            (HdrLoc::Inst(inst), _) => all_fields(inst, &mut out),
                            _ => return invalid("field lists name fixed instances", h.span),
                        }
                    }
                }
            }
        }
        active.pop();
        Ok(out)
    }

    fn calculation(&mut self, c: &frontend::FieldListCalcDecl) -> EResult<()> {
        for i in &c.inputs {
            if !self.field_lists.contains_key(&i.name) {
                return unresolved(&i.name, i.span);
            }
        }
        let Some(algorithm) = Algorithm::from_name(&c.algorithm.name) else {
            return invalid(format!("unknown hash algorithm {}", c.algorithm), c.algorithm.span);
        };
        if c.output_width == 0 {
            return invalid("output_width must be positive", c.name.span);
        }
        let calc = Calculation {
            name: c.name.name.clone(),
            inputs: c.inputs.iter().map(|i| i.name.clone()).collect(),
            algorithm,
            output_width: c.output_width,
        };
        if self.calculations.insert(c.name.name.clone(), calc).is_some() {
            return Err(ElabError::DuplicateName { name: c.name.name.clone(), span: c.name.span });
        }
        Ok(())
    }

    fn header(&self, h: &HeaderRef, scope: Scope) -> EResult<(HdrLoc, usize)> {
        let name = &h.instance.name;
        if name == "latest" {
            return match (scope.latest, &h.index) {
                (Some(t), None) => Ok((HdrLoc::Latest, t)),
                (None, _) => unresolved("latest", h.span),
                (Some(_), Some(_)) => invalid("latest cannot be indexed", h.span),
            };
        }
        if let Some(&s) = self.stack_index.get(name) {
            let stack = &self.stacks[s];
            let loc = match &h.index {
                Some(StackIndex::Const(i)) => match stack.elements.get(*i as usize) {
                    Some(&inst) => HdrLoc::Inst(inst),
                    None => return invalid(format!("{name}[{i}] is out of bounds"), h.span),
                },
                Some(StackIndex::Next) => HdrLoc::Next(s),
                Some(StackIndex::Last) => HdrLoc::Last(s),
                None => return invalid(format!("header stack {name} needs an index"), h.span),
            };
            return Ok((loc, stack.header_type));
        }
        match (self.instance_index.get(name), &h.index) {
            (Some(&inst), None) => Ok((HdrLoc::Inst(inst), self.instances[inst].header_type)),
            (Some(_), Some(_)) => invalid(format!("{name} is not a header stack"), h.span),
            (None, _) => unresolved(name, h.span),
        }
    }

    fn field(&self, f: &FieldRef, scope: Scope) -> EResult<FieldLoc> {
        let (hdr, ty) = self.header(&f.header, scope)?;
        match self.header_types[ty].field_index(&f.field.name) {
            Some(field) => Ok(FieldLoc { hdr, field }),
            None => unresolved(format!("{}.{}", f.header.instance, f.field), f.span),
        }
    }

    fn expr(&self, e: &Expr, scope: Scope) -> EResult<RExpr> {
        let sub = |x: &Expr| self.expr(x, scope).map(Box::new);
        Ok(match &e.kind {
            ExprKind::Const(c) => RExpr::Const(const_bits(c, e.span)?),
            ExprKind::Bool(b) => RExpr::Const(Bits::from_bool(*b)),
            ExprKind::Name(n) => {
                if let Some(i) = scope.params.iter().position(|p| *p == n.name) {
                    RExpr::Param(i)
                } else if let Some(i) = scope.locals.and_then(|l| l.iter().position(|f| f.name == n.name)) {
                    RExpr::Local(i)
                } else {
                    return unresolved(&n.name, n.span);
                }
            }
            ExprKind::Header(h) => return invalid(format!("header {} used as a value", h.instance), e.span),
            ExprKind::Field(f) => RExpr::Field(self.field(f, scope)?),
            ExprKind::Valid(h) => RExpr::Valid(self.header(h, scope)?.0),
            ExprKind::Unary(op, x) => RExpr::Unary(*op, sub(x)?),
            ExprKind::Binary(op, a, b) => RExpr::Binary(*op, sub(a)?, sub(b)?),
            ExprKind::Not(x) => RExpr::Not(sub(x)?),
            ExprKind::And(a, b) => RExpr::And(sub(a)?, sub(b)?),
            ExprKind::Or(a, b) => RExpr::Or(sub(a)?, sub(b)?),
        })
    }

    fn name_arg<'e>(&self, e: &'e Expr) -> EResult<&'e frontend::Ident> {
        match &e.kind {
            ExprKind::Name(n) => Ok(n),
            _ => invalid("expected a name", e.span),
        }
    }

    fn arg(&self, role: Role, e: &Expr, scope: Scope) -> EResult<Arg> {
        let stateful = |want: fn(&StatefulKind) -> bool, what: &str| -> EResult<Arg> {
            let n = self.name_arg(e)?;
            match self.stateful_index.get(&n.name) {
                Some(&id) if want(&self.statefuls[id].kind) => Ok(Arg::Stateful(id)),
                Some(_) => invalid(format!("{} is not a {what}", n.name), n.span),
                None => unresolved(&n.name, n.span),
            }
        };
        match role {
            Role::Value => Ok(Arg::Value(self.expr(e, scope)?)),
            Role::Dst => match &e.kind {
                ExprKind::Field(f) => Ok(Arg::Field(self.field(f, scope)?)),
                _ => invalid("expected a field reference", e.span),
            },
            Role::Header => match &e.kind {
                ExprKind::Name(n) => {
                    let h = HeaderRef { instance: n.clone(), index: None, span: n.span };
                    Ok(Arg::Header(self.header(&h, scope)?.0))
                }
                ExprKind::Header(h) => Ok(Arg::Header(self.header(h, scope)?.0)),
                _ => invalid("expected a header instance", e.span),
            },
            Role::Stack => {
                let n = self.name_arg(e)?;
                match self.stack_index.get(&n.name) {
                    Some(&s) => Ok(Arg::Stack(s)),
                    None => unresolved(&n.name, n.span),
                }
            }
            Role::Register => stateful(|k| matches!(k, StatefulKind::Register), "register"),
            Role::Counter => stateful(|k| matches!(k, StatefulKind::Counter(_)), "counter"),
            Role::Meter => stateful(|k| matches!(k, StatefulKind::Meter), "meter"),
            Role::FieldList => {
                let n = self.name_arg(e)?;
                if self.field_lists.contains_key(&n.name) {
                    Ok(Arg::FieldList(n.name.clone()))
                } else {
                    unresolved(&n.name, n.span)
                }
            }
            Role::Calc => {
                let n = self.name_arg(e)?;
                if self.calculations.contains_key(&n.name) {
                    Ok(Arg::Calc(n.name.clone()))
                } else {
                    unresolved(&n.name, n.span)
                }
            }
        }
    }

    fn action(&self, a: &frontend::ActionDecl) -> EResult<Action> {
        let params: Vec<String> = a.params.iter().map(|p| p.name.clone()).collect();
        for (i, p) in a.params.iter().enumerate() {
            if params[..i].contains(&p.name) {
                return Err(ElabError::DuplicateName { name: p.name.clone(), span: p.span });
            }
        }
        let scope = Scope { params: &params, ..Scope::default() };
        let mut body = Vec::new();
        for (i, call) in a.body.iter().enumerate() {
            let site = format!("action {}#{} {}", a.name, i + 1, call.name);
            let (callee, args) = if let Some(&id) = self.action_index.get(&call.name.name) {
                let args = call.args.iter().map(|x| self.expr(x, scope).map(Arg::Value)).collect::<EResult<Vec<_>>>()?;
                (Callee::Compound(id), args)
            } else if let Some(p) = Prim::from_name(&call.name.name) {
                let (roles, min) = p.signature();
                if call.args.len() < min || call.args.len() > roles.len() {
                    return invalid(
                        format!("{} takes {min}..={} arguments, got {}", p.name(), roles.len(), call.args.len()),
                        call.span,
                    );
                }
                let args = call
                    .args
                    .iter()
                    .zip(roles)
                    .map(|(x, r)| self.arg(*r, x, scope))
                    .collect::<EResult<Vec<_>>>()?;
                (Callee::Primitive(p), args)
            } else {
                let args = call.args.iter().map(|x| self.expr(x, scope).map(Arg::Value)).collect::<EResult<Vec<_>>>()?;
                (Callee::External(call.name.name.clone()), args)
            };
            body.push(Call { callee, args, site });
        }
        Ok(Action { name: a.name.name.clone(), params, body })
    }

    fn table(&self, t: &frontend::TableDecl) -> EResult<Table> {
        let mut reads = Vec::new();
        for r in &t.reads {
            let kind = match r.kind.name.as_str() {
                "exact" => MatchKind::Exact,
                "ternary" => MatchKind::Ternary,
                "lpm" => MatchKind::Lpm,
                "range" => MatchKind::Range,
                "valid" => MatchKind::Valid,
                other => return invalid(format!("unknown match kind {other}"), r.kind.span),
            };
            let (name, key, width) = match &r.target {
                ReadTarget::Header(h) => {
                    let (loc, _) = self.header(h, Scope::default())?;
                    (header_text(h), ReadKey::Valid(loc), 1)
                }
                ReadTarget::Field(f) if f.field.name == "valid" && self.field(f, Scope::default()).is_err() => {
                    let (loc, _) = self.header(&f.header, Scope::default())?;
                    (format!("{}.valid", header_text(&f.header)), ReadKey::Valid(loc), 1)
                }
                ReadTarget::Field(f) => {
                    let loc = self.field(f, Scope::default())?;
                    let HdrLoc::Inst(inst) = loc.hdr else {
                        return invalid("table reads name fixed instances", f.span);
                    };
                    let info = &self.header_types[self.instances[inst].header_type].fields[loc.field];
                    if info.varbit {
                        return invalid("variable-width fields cannot be matched", f.span);
                    }
                    (format!("{}.{}", header_text(&f.header), f.field), ReadKey::Field(loc), info.width)
                }
            };
            if matches!(key, ReadKey::Field(_)) && kind == MatchKind::Valid {
                return invalid("valid match on a field", r.span);
            }
            let mask = match &r.mask {
                Some(c) => Some(const_bits(c, r.span)?.resize(width)),
                None => None,
            };
            reads.push(Read { name, key, kind, width, mask });
        }
        let mut actions = Vec::new();
        for a in &t.actions {
            match self.action_index.get(&a.name) {
                Some(&id) => actions.push(id),
                None => return unresolved(&a.name, a.span),
            }
        }
        let mut size = None;
        for (k, v) in &t.properties {
            match k.name.as_str() {
                "size" | "max_size" => {
                    if let ExprKind::Const(c) = &v.kind {
                        size = const_bits(c, v.span)?.to_u64();
                    }
                }
                "min_size" | "support_timeout" => {}
                other => return invalid(format!("unknown table property {other}"), k.span),
            }
        }
        Ok(Table { name: t.name.name.clone(), reads, actions, direct: Vec::new(), size })
    }

    fn control_block(&self, stmts: &[ControlStmt], tables: &[Table], control: &str) -> EResult<Vec<CStmt>> {
        let mut out = Vec::new();
        for s in stmts {
            out.push(match s {
                ControlStmt::Apply { table, cases, .. } => {
                    let Some(&tid) = self.table_index.get(&table.name) else {
                        return unresolved(&table.name, table.span);
                    };
                    let mut rcases = Vec::new();
                    for (label, body) in cases {
                        let sel = match label {
                            CaseLabel::Hit => CaseSel::Hit,
                            CaseLabel::Miss => CaseSel::Miss,
                            CaseLabel::Default => CaseSel::Default,
                            CaseLabel::Action(a) => match self.action_index.get(&a.name) {
                                Some(&id) if tables[tid].actions.contains(&id) => CaseSel::Action(id),
                                Some(_) => return invalid(format!("{a} is not an action of {table}"), a.span),
                                None => return unresolved(&a.name, a.span),
                            },
                        };
                        let hitmiss = matches!(sel, CaseSel::Hit | CaseSel::Miss);
                        if rcases.iter().any(|(s, _): &(CaseSel, _)| matches!(s, CaseSel::Hit | CaseSel::Miss) != hitmiss) {
                            return invalid("hit/miss and action cases cannot be mixed", table.span);
                        }
                        rcases.push((sel, self.control_block(body, tables, control)?));
                    }
                    CStmt::Apply { table: tid, cases: rcases }
                }
                ControlStmt::If { cond, then, otherwise, .. } => CStmt::If {
                    cond: self.expr(cond, Scope::default())?,
                    then: self.control_block(then, tables, control)?,
                    otherwise: self.control_block(otherwise, tables, control)?,
                    site: format!("control {control} if {}", frontend::expr_text(cond)),
                },
                ControlStmt::Call { name, .. } => {
                    if !self.control_names.contains(&name.name) {
                        return unresolved(&name.name, name.span);
                    }
                    CStmt::Call(name.name.clone())
                }
            });
        }
        Ok(out)
    }

    fn target(&self, t: &ReturnTarget) -> EResult<PTarget> {
        match t {
            ReturnTarget::ParseError(n) => Ok(PTarget::Error(n.name.clone())),
            ReturnTarget::Name(n) => {
                if let Some(&s) = self.state_index.get(&n.name) {
                    Ok(PTarget::State(s))
                } else if self.control_names.contains(&n.name) {
                    Ok(PTarget::Control(n.name.clone()))
                } else {
                    unresolved(&n.name, n.span)
                }
            }
        }
    }

    fn parser_state(&self, s: &frontend::ParserStateDecl) -> EResult<ParserState> {
        let mut latest = None;
        let mut body = Vec::new();
        for stmt in &s.body {
            let scope = Scope { latest, ..Scope::default() };
            match stmt {
                ParserStmt::Extract(h) => {
                    let (loc, ty) = self.header(h, scope)?;
                    match loc {
                        HdrLoc::Inst(i) if self.instances[i].metadata => {
                            return invalid(format!("cannot extract metadata {}", h.instance), h.span)
                        }
                        HdrLoc::Inst(_) | HdrLoc::Next(_) => {}
                        _ => return invalid("extract needs an instance or stack[next]", h.span),
                    }
                    latest = Some(ty);
                    body.push(PStmt::Extract(loc));
                }
                ParserStmt::SetMetadata(f, e) => {
                    body.push(PStmt::SetMetadata(self.field(f, scope)?, self.expr(e, scope)?));
                }
            }
        }
        let scope = Scope { latest, ..Scope::default() };
        let ret = match &s.ret {
            ParserReturn::Direct(t) => PReturn::Direct(self.target(t)?),
            ParserReturn::Select { keys, cases } => {
                let mut rkeys = Vec::new();
                let mut width = 0;
                for k in keys {
                    match k {
                        SelectKey::Field(f) => {
                            let loc = self.field(f, scope)?;
                            let ty = match &loc.hdr {
                                HdrLoc::Inst(i) => self.instances[*i].header_type,
                                HdrLoc::Next(st) | HdrLoc::Last(st) => self.stacks[*st].header_type,
                                HdrLoc::Latest => latest.unwrap_or_default(),
                            };
                            let info = &self.header_types[ty].fields[loc.field];
                            if info.varbit {
                                return invalid("cannot select on a variable-width field", f.span);
                            }
                            width += info.width;
                            rkeys.push(SelKey::Field(loc));
                        }
                        SelectKey::Current { offset, width: w } => {
                            if *w == 0 {
                                return invalid("current() of width 0", s.name.span);
                            }
                            width += w;
                            rkeys.push(SelKey::Current { offset: *offset, width: *w });
                        }
                    }
                }
                let mut rcases = Vec::new();
                for c in cases {
                    let mut values = Vec::new();
                    for v in &c.values {
                        let value = const_bits(&v.value, c.span)?;
                        if crate::values::bit_length(value.magnitude()) > width && !value.signed() {
                            return invalid(format!("select value {value} is wider than the key"), c.span);
                        }
                        let mask = match &v.mask {
                            Some(m) => const_bits(m, c.span)?.resize(width),
                            None => Bits::new(width, crate::values::mask(width), false),
                        };
                        values.push((value.resize(width).with_signed(false), mask.with_signed(false)));
                    }
                    rcases.push(SelCase { values, target: self.target(&c.target)? });
                }
                PReturn::Select { keys: rkeys, width, cases: rcases }
            }
        };
        Ok(ParserState { name: s.name.name.clone(), body, ret })
    }

    fn exception(&self, x: &frontend::ParserExceptionDecl) -> EResult<ExceptionHandler> {
        let mut body = Vec::new();
        for (f, e) in &x.body {
            body.push((self.field(f, Scope::default())?, self.expr(e, Scope::default())?));
        }
        let ret = match &x.ret {
            frontend::ExceptionReturn::Drop => HandlerReturn::Drop,
            frontend::ExceptionReturn::Control(c) => {
                if !self.control_names.contains(&c.name) {
                    return unresolved(&c.name, c.span);
                }
                HandlerReturn::Control(c.name.clone())
            }
        };
        Ok(ExceptionHandler { name: x.name.name.clone(), body, ret })
    }

    fn calculated_field(&self, c: &frontend::CalculatedFieldDecl) -> EResult<CalculatedField> {
        let loc = self.field(&c.field, Scope::default())?;
        let HdrLoc::Inst(inst) = loc.hdr else {
            return invalid("calculated fields name fixed instances", c.field.span);
        };
        let mut out = CalculatedField { inst, field: loc.field, verify: Vec::new(), update: Vec::new() };
        for clause in &c.clauses {
            if !self.calculations.contains_key(&clause.calculation.name) {
                return unresolved(&clause.calculation.name, clause.calculation.span);
            }
            let condition = match &clause.condition {
                Some(e) => Some(self.expr(e, Scope::default())?),
                None => None,
            };
            let b = CalcBinding { calculation: clause.calculation.name.clone(), condition };
            match clause.kind {
                frontend::CalcKind::Verify => out.verify.push(b),
                frontend::CalcKind::Update => out.update.push(b),
            }
        }
        Ok(out)
    }
}

fn header_text(h: &HeaderRef) -> String {
    match &h.index {
        None => h.instance.name.clone(),
        Some(StackIndex::Const(i)) => format!("{}[{i}]", h.instance),
        Some(StackIndex::Next) => format!("{}[next]", h.instance),
        Some(StackIndex::Last) => format!("{}[last]", h.instance),
    }
}
