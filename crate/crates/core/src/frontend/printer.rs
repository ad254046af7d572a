//! Canonical source rendering of a syntax tree.

use std::fmt::Write;

use super::ast::*;
use crate::values::UnOp;

pub fn print_program(tree: &SyntaxTree) -> String {
    let mut out = String::new();
    for d in &tree.declarations {
        print_decl(&mut out, &d.kind);
        out.push('\n');
    }
    out
}

fn const_text(c: &ConstExpr) -> String {
    let body = match c.width {
        Some(w) => format!("{w}'{:#x}", c.value),
        None => format!("{:#x}", c.value),
    };
    match c.sign {
        SignMarker::Plain => body,
        SignMarker::NegativeLiteral => format!("-{body}"),
        SignMarker::NegatedExpression => format!("-({body})"),
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

fn field_text(f: &FieldRef) -> String {
    format!("{}.{}", header_text(&f.header), f.field)
}

/// Fully parenthesized, so printing never depends on precedence.
pub fn expr_text(e: &Expr) -> String {
    match &e.kind {
        ExprKind::Const(c) => const_text(c),
        ExprKind::Bool(b) => b.to_string(),
        ExprKind::Name(n) => n.name.clone(),
        ExprKind::Header(h) => header_text(h),
        ExprKind::Field(f) => field_text(f),
        ExprKind::Valid(h) => format!("valid({})", header_text(h)),
        ExprKind::Unary(UnOp::Neg, x) => format!("-({})", expr_text(x)),
        ExprKind::Unary(UnOp::Not, x) => format!("~({})", expr_text(x)),
        ExprKind::Binary(op, a, b) => format!("({} {} {})", expr_text(a), op.symbol(), expr_text(b)),
        ExprKind::Not(x) => format!("not ({})", expr_text(x)),
        ExprKind::And(a, b) => format!("({} and {})", expr_text(a), expr_text(b)),
        ExprKind::Or(a, b) => format!("({} or {})", expr_text(a), expr_text(b)),
    }
}

fn target_text(t: &ReturnTarget) -> String {
    match t {
        ReturnTarget::Name(n) => n.name.clone(),
        ReturnTarget::ParseError(n) => format!("parse_error {n}"),
    }
}

fn binding_text(b: &Option<Binding>) -> String {
    match b {
        Some(Binding::Direct(t)) => format!(" direct : {t};"),
        Some(Binding::Static(t)) => format!(" static : {t};"),
        None => String::new(),
    }
}

fn print_block(out: &mut String, stmts: &[ControlStmt], depth: usize) {
    let pad = "    ".repeat(depth);
    for s in stmts {
        match s {
            ControlStmt::Apply { table, cases, .. } => {
                if cases.is_empty() {
                    let _ = writeln!(out, "{pad}apply({table});");
                } else {
                    let _ = writeln!(out, "{pad}apply({table}) {{");
                    for (label, body) in cases {
                        let l = match label {
                            CaseLabel::Hit => "hit".to_string(),
                            CaseLabel::Miss => "miss".to_string(),
                            CaseLabel::Default => "default".to_string(),
                            CaseLabel::Action(a) => a.name.clone(),
                        };
                        let _ = writeln!(out, "{pad}    {l} {{");
                        print_block(out, body, depth + 2);
                        let _ = writeln!(out, "{pad}    }}");
                    }
                    let _ = writeln!(out, "{pad}}}");
                }
            }
            ControlStmt::If { cond, then, otherwise, .. } => {
                let _ = writeln!(out, "{pad}if ({}) {{", expr_text(cond));
                print_block(out, then, depth + 1);
                if otherwise.is_empty() {
                    let _ = writeln!(out, "{pad}}}");
                } else {
                    let _ = writeln!(out, "{pad}}} else {{");
                    print_block(out, otherwise, depth + 1);
                    let _ = writeln!(out, "{pad}}}");
                }
            }
            ControlStmt::Call { name, .. } => {
                let _ = writeln!(out, "{pad}{name}();");
            }
        }
    }
}

fn print_decl(out: &mut String, d: &DeclKind) {
    match d {
        DeclKind::HeaderType(h) => {
            let _ = writeln!(out, "header_type {} {{\n    fields {{", h.name);
            for f in &h.fields {
                let w = match f.width {
                    FieldWidth::Fixed(w) => w.to_string(),
                    FieldWidth::Varbit => "*".to_string(),
                };
                let mut attrs = Vec::new();
                if f.signed {
                    attrs.push("signed");
                }
                if f.saturating {
                    attrs.push("saturating");
                }
                let attrs = if attrs.is_empty() { String::new() } else { format!(" ({})", attrs.join(", ")) };
                let _ = writeln!(out, "        {} : {w}{attrs};", f.name);
            }
            let _ = writeln!(out, "    }}");
            if let Some(l) = &h.length {
                let _ = writeln!(out, "    length : {};", expr_text(l));
            }
            if let Some(m) = h.max_length {
                let _ = writeln!(out, "    max_length : {m};");
            }
            let _ = writeln!(out, "}}");
        }
        DeclKind::Header(i) => {
            let size = i.stack_size.map(|s| format!("[{s}]")).unwrap_or_default();
            let _ = writeln!(out, "header {} {}{size};", i.type_name, i.name);
        }
        DeclKind::Metadata(i) => {
            if i.initializer.is_empty() {
                let _ = writeln!(out, "metadata {} {};", i.type_name, i.name);
            } else {
                let _ = writeln!(out, "metadata {} {} {{", i.type_name, i.name);
                for (f, e) in &i.initializer {
                    let _ = writeln!(out, "    {f} : {};", expr_text(e));
                }
                let _ = writeln!(out, "}};");
            }
        }
        DeclKind::ParserState(p) => {
            let _ = writeln!(out, "parser {} {{", p.name);
            for s in &p.body {
                match s {
                    ParserStmt::Extract(h) => {
                        let _ = writeln!(out, "    extract({});", header_text(h));
                    }
                    ParserStmt::SetMetadata(f, e) => {
                        let _ = writeln!(out, "    set_metadata({}, {});", field_text(f), expr_text(e));
                    }
                }
            }
            match &p.ret {
                ParserReturn::Direct(t) => {
                    let _ = writeln!(out, "    return {};", target_text(t));
                }
                ParserReturn::Select { keys, cases } => {
                    let keys: Vec<String> = keys
                        .iter()
                        .map(|k| match k {
                            SelectKey::Field(f) => field_text(f),
                            SelectKey::Current { offset, width } => format!("current({offset}, {width})"),
                        })
                        .collect();
                    let _ = writeln!(out, "    return select({}) {{", keys.join(", "));
                    for c in cases {
                        let values = if c.values.is_empty() {
                            "default".to_string()
                        } else {
                            c.values
                                .iter()
                                .map(|v| match &v.mask {
                                    Some(m) => format!("{} mask {}", const_text(&v.value), const_text(m)),
                                    None => const_text(&v.value),
                                })
                                .collect::<Vec<_>>()
                                .join(", ")
                        };
                        let _ = writeln!(out, "        {values} : {};", target_text(&c.target));
                    }
                    let _ = writeln!(out, "    }}");
                }
            }
            let _ = writeln!(out, "}}");
        }
        DeclKind::ParserException(p) => {
            let _ = writeln!(out, "parser_exception {} {{", p.name);
            for (f, e) in &p.body {
                let _ = writeln!(out, "    set_metadata({}, {});", field_text(f), expr_text(e));
            }
            match &p.ret {
                ExceptionReturn::Control(c) => {
                    let _ = writeln!(out, "    return {c};");
                }
                ExceptionReturn::Drop => {
                    let _ = writeln!(out, "    parser_drop;");
                }
            }
            let _ = writeln!(out, "}}");
        }
        DeclKind::Action(a) => {
            let params: Vec<&str> = a.params.iter().map(|p| p.name.as_str()).collect();
            let _ = writeln!(out, "action {}({}) {{", a.name, params.join(", "));
            for c in &a.body {
                let args: Vec<String> = c.args.iter().map(expr_text).collect();
                let _ = writeln!(out, "    {}({});", c.name, args.join(", "));
            }
            let _ = writeln!(out, "}}");
        }
        DeclKind::Table(t) => {
            let _ = writeln!(out, "table {} {{", t.name);
            if !t.reads.is_empty() {
                let _ = writeln!(out, "    reads {{");
                for r in &t.reads {
                    let target = match &r.target {
                        ReadTarget::Field(f) => field_text(f),
                        ReadTarget::Header(h) => header_text(h),
                    };
                    let mask = r.mask.as_ref().map(|m| format!(" mask {}", const_text(m))).unwrap_or_default();
                    let _ = writeln!(out, "        {target}{mask} : {};", r.kind);
                }
                let _ = writeln!(out, "    }}");
            }
            let _ = writeln!(out, "    actions {{");
            for a in &t.actions {
                let _ = writeln!(out, "        {a};");
            }
            let _ = writeln!(out, "    }}");
            for (k, v) in &t.properties {
                if matches!(v.kind, ExprKind::Bool(true)) {
                    let _ = writeln!(out, "    {k};");
                } else {
                    let _ = writeln!(out, "    {k} : {};", expr_text(v));
                }
            }
            let _ = writeln!(out, "}}");
        }
        DeclKind::Control(c) => {
            let _ = writeln!(out, "control {} {{", c.name);
            print_block(out, &c.body, 1);
            let _ = writeln!(out, "}}");
        }
        DeclKind::FieldList(f) => {
            let _ = writeln!(out, "field_list {} {{", f.name);
            for e in &f.entries {
                let text = match e {
                    FieldListEntry::Header(h) => header_text(h),
                    FieldListEntry::Field(f) => field_text(f),
                    FieldListEntry::Const(c) => const_text(c),
                    FieldListEntry::Payload(_) => "payload".to_string(),
                };
                let _ = writeln!(out, "    {text};");
            }
            let _ = writeln!(out, "}}");
        }
        DeclKind::FieldListCalculation(c) => {
            let _ = writeln!(out, "field_list_calculation {} {{\n    input {{", c.name);
            for i in &c.inputs {
                let _ = writeln!(out, "        {i};");
            }
            let _ = writeln!(
                out,
                "    }}\n    algorithm : {};\n    output_width : {};\n}}",
                c.algorithm, c.output_width
            );
        }
        DeclKind::CalculatedField(c) => {
            let _ = writeln!(out, "calculated_field {} {{", field_text(&c.field));
            for cl in &c.clauses {
                let kind = match cl.kind {
                    CalcKind::Verify => "verify",
                    CalcKind::Update => "update",
                };
                let cond = cl.condition.as_ref().map(|e| format!(" if ({})", expr_text(e))).unwrap_or_default();
                let _ = writeln!(out, "    {kind} {}{cond};", cl.calculation);
            }
            let _ = writeln!(out, "}}");
        }
        DeclKind::Counter(c) => {
            let _ = write!(out, "counter {} {{ type : {};{}", c.name, c.kind, binding_text(&c.binding));
            if let Some(n) = c.instance_count {
                let _ = write!(out, " instance_count : {n};");
            }
            if let Some(n) = c.min_width {
                let _ = write!(out, " min_width : {n};");
            }
            if c.saturating {
                let _ = write!(out, " saturating;");
            }
            let _ = writeln!(out, " }}");
        }
        DeclKind::Meter(m) => {
            let _ = write!(out, "meter {} {{ type : {};{}", m.name, m.kind, binding_text(&m.binding));
            if let Some(n) = m.instance_count {
                let _ = write!(out, " instance_count : {n};");
            }
            if let Some(r) = &m.result {
                let _ = write!(out, " result : {};", field_text(r));
            }
            let _ = writeln!(out, " }}");
        }
        DeclKind::Register(r) => {
            let _ = write!(out, "register {} {{", r.name);
            if let Some(w) = r.width {
                let _ = write!(out, " width : {w};");
            }
            if let Some(l) = &r.layout {
                let _ = write!(out, " layout : {l};");
            }
            let _ = write!(out, "{}", binding_text(&r.binding));
            if let Some(n) = r.instance_count {
                let _ = write!(out, " instance_count : {n};");
            }
            if !r.attributes.is_empty() {
                let attrs: Vec<&str> = r.attributes.iter().map(|a| a.name.as_str()).collect();
                let _ = write!(out, " attributes : {};", attrs.join(", "));
            }
            let _ = writeln!(out, " }}");
        }
    }
}
