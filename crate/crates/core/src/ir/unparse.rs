use std::fmt::Write;

use super::sexp::quote;
use super::*;

fn attrs(out: &mut String, attributes: &[Attribute]) {
    for a in attributes {
        out.push_str(a.keyword());
        out.push(' ');
    }
}

fn types(ts: &[Type]) -> String {
    ts.iter().map(Type::to_string).collect::<Vec<_>>().join(" ")
}

fn aexp(p: &Program, e: &AExp) -> String {
    match e {
        AExp::True => "true".into(),
        AExp::False => "false".into(),
        AExp::Null => "null".into(),
        AExp::Void => "void".into(),
        AExp::Reg(r) => r.to_string(),
        AExp::Int(n) => n.to_string(),
        AExp::Str(s) => quote(s),
        AExp::Op(op, args) => {
            let mut s = format!("({}", op.keyword());
            for a in args {
                s.push(' ');
                s.push_str(&aexp(p, a));
            }
            s.push(')');
            s
        }
        AExp::InstanceOf(e, c) => format!("(instance-of {} {})", aexp(p, e), p.class_name(*c)),
    }
}

fn stmt(p: &Program, s: &Stmt) -> String {
    match s {
        Stmt::Label(l) => format!("(label {l})"),
        Stmt::Nop => "(nop)".into(),
        Stmt::Line(n) => format!("(line {n})"),
        Stmt::Goto(l) => format!("(goto {l})"),
        Stmt::If { cond, target } => format!("(if {} (goto {target}))", aexp(p, cond)),
        Stmt::Assign { dst, src } => format!("(assign {dst} {})", aexp(p, src)),
        Stmt::New { dst, class } => format!("(assign {dst} (new {}))", p.class_name(*class)),
        Stmt::Invoke(call) => {
            let args = call
                .args
                .iter()
                .map(|a| aexp(p, a))
                .collect::<Vec<_>>()
                .join(" ");
            format!(
                "({} {} {} ({args}) ({}))",
                call.kind.keyword(),
                p.class_name(call.class),
                call.method,
                types(&call.types)
            )
        }
        Stmt::Return(e) => format!("(return {})", aexp(p, e)),
        Stmt::FieldPut { obj, field, value } => format!(
            "(field-put {} {} {})",
            aexp(p, obj),
            p.field_name(*field),
            aexp(p, value)
        ),
        Stmt::FieldGet { dst, obj, field } => {
            format!("(field-get {dst} {} {})", aexp(p, obj), p.field_name(*field))
        }
        Stmt::PushHandler { class, label } => {
            format!("(push-handler {} {label})", p.class_name(*class))
        }
        Stmt::PopHandler => "(pop-handler)".into(),
        Stmt::Throw(e) => format!("(throw {})", aexp(p, e)),
    }
}

/// Renders a program back to source text accepted by
/// [`parse_program`](super::parse_program).
pub fn unparse(p: &Program) -> String {
    let mut out = String::new();
    for class in p.classes() {
        let parent = class.parent.map_or(OBJECT, |c| p.class_name(c));
        out.push('(');
        attrs(&mut out, &class.attributes);
        let _ = writeln!(out, "class {} extends {}", class.name, parent);
        out.push_str("  (");
        for (i, f) in class.fields.iter().enumerate() {
            if i > 0 {
                out.push_str("\n   ");
            }
            out.push_str("(field ");
            attrs(&mut out, &f.attributes);
            let _ = write!(out, "{} {})", p.field_name(f.name), f.ty);
        }
        out.push_str(")\n  (");
        for (i, &mid) in class.methods.iter().enumerate() {
            let m = p.method(mid);
            if i > 0 {
                out.push_str("\n   ");
            }
            out.push_str("(method ");
            attrs(&mut out, &m.attributes);
            let throws: Vec<&str> = m.throws.iter().map(|t| &**t).collect();
            let _ = write!(
                out,
                "{} ({}) {} (throws{}{}) (limit {})",
                m.name,
                types(&m.params),
                m.ret,
                if throws.is_empty() { "" } else { " " },
                throws.join(" "),
                m.limit
            );
            for sid in m.body() {
                out.push_str("\n     ");
                out.push_str(&stmt(p, p.stmt(sid)));
            }
            out.push(')');
        }
        out.push_str("))\n");
    }
    out
}
