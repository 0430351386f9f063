use std::collections::{BTreeSet, HashSet};
use std::fmt;

use super::*;

/// Handler nesting beyond this depth is reported rather than explored.
const MAX_HANDLER_DEPTH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DiagCode {
    DuplicateField,
    DuplicateMethod,
    UnknownRegister,
    UnknownLabel,
    DuplicateLabel,
    UnbalancedHandler,
    FallsOffEnd,
    ReservedRegisterWrite,
    UnresolvedStaticMethod,
    UnboundedHandlerNesting,
}

impl DiagCode {
    pub fn as_str(self) -> &'static str {
        match self {
            DiagCode::DuplicateField => "duplicate-field",
            DiagCode::DuplicateMethod => "duplicate-method",
            DiagCode::UnknownRegister => "unknown-register",
            DiagCode::UnknownLabel => "unknown-label",
            DiagCode::DuplicateLabel => "duplicate-label",
            DiagCode::UnbalancedHandler => "unbalanced-handler",
            DiagCode::FallsOffEnd => "falls-off-end",
            DiagCode::ReservedRegisterWrite => "reserved-register-write",
            DiagCode::UnresolvedStaticMethod => "unresolved-static-method",
            DiagCode::UnboundedHandlerNesting => "unbounded-handler-nesting",
        }
    }
}

impl fmt::Display for DiagCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub code: DiagCode,
    pub pos: Pos,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}: {}", self.pos, self.code, self.message)
    }
}

/// Checks the well-formedness rules that parsing does not enforce. Returns
/// one diagnostic per violation, in source order.
pub fn validate(p: &Program) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for class in p.classes() {
        let mut seen = HashSet::new();
        for f in &class.fields {
            if !seen.insert(f.name) {
                out.push(Diagnostic {
                    code: DiagCode::DuplicateField,
                    pos: f.pos,
                    message: format!(
                        "field '{}' declared twice in class '{}'",
                        p.field_name(f.name),
                        class.name
                    ),
                });
            }
        }
        let mut seen = HashSet::new();
        for &mid in &class.methods {
            let m = p.method(mid);
            if !seen.insert((m.name.clone(), m.arity())) {
                out.push(Diagnostic {
                    code: DiagCode::DuplicateMethod,
                    pos: m.pos,
                    message: format!(
                        "method '{}/{}' declared twice in class '{}'",
                        m.name,
                        m.arity(),
                        class.name
                    ),
                });
            }
        }
        for &mid in &class.methods {
            check_method(p, mid, &mut out);
        }
    }
    out
}

fn diag(out: &mut Vec<Diagnostic>, code: DiagCode, rec: &StmtRecord, message: String) {
    out.push(Diagnostic {
        code,
        pos: rec.pos,
        message,
    });
}

fn check_method(p: &Program, mid: MethodId, out: &mut Vec<Diagnostic>) {
    let m = p.method(mid);
    let name = p.method_name(mid);
    let mut labels = HashSet::new();
    for sid in m.body() {
        let rec = p.record(sid);
        let mut reads = Vec::new();
        let mut write = None;
        let mut targets: Vec<&str> = Vec::new();
        match &rec.stmt {
            Stmt::Label(l) => {
                if !labels.insert(l.clone()) {
                    diag(
                        out,
                        DiagCode::DuplicateLabel,
                        rec,
                        format!("label '{l}' defined twice in {name}"),
                    );
                }
            }
            Stmt::Nop | Stmt::Line(_) | Stmt::PopHandler => {}
            Stmt::Goto(l) => targets.push(l),
            Stmt::If { cond, target } => {
                cond.registers(&mut reads);
                targets.push(target);
            }
            Stmt::Assign { dst, src } => {
                src.registers(&mut reads);
                write = Some(*dst);
            }
            Stmt::New { dst, .. } => write = Some(*dst),
            Stmt::Invoke(call) => {
                call.args.iter().for_each(|a| a.registers(&mut reads));
                if matches!(call.kind, InvokeKind::Static | InvokeKind::Direct)
                    && p
                        .resolve_method(call.class, &call.method, call.arity(), call.kind)
                        .is_err()
                {
                    diag(
                        out,
                        DiagCode::UnresolvedStaticMethod,
                        rec,
                        format!(
                            "no method '{}/{}' on class '{}'",
                            call.method,
                            call.arity(),
                            p.class_name(call.class)
                        ),
                    );
                }
            }
            Stmt::Return(e) | Stmt::Throw(e) => e.registers(&mut reads),
            Stmt::FieldPut { obj, value, .. } => {
                obj.registers(&mut reads);
                value.registers(&mut reads);
            }
            Stmt::FieldGet { dst, obj, .. } => {
                obj.registers(&mut reads);
                write = Some(*dst);
            }
            Stmt::PushHandler { label, .. } => targets.push(label),
        }
        for r in reads.into_iter().chain(write) {
            if !m.declares(r) {
                diag(
                    out,
                    DiagCode::UnknownRegister,
                    rec,
                    format!("register '{r}' is not declared in {name} (limit {})", m.limit),
                );
            }
        }
        if let Some(r) = write.filter(|r| r.is_reserved()) {
            diag(
                out,
                DiagCode::ReservedRegisterWrite,
                rec,
                format!("register '{r}' cannot be assigned"),
            );
        }
        for l in targets {
            if p.label_target(mid, l).is_none() {
                diag(
                    out,
                    DiagCode::UnknownLabel,
                    rec,
                    format!("label '{l}' is not defined in {name}"),
                );
            }
        }
    }
    match m.body().last() {
        Some(last) if !p.stmt(last).falls_through() => {}
        Some(last) => diag(
            out,
            DiagCode::FallsOffEnd,
            p.record(last),
            format!("control can fall off the end of {name}"),
        ),
        None => out.push(Diagnostic {
            code: DiagCode::FallsOffEnd,
            pos: m.pos,
            message: format!("{name} has an empty body"),
        }),
    }
    check_handler_balance(p, mid, out);
}

/// Forward dataflow over the set of handler depths reaching each statement.
/// A `push-handler` also flows, at its pre-push depth, to its handler label:
/// that is where control lands once the handler frame has been consumed.
fn check_handler_balance(p: &Program, mid: MethodId, out: &mut Vec<Diagnostic>) {
    let m = p.method(mid);
    if m.len == 0 {
        return;
    }
    let base = m.first.0;
    let mut depths: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); m.len as usize];
    let mut work = vec![(m.first, 0usize)];
    let mut underflow = BTreeSet::new();
    let mut overflow = BTreeSet::new();
    while let Some((sid, d)) = work.pop() {
        if !depths[(sid.0 - base) as usize].insert(d) {
            continue;
        }
        let stmt = p.stmt(sid);
        let mut flow = |target: Option<StmtId>, depth: usize| {
            if let Some(t) = target {
                work.push((t, depth));
            }
        };
        match stmt {
            Stmt::PushHandler { label, .. } => {
                if d >= MAX_HANDLER_DEPTH {
                    overflow.insert(sid);
                    continue;
                }
                flow(p.next(sid), d + 1);
                flow(p.label_target(mid, label), d);
            }
            Stmt::PopHandler => {
                if d == 0 {
                    underflow.insert(sid);
                } else {
                    flow(p.next(sid), d - 1);
                }
            }
            Stmt::Goto(l) => flow(p.label_target(mid, l), d),
            Stmt::If { target, .. } => {
                flow(p.next(sid), d);
                flow(p.label_target(mid, target), d);
            }
            Stmt::Return(_) | Stmt::Throw(_) => {}
            _ => flow(p.next(sid), d),
        }
    }
    for sid in underflow {
        diag(
            out,
            DiagCode::UnbalancedHandler,
            p.record(sid),
            format!(
                "pop-handler at {} may run with no handler installed",
                p.stmt_name(sid)
            ),
        );
    }
    for sid in overflow {
        diag(
            out,
            DiagCode::UnboundedHandlerNesting,
            p.record(sid),
            format!(
                "handler nesting at {} exceeds {MAX_HANDLER_DEPTH}",
                p.stmt_name(sid)
            ),
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn codes(src: &str) -> Vec<DiagCode> {
        validate(&parse_program(src).unwrap())
            .into_iter()
            .map(|d| d.code)
            .collect()
    }

    fn method(body: &str) -> String {
        format!("(class M extends Object () ((method main () void (throws) (limit 2) {body})))")
    }

    #[test]
    fn minimal_program_is_clean() {
        assert!(codes(&method("(nop) (return void)")).is_empty());
    }

    #[test]
    fn goto_undefined_label() {
        assert_eq!(codes(&method("(goto nowhere)")), [DiagCode::UnknownLabel]);
    }

    #[test]
    fn pop_without_push() {
        assert_eq!(
            codes(&method("(pop-handler) (return void)")),
            [DiagCode::UnbalancedHandler]
        );
    }

    #[test]
    fn pop_on_one_branch_only() {
        // the jump skips the push, so the pop has no matching push on that path
        let src = method(
            "(if v0 (goto skip)) (push-handler Object h) (label skip) (pop-handler)
             (return void) (label h) (return void)",
        );
        assert_eq!(codes(&src), [DiagCode::UnbalancedHandler]);
    }

    #[test]
    fn balanced_try_catch_is_clean() {
        let src = method(
            "(push-handler Object h) (nop) (pop-handler) (label after) (return void)
             (label h) (goto after)",
        );
        assert!(codes(&src).is_empty());
    }

    #[test]
    fn registers_and_reserved_names() {
        assert_eq!(
            codes(&method("(assign v5 1) (return void)")),
            [DiagCode::UnknownRegister]
        );
        assert_eq!(
            codes(&method("(assign exn 1) (return void)")),
            [DiagCode::ReservedRegisterWrite]
        );
        assert_eq!(codes(&method("(return p0)")), [DiagCode::UnknownRegister]);
    }

    #[test]
    fn structural_errors() {
        assert_eq!(codes(&method("(nop)")), [DiagCode::FallsOffEnd]);
        assert_eq!(
            codes(&method("(label a) (label a) (return void)")),
            [DiagCode::DuplicateLabel]
        );
        assert_eq!(
            codes(&method("(invoke-static M nope () ()) (return void)")),
            [DiagCode::UnresolvedStaticMethod]
        );
        assert_eq!(
            codes(&method("(label l) (push-handler Object h) (goto l) (label h) (return void)")),
            [DiagCode::UnboundedHandlerNesting]
        );
        assert_eq!(
            codes(
                "(class M extends Object ((field a int) (field a int))
                   ((method f () void (throws) (limit 0) (return void))
                    (method f () void (throws) (limit 0) (return void))))"
            ),
            [DiagCode::DuplicateField, DiagCode::DuplicateMethod]
        );
    }
}
