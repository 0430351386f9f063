use std::collections::BTreeMap;

use super::*;
use crate::concrete::formals;
use crate::ir::{InvokeKind, Stmt};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AAction {
    Eps,
    Push(AFrame),
    Pop(AFrame),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Target {
    State(ControlState),
    /// An exception escaped the bottom of the stack.
    Uncaught { throw: StmtId, values: AValue },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transition {
    pub action: AAction,
    pub target: Target,
    /// Set when a throw is dispatched to a handler: (throw, handler label).
    pub ec_link: Option<(StmtId, StmtId)>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StepOutput {
    pub transitions: Vec<Transition>,
    /// Call sites whose receiver class has no matching method.
    pub unresolved: Vec<(StmtId, ClassId)>,
}

impl StepOutput {
    fn eps(&mut self, s: ControlState) {
        self.push(AAction::Eps, s);
    }

    fn push(&mut self, action: AAction, s: ControlState) {
        self.transitions.push(Transition {
            action,
            target: Target::State(s),
            ec_link: None,
        });
    }
}

/// Whether the transitions out of `stmt` depend on the top stack frame.
pub fn needs_top(stmt: &Stmt) -> bool {
    matches!(stmt, Stmt::Return(_) | Stmt::PopHandler | Stmt::Throw(_))
}

/// All transitions out of `s` given the frame on top of the stack (`None`
/// for the empty stack). The top is ignored unless [`needs_top`] holds.
pub fn abs_step(p: &Program, policy: Policy, s: &ControlState, top: Option<&AFrame>) -> StepOutput {
    let mut out = StepOutput::default();
    let eval = |e: &AExp| abs_atomic_eval(p, e, &s.fp, &s.store);
    let method = p.record(s.code).method;
    let label = |l: &str| p.label_target(method, l);
    let at = |code: StmtId, store: AStore| ControlState {
        code,
        fp: s.fp.clone(),
        store,
    };
    let next = p.next(s.code);
    let reg = |r: Reg| AAddr::Reg(s.fp.clone(), r);

    match p.stmt(s.code) {
        Stmt::Label(_) | Stmt::Nop | Stmt::Line(_) => {
            if let Some(n) = next {
                out.eps(at(n, s.store.clone()));
            }
        }
        Stmt::Goto(l) => {
            if let Some(t) = label(l) {
                out.eps(at(t, s.store.clone()));
            }
        }
        Stmt::If { cond, target } => {
            let v = eval(cond);
            if v.iter().any(|x| *x != AVal::False) {
                if let Some(n) = next {
                    out.eps(at(n, s.store.clone()));
                }
            }
            if v.contains(&AVal::False) {
                if let Some(t) = label(target) {
                    out.eps(at(t, s.store.clone()));
                }
            }
        }
        Stmt::Assign { dst, src } => {
            let v = eval(src);
            if let (Some(n), false) = (next, v.is_empty()) {
                let mut store = s.store.clone();
                store.join(reg(*dst), v);
                out.eps(at(n, store));
            }
        }
        Stmt::New { dst, class } => {
            if let Some(n) = next {
                let op = alloc_op(policy, s.code, &s.fp);
                let mut store = s.store.clone();
                store.join(reg(*dst), [AVal::Obj(op.clone(), *class)]);
                for &f in p.fields_of(*class) {
                    store.join(AAddr::Field(op.clone(), f), [AVal::Null]);
                }
                out.eps(at(n, store));
            }
        }
        Stmt::FieldGet { dst, obj, field } => {
            let v = abs_field_eval(p, obj, &s.fp, &s.store, *field);
            if let (Some(n), false) = (next, v.is_empty()) {
                let mut store = s.store.clone();
                store.join(reg(*dst), v);
                out.eps(at(n, store));
            }
        }
        Stmt::FieldPut { obj, field, value } => {
            let v = eval(value);
            let objs: Vec<Context> = eval(obj)
                .into_iter()
                .filter_map(|o| match o {
                    AVal::Obj(op, _) => Some(op),
                    _ => None,
                })
                .collect();
            if let (Some(n), false, false) = (next, v.is_empty(), objs.is_empty()) {
                let mut store = s.store.clone();
                for op in objs {
                    store.join(AAddr::Field(op, *field), v.iter().cloned());
                }
                out.eps(at(n, store));
            }
        }
        Stmt::Invoke(call) => {
            let Some(resume) = next else { return out };
            let args: Vec<AValue> = call.args.iter().map(eval).collect();
            if args.iter().any(|a| a.is_empty()) {
                return out;
            }
            // (target, values bound to the receiver)
            let mut targets: BTreeMap<MethodId, AValue> = BTreeMap::new();
            match call.kind {
                InvokeKind::Virtual | InvokeKind::Interface => {
                    for v in &args[0] {
                        if let AVal::Obj(_, class) = v {
                            match p.resolve_method(*class, &call.method, call.arity(), call.kind) {
                                Ok(m) => {
                                    targets.entry(m).or_default().insert(v.clone());
                                }
                                Err(_) => out.unresolved.push((s.code, *class)),
                            }
                        }
                    }
                }
                kind => match p.resolve_method(call.class, &call.method, call.arity(), kind) {
                    Ok(m) => {
                        let receiver = if kind.has_receiver() {
                            args[0]
                                .iter()
                                .filter(|v| matches!(v, AVal::Obj(..)))
                                .cloned()
                                .collect()
                        } else {
                            AValue::new()
                        };
                        if !kind.has_receiver() || !receiver.is_empty() {
                            targets.insert(m, receiver);
                        }
                    }
                    Err(_) => out.unresolved.push((s.code, call.class)),
                },
            }
            let frame = AFrame::Fun {
                fp: s.fp.clone(),
                resume,
            };
            for (m, receiver) in targets {
                let entry = p.method(m).first;
                let fp = alloc_fp(policy, entry, s.code, &s.fp);
                let mut store = s.store.clone();
                for (i, (r, v)) in formals(call.kind).zip(&args).enumerate() {
                    let v = if i == 0 && call.kind.has_receiver() { &receiver } else { v };
                    store.join(AAddr::Reg(fp.clone(), r), v.iter().cloned());
                }
                out.push(
                    AAction::Push(frame.clone()),
                    ControlState {
                        code: entry,
                        fp,
                        store,
                    },
                );
            }
        }
        Stmt::PushHandler { class, label: l } => {
            if let (Some(n), Some(t)) = (next, label(l)) {
                out.push(
                    AAction::Push(AFrame::Handle {
                        class: *class,
                        label: t,
                    }),
                    at(n, s.store.clone()),
                );
            }
        }
        Stmt::PopHandler => {
            if let (Some(n), Some(f @ AFrame::Handle { .. })) = (next, top) {
                out.push(AAction::Pop(f.clone()), at(n, s.store.clone()));
            }
        }
        Stmt::Return(e) => {
            let v = eval(e);
            match top {
                _ if v.is_empty() => {}
                Some(f @ AFrame::Fun { fp, resume }) => {
                    let mut store = s.store.clone();
                    store.join(AAddr::Reg(fp.clone(), Reg::Ret), v);
                    out.push(
                        AAction::Pop(f.clone()),
                        ControlState {
                            code: *resume,
                            fp: fp.clone(),
                            store,
                        },
                    );
                }
                Some(f @ AFrame::Handle { .. }) => out.push(AAction::Pop(f.clone()), s.clone()),
                None => {}
            }
        }
        Stmt::Throw(e) => {
            let thrown: AValue = eval(e)
                .into_iter()
                .filter(|v| matches!(v, AVal::Obj(..)))
                .collect();
            if thrown.is_empty() {
                return out;
            }
            match top {
                None => out.transitions.push(Transition {
                    action: AAction::Eps,
                    target: Target::Uncaught {
                        throw: s.code,
                        values: thrown,
                    },
                    ec_link: None,
                }),
                Some(f @ AFrame::Handle { class, label: l }) => {
                    let (caught, missed): (AValue, AValue) = thrown.into_iter().partition(|v| {
                        matches!(v, AVal::Obj(_, c) if p.is_subclass(*c, *class))
                    });
                    if !caught.is_empty() {
                        let mut store = s.store.clone();
                        store.join(reg(Reg::Exn), caught);
                        out.transitions.push(Transition {
                            action: AAction::Pop(f.clone()),
                            target: Target::State(at(*l, store)),
                            ec_link: Some((s.code, *l)),
                        });
                    }
                    if !missed.is_empty() {
                        out.push(AAction::Pop(f.clone()), s.clone());
                    }
                }
                Some(f @ AFrame::Fun { .. }) => out.push(AAction::Pop(f.clone()), s.clone()),
            }
        }
    }
    out
}
