//! Deterministic reference interpreter for the bytecode.
//!
//! A configuration is a statement sequence (the [`StmtId`] of its first
//! statement), a frame pointer, a store and a continuation stack. The
//! interpreter is the ground truth that abstract results are tested against,
//! so it follows the transition rules literally, including their corner
//! cases: a throw is unwound one frame per step, and a caught exception runs
//! its handler under the frame pointer of the throwing method.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, Write};
use std::sync::Arc;

use serde::Serialize;

use crate::ir::{AExp, AtomicOp, ClassId, FieldId, InvokeKind, MethodId, Program, Reg, Stmt, StmtId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Fp(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Op(pub u32);

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Val {
    Obj(Op, ClassId),
    Int(i64),
    Str(Arc<str>),
    True,
    False,
    Null,
    Void,
}

impl Val {
    fn bool(b: bool) -> Val {
        if b {
            Val::True
        } else {
            Val::False
        }
    }
}

impl fmt::Display for Val {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Val::Obj(op, c) => write!(f, "obj#{}:{}", op.0, c.0),
            Val::Int(n) => write!(f, "{n}"),
            Val::Str(s) => write!(f, "{s:?}"),
            Val::True => f.write_str("true"),
            Val::False => f.write_str("false"),
            Val::Null => f.write_str("null"),
            Val::Void => f.write_str("void"),
        }
    }
}

/// The if-goto rule falls through when the condition is anything but
/// `false`, and jumps otherwise. This is the only place that polarity is
/// decided.
pub fn condition_falls_through(v: &Val) -> bool {
    *v != Val::False
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Addr {
    Reg(Fp, Reg),
    Field(Op, FieldId),
}

pub type Store = BTreeMap<Addr, Val>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Frame {
    /// A pending return: the caller's frame pointer and the statement after
    /// the call.
    Fun { fp: Fp, resume: StmtId },
    /// An installed handler; `label` is the `(label l)` statement.
    Handle { class: ClassId, label: StmtId },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConcreteConfig {
    pub code: StmtId,
    pub fp: Fp,
    pub store: Store,
    /// The continuation stack, bottom first; the top frame is the last one.
    pub kont: Vec<Frame>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Terminal {
    Normal(Val),
    Uncaught(Val),
    Fault(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Eps,
    Push(Frame),
    Pop(Frame),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Step {
    Next(ConcreteConfig, Action),
    Done(Terminal),
}

/// Where every pointer of a run was allocated. The abstraction map needs
/// this to name concrete pointers by their abstract counterparts.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AllocHistory {
    /// For each frame pointer: the callee's entry statement and the full
    /// call string, most recent call site first.
    pub frames: Vec<(StmtId, Vec<StmtId>)>,
    /// For each object pointer: the `new` statement and the frame pointer
    /// that was current when it ran.
    pub objects: Vec<(StmtId, Fp)>,
}

/// Fresh-pointer allocation plus the record of where pointers came from.
#[derive(Debug, Clone)]
pub struct Machine<'p> {
    program: &'p Program,
    pub history: AllocHistory,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Fault {
    #[error("unbound register {0}")]
    Unbound(Reg),
    #[error("unbound field {0}")]
    UnboundField(String),
    #[error("null dereference")]
    NullDeref,
    #[error("division by zero")]
    DivByZero,
    #[error("type error: {0}")]
    Type(String),
    #[error("{0}")]
    Other(String),
}

type Eval<T> = Result<T, Fault>;

/// Evaluates an atomic expression under frame pointer `fp`.
pub fn atomic_eval(p: &Program, e: &AExp, fp: Fp, store: &Store) -> Eval<Val> {
    Ok(match e {
        AExp::True => Val::True,
        AExp::False => Val::False,
        AExp::Null => Val::Null,
        AExp::Void => Val::Void,
        AExp::Int(n) => Val::Int(*n),
        AExp::Str(s) => Val::Str(s.clone()),
        AExp::Reg(r) => store
            .get(&Addr::Reg(fp, *r))
            .cloned()
            .ok_or(Fault::Unbound(*r))?,
        AExp::InstanceOf(e, class) => match atomic_eval(p, e, fp, store)? {
            Val::Obj(_, c) => Val::bool(p.is_subclass(c, *class)),
            _ => Val::False,
        },
        AExp::Op(op, args) => {
            let vals = args
                .iter()
                .map(|a| atomic_eval(p, a, fp, store))
                .collect::<Eval<Vec<_>>>()?;
            apply_op(*op, &vals)?
        }
    })
}

fn apply_op(op: AtomicOp, vals: &[Val]) -> Eval<Val> {
    let mismatch = || Fault::Type(format!("bad operands to {}", op.keyword()));
    Ok(match (op, vals) {
        (AtomicOp::Eq, [a, b]) => Val::bool(a == b),
        (AtomicOp::Not, [v]) => match v {
            Val::True => Val::False,
            Val::False => Val::True,
            _ => return Err(mismatch()),
        },
        (AtomicOp::And | AtomicOp::Or, [a, b]) => {
            let as_bool = |v: &Val| match v {
                Val::True => Ok(true),
                Val::False => Ok(false),
                _ => Err(mismatch()),
            };
            let (a, b) = (as_bool(a)?, as_bool(b)?);
            Val::bool(if op == AtomicOp::And { a && b } else { a || b })
        }
        (AtomicOp::StringConcat, [a, b]) => {
            let text = |v: &Val| match v {
                Val::Str(s) => Ok(s.to_string()),
                Val::Int(n) => Ok(n.to_string()),
                _ => Err(mismatch()),
            };
            Val::Str(format!("{}{}", text(a)?, text(b)?).into())
        }
        (_, [Val::Int(a), Val::Int(b)]) => {
            let (a, b) = (*a, *b);
            match op {
                AtomicOp::Add => Val::Int(a.wrapping_add(b)),
                AtomicOp::Sub => Val::Int(a.wrapping_sub(b)),
                AtomicOp::Mul => Val::Int(a.wrapping_mul(b)),
                AtomicOp::Div | AtomicOp::Mod if b == 0 => return Err(Fault::DivByZero),
                AtomicOp::Div => Val::Int(a.wrapping_div(b)),
                AtomicOp::Mod => Val::Int(a.wrapping_rem(b)),
                AtomicOp::Lt => Val::bool(a < b),
                AtomicOp::Le => Val::bool(a <= b),
                _ => return Err(mismatch()),
            }
        }
        _ => return Err(mismatch()),
    })
}

/// Reads `field` of the object `e` evaluates to.
pub fn field_eval(p: &Program, e: &AExp, fp: Fp, store: &Store, field: FieldId) -> Eval<Val> {
    match atomic_eval(p, e, fp, store)? {
        Val::Obj(op, _) => store
            .get(&Addr::Field(op, field))
            .cloned()
            .ok_or_else(|| Fault::UnboundField(p.field_name(field).to_string())),
        Val::Null => Err(Fault::NullDeref),
        other => Err(Fault::Type(format!("field access on {other}"))),
    }
}

/// The initial configuration for `entry`: the root frame pointer, an empty
/// store and an empty stack.
pub fn inject(p: &Program, entry: MethodId) -> ConcreteConfig {
    ConcreteConfig {
        code: p.method(entry).first,
        fp: Fp(0),
        store: Store::new(),
        kont: Vec::new(),
    }
}

impl<'p> Machine<'p> {
    /// A machine whose root frame pointer belongs to `entry`.
    pub fn new(program: &'p Program, entry: MethodId) -> Self {
        Machine {
            program,
            history: AllocHistory {
                frames: vec![(program.method(entry).first, Vec::new())],
                objects: Vec::new(),
            },
        }
    }

    fn alloc_fp(&mut self, entry: StmtId, site: StmtId, caller: Fp) -> Fp {
        let mut calls = vec![site];
        calls.extend_from_slice(&self.history.frames[caller.0 as usize].1);
        self.history.frames.push((entry, calls));
        Fp(self.history.frames.len() as u32 - 1)
    }

    fn alloc_op(&mut self, site: StmtId, fp: Fp) -> Op {
        self.history.objects.push((site, fp));
        Op(self.history.objects.len() as u32 - 1)
    }

    /// Applies the single rule matching `c`.
    pub fn step(&mut self, c: &ConcreteConfig) -> Step {
        match self.try_step(c) {
            Ok(step) => step,
            Err(fault) => Step::Done(Terminal::Fault(format!(
                "{} at {}",
                fault,
                self.program.stmt_name(c.code)
            ))),
        }
    }

    fn advance(&self, c: &ConcreteConfig) -> Eval<StmtId> {
        self.program
            .next(c.code)
            .ok_or_else(|| Fault::Other("control fell off the end of the method".into()))
    }

    fn label(&self, c: &ConcreteConfig, label: &str) -> Eval<StmtId> {
        let m = self.program.record(c.code).method;
        self.program
            .label_target(m, label)
            .ok_or_else(|| Fault::Other(format!("unknown label {label}")))
    }

    fn try_step(&mut self, c: &ConcreteConfig) -> Eval<Step> {
        let p = self.program;
        let eval = |e: &AExp| atomic_eval(p, e, c.fp, &c.store);
        let goto = |code: StmtId, store: Store| {
            Step::Next(
                ConcreteConfig {
                    code,
                    fp: c.fp,
                    store,
                    kont: c.kont.clone(),
                },
                Action::Eps,
            )
        };
        Ok(match p.stmt(c.code) {
            Stmt::Label(_) | Stmt::Nop | Stmt::Line(_) => goto(self.advance(c)?, c.store.clone()),
            Stmt::Goto(l) => goto(self.label(c, l)?, c.store.clone()),
            Stmt::If { cond, target } => {
                let next = if condition_falls_through(&eval(cond)?) {
                    self.advance(c)?
                } else {
                    self.label(c, target)?
                };
                goto(next, c.store.clone())
            }
            Stmt::Assign { dst, src } => {
                let v = eval(src)?;
                let mut store = c.store.clone();
                store.insert(Addr::Reg(c.fp, *dst), v);
                goto(self.advance(c)?, store)
            }
            Stmt::New { dst, class } => {
                let next = self.advance(c)?;
                let op = self.alloc_op(c.code, c.fp);
                let mut store = c.store.clone();
                store.insert(Addr::Reg(c.fp, *dst), Val::Obj(op, *class));
                for &f in p.fields_of(*class) {
                    store.insert(Addr::Field(op, f), Val::Null);
                }
                goto(next, store)
            }
            Stmt::FieldGet { dst, obj, field } => {
                let v = field_eval(p, obj, c.fp, &c.store, *field)?;
                let mut store = c.store.clone();
                store.insert(Addr::Reg(c.fp, *dst), v);
                goto(self.advance(c)?, store)
            }
            Stmt::FieldPut { obj, field, value } => {
                let op = match eval(obj)? {
                    Val::Obj(op, _) => op,
                    Val::Null => return Err(Fault::NullDeref),
                    other => return Err(Fault::Type(format!("field write on {other}"))),
                };
                let v = eval(value)?;
                let mut store = c.store.clone();
                store.insert(Addr::Field(op, *field), v);
                goto(self.advance(c)?, store)
            }
            Stmt::Invoke(call) => {
                let args = call.args.iter().map(eval).collect::<Eval<Vec<_>>>()?;
                let lookup_class = match call.kind {
                    InvokeKind::Virtual | InvokeKind::Interface => match &args[0] {
                        Val::Obj(_, class) => *class,
                        Val::Null => return Err(Fault::NullDeref),
                        other => return Err(Fault::Type(format!("call on {other}"))),
                    },
                    _ => call.class,
                };
                let target = p
                    .resolve_method(lookup_class, &call.method, call.arity(), call.kind)
                    .map_err(|e| Fault::Other(e.to_string()))?;
                let resume = self.advance(c)?;
                let entry = p.method(target).first;
                let fp = self.alloc_fp(entry, c.code, c.fp);
                let mut store = c.store.clone();
                for (reg, v) in formals(call.kind).zip(args) {
                    store.insert(Addr::Reg(fp, reg), v);
                }
                let frame = Frame::Fun { fp: c.fp, resume };
                let mut kont = c.kont.clone();
                kont.push(frame);
                Step::Next(
                    ConcreteConfig {
                        code: entry,
                        fp,
                        store,
                        kont,
                    },
                    Action::Push(frame),
                )
            }
            Stmt::Return(e) => {
                let v = eval(e)?;
                let mut kont = c.kont.clone();
                match kont.pop() {
                    None => Step::Done(Terminal::Normal(v)),
                    Some(frame @ Frame::Fun { fp, resume }) => {
                        let mut store = c.store.clone();
                        store.insert(Addr::Reg(fp, Reg::Ret), v);
                        Step::Next(
                            ConcreteConfig {
                                code: resume,
                                fp,
                                store,
                                kont,
                            },
                            Action::Pop(frame),
                        )
                    }
                    Some(frame @ Frame::Handle { .. }) => Step::Next(
                        ConcreteConfig {
                            kont,
                            ..c.clone()
                        },
                        Action::Pop(frame),
                    ),
                }
            }
            Stmt::PushHandler { class, label } => {
                let frame = Frame::Handle {
                    class: *class,
                    label: self.label(c, label)?,
                };
                let mut kont = c.kont.clone();
                kont.push(frame);
                Step::Next(
                    ConcreteConfig {
                        code: self.advance(c)?,
                        kont,
                        ..c.clone()
                    },
                    Action::Push(frame),
                )
            }
            Stmt::PopHandler => {
                let mut kont = c.kont.clone();
                match kont.pop() {
                    Some(frame @ Frame::Handle { .. }) => Step::Next(
                        ConcreteConfig {
                            code: self.advance(c)?,
                            kont,
                            ..c.clone()
                        },
                        Action::Pop(frame),
                    ),
                    _ => return Err(Fault::Other("pop-handler without a handler on top".into())),
                }
            }
            Stmt::Throw(e) => {
                let v = eval(e)?;
                let thrown = match v {
                    Val::Obj(_, class) => class,
                    Val::Null => return Err(Fault::NullDeref),
                    other => return Err(Fault::Type(format!("throw of {other}"))),
                };
                let mut kont = c.kont.clone();
                match kont.pop() {
                    None => Step::Done(Terminal::Uncaught(v)),
                    Some(frame @ Frame::Handle { class, label }) if p.is_subclass(thrown, class) => {
                        let mut store = c.store.clone();
                        store.insert(Addr::Reg(c.fp, Reg::Exn), v);
                        Step::Next(
                            ConcreteConfig {
                                code: label,
                                fp: c.fp,
                                store,
                                kont,
                            },
                            Action::Pop(frame),
                        )
                    }
                    Some(frame) => Step::Next(
                        ConcreteConfig {
                            kont,
                            ..c.clone()
                        },
                        Action::Pop(frame),
                    ),
                }
            }
        })
    }
}

/// Registers bound to the arguments of a call, in argument order.
pub fn formals(kind: InvokeKind) -> impl Iterator<Item = Reg> {
    let receiver = kind.has_receiver().then_some(Reg::This);
    receiver.into_iter().chain((0..).map(Reg::P))
}

/// The outcome of running a program for a bounded number of steps.
#[derive(Debug, Clone)]
pub struct Evaluation {
    /// Every configuration visited, in order; the first is the injection.
    pub configs: Vec<ConcreteConfig>,
    /// The action of the transition out of each configuration that stepped.
    pub actions: Vec<Action>,
    pub terminal: Option<Terminal>,
    /// True when the fuel ran out before a terminal was reached.
    pub exhausted: bool,
    pub history: AllocHistory,
}

/// Runs `entry` for at most `fuel` steps.
pub fn evaluate(p: &Program, entry: MethodId, fuel: usize) -> Evaluation {
    let mut machine = Machine::new(p, entry);
    let mut configs = vec![inject(p, entry)];
    let mut actions = Vec::new();
    let mut terminal = None;
    for _ in 0..fuel {
        match machine.step(configs.last().unwrap()) {
            Step::Next(c, a) => {
                configs.push(c);
                actions.push(a);
            }
            Step::Done(t) => {
                terminal = Some(t);
                break;
            }
        }
    }
    Evaluation {
        exhausted: terminal.is_none(),
        configs,
        actions,
        terminal,
        history: machine.history,
    }
}

#[derive(Serialize)]
struct TraceRecord<'a> {
    step: usize,
    stmt: String,
    fp: u32,
    depth: usize,
    action: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    terminal: Option<&'a str>,
}

fn frame_label(p: &Program, f: &Frame) -> String {
    match f {
        Frame::Fun { fp, resume } => format!("fun({},{})", fp.0, p.stmt_name(*resume)),
        Frame::Handle { class, label } => {
            format!("handle({},{})", p.class_name(*class), p.stmt_name(*label))
        }
    }
}

/// Writes one JSON record per configuration: statement, frame pointer,
/// stack depth and the action taken out of it. The last record carries the
/// terminal kind if one was reached.
pub fn write_trace(p: &Program, run: &Evaluation, mut out: impl Write) -> io::Result<()> {
    for (i, c) in run.configs.iter().enumerate() {
        let action = match run.actions.get(i) {
            Some(Action::Eps) => "eps".to_string(),
            Some(Action::Push(f)) => format!("push:{}", frame_label(p, f)),
            Some(Action::Pop(f)) => format!("pop:{}", frame_label(p, f)),
            None => "none".to_string(),
        };
        let terminal = match (&run.terminal, i + 1 == run.configs.len()) {
            (Some(Terminal::Normal(_)), true) => Some("normal"),
            (Some(Terminal::Uncaught(_)), true) => Some("uncaught"),
            (Some(Terminal::Fault(_)), true) => Some("fault"),
            _ => None,
        };
        let rec = TraceRecord {
            step: i,
            stmt: p.stmt_name(c.code),
            fp: c.fp.0,
            depth: c.kont.len(),
            action,
            terminal,
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
