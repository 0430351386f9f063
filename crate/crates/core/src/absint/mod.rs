//! The abstract machine: finite frame and object pointers, a store of value
//! sets, and a nondeterministic stepper whose stack is left to the caller.
//!
//! Integers and strings are collapsed to the tokens [`AVal::Int`] and
//! [`AVal::Str`]. Pointers are [`Context`]s chosen by an allocation
//! [`Policy`].

mod alpha;
mod step;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use crate::ir::{AExp, AtomicOp, ClassId, FieldId, MethodId, Program, Reg, StmtId};

pub use alpha::{alpha, alpha_addr, alpha_frame, alpha_store, alpha_val, Abstraction};
pub use step::{abs_step, needs_top, AAction, StepOutput, Target, Transition};

/// Context-sensitivity of pointer allocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Policy {
    ZeroCfa,
    OneCfa,
    KCfa(usize),
}

impl Policy {
    /// Length of the call-string suffix kept in contexts.
    pub fn k(self) -> usize {
        match self {
            Policy::ZeroCfa => 0,
            Policy::OneCfa => 1,
            Policy::KCfa(k) => k,
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Policy::ZeroCfa => f.write_str("0cfa"),
            Policy::OneCfa => f.write_str("1cfa"),
            Policy::KCfa(k) => write!(f, "kcfa:{k}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown policy '{0}', expected 0cfa, 1cfa or kcfa:K")]
pub struct PolicyError(String);

impl FromStr for Policy {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "0cfa" => Ok(Policy::ZeroCfa),
            "1cfa" => Ok(Policy::OneCfa),
            _ => s
                .strip_prefix("kcfa:")
                .and_then(|k| k.parse().ok())
                .map(Policy::KCfa)
                .ok_or_else(|| PolicyError(s.to_string())),
        }
    }
}

/// An abstract frame or object pointer: an allocation site plus a bounded
/// call string, most recent call site first.
///
/// Frame pointers use the callee's entry statement as the site, so under
/// 0CFA every invocation of a method shares one frame. Object pointers use
/// the `new` statement and inherit the call string of the allocating frame.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Context {
    pub site: StmtId,
    pub history: Vec<StmtId>,
}

impl Context {
    pub fn display(&self, p: &Program) -> String {
        let mut s = p.stmt_name(self.site);
        if !self.history.is_empty() {
            let h: Vec<String> = self.history.iter().map(|&h| p.stmt_name(h)).collect();
            s.push('<');
            s.push_str(&h.join(","));
            s.push('>');
        }
        s
    }
}

fn truncate(mut history: Vec<StmtId>, k: usize) -> Vec<StmtId> {
    history.truncate(k);
    history
}

/// The frame pointer of the entry method.
pub fn root_context(p: &Program, entry: MethodId) -> Context {
    Context {
        site: p.method(entry).first,
        history: Vec::new(),
    }
}

/// Frame pointer for a call from `caller` at statement `call_site` into the
/// method starting at `entry`.
pub fn alloc_fp(policy: Policy, entry: StmtId, call_site: StmtId, caller: &Context) -> Context {
    let mut history = Vec::with_capacity(caller.history.len() + 1);
    history.push(call_site);
    history.extend_from_slice(&caller.history);
    Context {
        site: entry,
        history: truncate(history, policy.k()),
    }
}

/// Object pointer for a `new` at `site` running under frame `fp`.
pub fn alloc_op(policy: Policy, site: StmtId, fp: &Context) -> Context {
    Context {
        site,
        history: truncate(fp.history.clone(), policy.k()),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AVal {
    Obj(Context, ClassId),
    Int,
    Str,
    True,
    False,
    Null,
    Void,
}

impl AVal {
    fn bool(b: bool) -> AVal {
        if b {
            AVal::True
        } else {
            AVal::False
        }
    }

    /// Type token used by the points-to metrics.
    pub fn type_name<'p>(&self, p: &'p Program) -> &'p str {
        match self {
            AVal::Obj(_, c) => p.class_name(*c),
            AVal::Int => "int",
            AVal::Str => "string",
            AVal::True | AVal::False => "boolean",
            AVal::Null => "null",
            AVal::Void => "void",
        }
    }
}

pub type AValue = BTreeSet<AVal>;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AAddr {
    Reg(Context, Reg),
    Field(Context, FieldId),
}

/// A store of value sets. Absent addresses map to the empty set; no
/// address is ever bound to an empty set.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AStore(BTreeMap<AAddr, AValue>);

impl AStore {
    pub fn new() -> Self {
        AStore::default()
    }

    pub fn get(&self, a: &AAddr) -> Option<&AValue> {
        self.0.get(a)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&AAddr, &AValue)> {
        self.0.iter()
    }

    pub fn contains(&self, a: &AAddr) -> bool {
        self.0.contains_key(a)
    }

    /// Joins `vals` into the binding of `a`. Returns whether it grew.
    pub fn join(&mut self, a: AAddr, vals: impl IntoIterator<Item = AVal>) -> bool {
        let mut vals = vals.into_iter().peekable();
        if vals.peek().is_none() {
            return false;
        }
        let slot = self.0.entry(a).or_default();
        let before = slot.len();
        slot.extend(vals);
        slot.len() > before
    }

    /// Pointwise union. Returns whether `self` grew.
    pub fn join_store(&mut self, other: &AStore) -> bool {
        let mut grew = false;
        for (a, v) in &other.0 {
            grew |= self.join(a.clone(), v.iter().cloned());
        }
        grew
    }

    /// Pointwise inclusion.
    pub fn leq(&self, other: &AStore) -> bool {
        self.0
            .iter()
            .all(|(a, v)| other.0.get(a).is_some_and(|w| v.is_subset(w)))
    }

    /// Bound register addresses of frame `fp`.
    pub fn regs_of<'a>(&'a self, fp: &Context) -> impl Iterator<Item = &'a AAddr> {
        let lo = AAddr::Reg(fp.clone(), Reg::This);
        let hi = AAddr::Reg(fp.clone(), Reg::P(u32::MAX));
        self.0.range(lo..=hi).map(|(a, _)| a)
    }

    /// Bound field addresses of object `op`.
    pub fn fields_of<'a>(&'a self, op: &Context) -> impl Iterator<Item = &'a AAddr> {
        let lo = AAddr::Field(op.clone(), FieldId(0));
        let hi = AAddr::Field(op.clone(), FieldId(u32::MAX));
        self.0.range(lo..=hi).map(|(a, _)| a)
    }

    /// Keeps only the addresses `keep` accepts.
    pub fn restrict(&self, keep: impl Fn(&AAddr) -> bool) -> AStore {
        AStore(
            self.0
                .iter()
                .filter(|(a, _)| keep(a))
                .map(|(a, v)| (a.clone(), v.clone()))
                .collect(),
        )
    }
}

impl FromIterator<(AAddr, AValue)> for AStore {
    fn from_iter<I: IntoIterator<Item = (AAddr, AValue)>>(iter: I) -> Self {
        let mut s = AStore::new();
        for (a, v) in iter {
            s.join(a, v);
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AFrame {
    Fun { fp: Context, resume: StmtId },
    Handle { class: ClassId, label: StmtId },
}

impl AFrame {
    pub fn display(&self, p: &Program) -> String {
        match self {
            AFrame::Fun { fp, resume } => {
                format!("fun({},{})", fp.display(p), p.stmt_name(*resume))
            }
            AFrame::Handle { class, label } => {
                format!("handle({},{})", p.class_name(*class), p.stmt_name(*label))
            }
        }
    }
}

/// A pushdown control state: code, frame pointer and store. The stack is
/// not part of it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ControlState {
    pub code: StmtId,
    pub fp: Context,
    pub store: AStore,
}

/// The initial control state for `entry`.
pub fn abs_inject(p: &Program, entry: MethodId) -> ControlState {
    ControlState {
        code: p.method(entry).first,
        fp: root_context(p, entry),
        store: AStore::new(),
    }
}

/// Evaluates an atomic expression to a value set. An unbound register
/// yields the empty set, which kills any transition that needs it.
pub fn abs_atomic_eval(p: &Program, e: &AExp, fp: &Context, store: &AStore) -> AValue {
    match e {
        AExp::True => [AVal::True].into(),
        AExp::False => [AVal::False].into(),
        AExp::Null => [AVal::Null].into(),
        AExp::Void => [AVal::Void].into(),
        AExp::Int(_) => [AVal::Int].into(),
        AExp::Str(_) => [AVal::Str].into(),
        AExp::Reg(r) => store
            .get(&AAddr::Reg(fp.clone(), *r))
            .cloned()
            .unwrap_or_default(),
        AExp::InstanceOf(e, class) => abs_atomic_eval(p, e, fp, store)
            .iter()
            .map(|v| match v {
                AVal::Obj(_, c) => AVal::bool(p.is_subclass(*c, *class)),
                _ => AVal::False,
            })
            .collect(),
        AExp::Op(op, args) => {
            let vals: Vec<AValue> = args.iter().map(|a| abs_atomic_eval(p, a, fp, store)).collect();
            let mut out = AValue::new();
            match vals.as_slice() {
                [a] => {
                    for x in a {
                        abs_op(*op, &[x], &mut out);
                    }
                }
                [a, b] => {
                    for x in a {
                        for y in b {
                            abs_op(*op, &[x, y], &mut out);
                        }
                    }
                }
                _ => {}
            }
            out
        }
    }
}

fn abs_op(op: AtomicOp, vals: &[&AVal], out: &mut AValue) {
    use AVal::*;
    let both = [True, False];
    match (op, vals) {
        (AtomicOp::Eq, [a, b]) => match (a, b) {
            (Int, Int) | (Str, Str) => out.extend(both),
            (Obj(..), Obj(..)) if a == b => out.extend(both),
            _ if a == b => {
                out.insert(True);
            }
            _ => {
                out.insert(False);
            }
        },
        (AtomicOp::Not, [True]) => {
            out.insert(False);
        }
        (AtomicOp::Not, [False]) => {
            out.insert(True);
        }
        (AtomicOp::And | AtomicOp::Or, [a @ (True | False), b @ (True | False)]) => {
            let (a, b) = (**a == True, **b == True);
            out.insert(AVal::bool(if op == AtomicOp::And { a && b } else { a || b }));
        }
        (AtomicOp::StringConcat, [Str | Int, Str | Int]) => {
            out.insert(Str);
        }
        (AtomicOp::Lt | AtomicOp::Le, [Int, Int]) => out.extend(both),
        (AtomicOp::Add | AtomicOp::Sub | AtomicOp::Mul | AtomicOp::Div | AtomicOp::Mod, [Int, Int]) => {
            out.insert(Int);
        }
        _ => {}
    }
}

/// Union of `field` over every object `e` may evaluate to.
pub fn abs_field_eval(p: &Program, e: &AExp, fp: &Context, store: &AStore, field: FieldId) -> AValue {
    let mut out = AValue::new();
    for v in abs_atomic_eval(p, e, fp, store) {
        if let AVal::Obj(op, _) = v {
            if let Some(vals) = store.get(&AAddr::Field(op, field)) {
                out.extend(vals.iter().cloned());
            }
        }
    }
    out
}
