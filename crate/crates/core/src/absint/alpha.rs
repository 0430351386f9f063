use super::*;
use crate::concrete::{Addr, AllocHistory, ConcreteConfig, Fp, Frame, Op, Store, Val};

/// The abstraction map for one concrete run. Pointers are named by the
/// allocation sites and call strings recorded in the run's history.
#[derive(Debug, Clone, Copy)]
pub struct Abstraction<'a> {
    pub policy: Policy,
    pub history: &'a AllocHistory,
}

impl Abstraction<'_> {
    pub fn fp(&self, fp: Fp) -> Context {
        let (entry, calls) = &self.history.frames[fp.0 as usize];
        Context {
            site: *entry,
            history: truncate(calls.clone(), self.policy.k()),
        }
    }

    pub fn op(&self, op: Op) -> Context {
        let (site, fp) = self.history.objects[op.0 as usize];
        let calls = &self.history.frames[fp.0 as usize].1;
        Context {
            site,
            history: truncate(calls.clone(), self.policy.k()),
        }
    }
}

pub fn alpha_val(a: &Abstraction, v: &Val) -> AVal {
    match v {
        Val::Obj(op, c) => AVal::Obj(a.op(*op), *c),
        Val::Int(_) => AVal::Int,
        Val::Str(_) => AVal::Str,
        Val::True => AVal::True,
        Val::False => AVal::False,
        Val::Null => AVal::Null,
        Val::Void => AVal::Void,
    }
}

pub fn alpha_addr(a: &Abstraction, addr: &Addr) -> AAddr {
    match addr {
        Addr::Reg(fp, r) => AAddr::Reg(a.fp(*fp), *r),
        Addr::Field(op, f) => AAddr::Field(a.op(*op), *f),
    }
}

pub fn alpha_store(a: &Abstraction, store: &Store) -> AStore {
    let mut out = AStore::new();
    for (addr, v) in store {
        out.join(alpha_addr(a, addr), [alpha_val(a, v)]);
    }
    out
}

pub fn alpha_frame(a: &Abstraction, f: &Frame) -> AFrame {
    match f {
        Frame::Fun { fp, resume } => AFrame::Fun {
            fp: a.fp(*fp),
            resume: *resume,
        },
        Frame::Handle { class, label } => AFrame::Handle {
            class: *class,
            label: *label,
        },
    }
}

/// Abstracts a configuration into a control state and a stack (bottom
/// first).
pub fn alpha(a: &Abstraction, c: &ConcreteConfig) -> (ControlState, Vec<AFrame>) {
    (
        ControlState {
            code: c.code,
            fp: a.fp(c.fp),
            store: alpha_store(a, &c.store),
        },
        c.kont.iter().map(|f| alpha_frame(a, f)).collect(),
    )
}
